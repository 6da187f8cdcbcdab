#include "scmm/report.hpp"

#include <sstream>

#include <nlohmann/json.hpp>

#include "scmm/error.hpp"
#include "scmm/parallel.hpp"

namespace scmm {

ReliabilityReport reliability_report(const SparseChmm& model, const Split& split, int threads) {
  const int K = model.shape().active_lfs;
  if (K < 2) throw Error(ErrorKind::domain, "reliability report needs at least two LFs");
  if (!split.has_gold()) throw Error(ErrorKind::schema, "split '" + split.name + "' has no gold labels");
  if (!split.has_embeddings()) throw Error(ErrorKind::schema, "split '" + split.name + "' has no embeddings");
  if (split.size() == 0) throw Error(ErrorKind::schema, "split '" + split.name + "' is empty");
  const LabelSet& labels = model.labels();
  const int E = labels.num_entities();

  std::vector<Matrix> scaled(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    scaled[i] = predict_reliability(split.instances[i].embedding->sentence(), model.reliability_head(),
                                    model.hyper(), labels)
                    .scaled;
  });
  Matrix mean = Matrix::Zero(scaled.front().rows(), scaled.front().cols());
  for (const auto& s : scaled) mean += s;
  mean /= static_cast<double>(split.size());

  std::vector<std::vector<LabelId>> gold;
  gold.reserve(split.size());
  for (const auto& inst : split.instances) gold.push_back(*inst.sentence.gold);

  ReliabilityReport report;
  report.split = split.name;
  report.entities = labels.entities();
  std::vector<double> rel, f1;
  for (int k = 0; k < K; ++k) {
    LfReliability lf;
    lf.name = split.instances.front().weak.lf_names[static_cast<std::size_t>(k)];
    lf.outside = mean(k, LabelSet::kOutside);
    for (int e = 0; e < E; ++e) {
      lf.per_entity.push_back(0.5 * (mean(k, labels.begin_of(e)) + mean(k, labels.inside_of(e))));
      lf.mean += lf.per_entity.back() / E;
    }
    std::vector<std::vector<LabelId>> pred;
    pred.reserve(split.size());
    for (const auto& inst : split.instances) pred.push_back(inst.weak.obs[static_cast<std::size_t>(k)]);
    lf.f1 = entity_prf(gold, pred, labels);
    rel.push_back(lf.mean);
    f1.push_back(lf.f1.f1);
    report.lfs.push_back(std::move(lf));
  }
  try {
    report.pearson_r = pearson(rel, f1);
  } catch (const Error&) {
    report.pearson_r.reset();
  }
  report.wxor = model.wxor();
  return report;
}

std::string to_json(const ReliabilityReport& report) {
  using json = nlohmann::ordered_json;
  json j;
  j["split"] = report.split;
  j["entities"] = report.entities;
  json lfs = json::array();
  for (const auto& lf : report.lfs) {
    json per = json::object();
    for (std::size_t e = 0; e < report.entities.size(); ++e) per[report.entities[e]] = lf.per_entity[e];
    lfs.push_back(json{{"name", lf.name},
                       {"reliability", per},
                       {"reliability_outside", lf.outside},
                       {"reliability_mean", lf.mean},
                       {"precision", lf.f1.precision},
                       {"recall", lf.f1.recall},
                       {"f1", lf.f1.f1}});
  }
  j["lfs"] = lfs;
  j["pearson_r"] = report.pearson_r ? json(*report.pearson_r) : json(nullptr);
  if (report.wxor) {
    auto tensor = [](const Tensor3& t) {
      json out = json::array();
      for (const auto& m : t) {
        json rows = json::array();
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          json row = json::array();
          for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
          rows.push_back(row);
        }
        out.push_back(rows);
      }
      return out;
    };
    j["wxor"] = json{{"aggregated", tensor(report.wxor->aggregated)},
                     {"normalized", tensor(report.wxor->normalized)}};
  }
  return j.dump(2);
}

std::string to_csv(const ReliabilityReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "lf";
  for (const auto& e : report.entities) out << ",reliability_" << e;
  out << ",reliability_outside,reliability_mean,precision,recall,f1\n";
  for (const auto& lf : report.lfs) {
    out << lf.name;
    for (double v : lf.per_entity) out << ',' << v;
    out << ',' << lf.outside << ',' << lf.mean << ',' << lf.f1.precision << ',' << lf.f1.recall << ','
        << lf.f1.f1 << '\n';
  }
  return out.str();
}

}  // namespace scmm
