#include "scmm/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "scmm/error.hpp"

namespace scmm {
namespace {

void check_stochastic(const Matrix& m, const std::string& what) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if ((m.row(r).array() < 0).any() || std::abs(m.row(r).sum() - 1.0) > 1e-9) {
      throw Error(ErrorKind::config, what + " row " + std::to_string(r) + " is not a distribution");
    }
  }
}

LabelId draw(const Matrix& m, LabelId row, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double x = u(rng);
  double acc = 0.0;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    acc += m(row, c);
    if (x < acc) return static_cast<LabelId>(c);
  }
  return static_cast<LabelId>(m.cols() - 1);
}

nlohmann::ordered_json matrix_json(const Matrix& m) {
  auto out = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(row);
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::config, msg); };
  if (train_size < 1 || valid_size < 1 || test_size < 1) fail("split sizes must be positive");
  if (min_length < 1 || max_length < min_length) fail("need 1 <= min_length <= max_length");
  if (!(entity_density > 0 && entity_density < 1)) fail("entity_density must lie in (0, 1)");
  if (!(continue_prob >= 0 && continue_prob < 1)) fail("continue_prob must lie in [0, 1)");
  if (reliabilities.empty() && !emissions) fail("need at least one LF");
  for (double r : reliabilities) {
    if (!(r >= 0 && r <= 1)) fail("reliabilities must lie in [0, 1]");
  }
  if (confusion_lf >= static_cast<int>(reliabilities.size())) fail("confusion_lf out of range");
  if (confusion_lf >= 0) {
    if (entities.size() < 2) fail("a confusion block needs two entity types");
    if (!(confusion >= 0 && confusion <= reliabilities[static_cast<std::size_t>(confusion_lf)])) {
      fail("confusion must lie in [0, reliability of the confused LF]");
    }
  }
  if (!(false_positive >= 0 && false_positive <= 1)) fail("false_positive must lie in [0, 1]");
  if (embedding_dim < 1) fail("embedding_dim must be positive");
  if (!(embedding_noise >= 0)) fail("embedding_noise must be non-negative");
}

Matrix default_transition(const LabelSet& labels, double entity_density, double continue_prob) {
  const int L = labels.size();
  const int E = labels.num_entities();
  Matrix m = Matrix::Zero(L, L);
  m(LabelSet::kOutside, LabelSet::kOutside) = 1.0 - entity_density;
  for (int e = 0; e < E; ++e) m(LabelSet::kOutside, labels.begin_of(e)) = entity_density / E;
  for (int e = 0; e < E; ++e) {
    for (LabelId from : {labels.begin_of(e), labels.inside_of(e)}) {
      m(from, labels.inside_of(e)) = continue_prob;
      m(from, LabelSet::kOutside) = 0.8 * (1.0 - continue_prob);
      for (int f = 0; f < E; ++f) m(from, labels.begin_of(f)) += 0.2 * (1.0 - continue_prob) / E;
    }
  }
  return m;
}

Tensor3 default_emissions(const LabelSet& labels, const SynthConfig& config) {
  const int L = labels.size();
  const auto K = config.reliabilities.size();
  Tensor3 out = zeros3(static_cast<int>(K), L, L);
  for (std::size_t k = 0; k < K; ++k) {
    const double rho = config.reliabilities[k];
    Matrix& m = out[k];
    const double fp = config.false_positive * (1.0 - rho);
    m(LabelSet::kOutside, LabelSet::kOutside) = 1.0 - fp;
    for (int j = 1; j < L; ++j) m(LabelSet::kOutside, j) = fp / (L - 1);
    for (int i = 1; i < L; ++i) {
      m(i, i) = rho;
      m(i, LabelSet::kOutside) = (L > 2 ? 0.7 : 1.0) * (1.0 - rho);
      for (int j = 1; j < L; ++j) {
        if (j != i) m(i, j) = 0.3 * (1.0 - rho) / (L - 2);
      }
    }
    if (static_cast<int>(k) == config.confusion_lf) {
      const std::pair<LabelId, LabelId> pairs[] = {{labels.begin_of(0), labels.begin_of(1)},
                                                   {labels.inside_of(0), labels.inside_of(1)}};
      for (auto [from, to] : pairs) {
        m(from, from) -= config.confusion;
        m(from, to) += config.confusion;
      }
    }
  }
  return out;
}

SynthCorpus generate_corpus(const SynthConfig& config) {
  config.validate();
  LabelSet labels(config.entities);
  const int L = labels.size();
  const Matrix trans = config.transition ? *config.transition
                                         : default_transition(labels, config.entity_density, config.continue_prob);
  if (trans.rows() != L || trans.cols() != L) throw Error(ErrorKind::config, "transition must be L x L");
  check_stochastic(trans, "transition");
  // Gold must be valid strict BIO: I-e only after B-e or I-e, never first.
  for (int e = 0; e < labels.num_entities(); ++e) {
    const LabelId in = labels.inside_of(e);
    for (LabelId from = 0; from < L; ++from) {
      if (from != labels.begin_of(e) && from != in && trans(from, in) != 0.0) {
        throw Error(ErrorKind::config, "transition " + labels.name(from) + " -> " + labels.name(in) + " breaks BIO");
      }
    }
  }
  const Tensor3 emis = config.emissions ? *config.emissions : default_emissions(labels, config);
  for (std::size_t k = 0; k < emis.size(); ++k) {
    if (emis[k].rows() != L || emis[k].cols() != L) throw Error(ErrorKind::config, "emissions must be K x L x L");
    check_stochastic(emis[k], "emission " + std::to_string(k));
  }
  const auto K = emis.size();
  std::vector<std::string> lf_names;
  for (std::size_t k = 0; k < K; ++k) lf_names.push_back("lf" + std::to_string(k));

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int d = config.embedding_dim;
  // anchors[2 * label + parity]
  std::vector<Vector> anchors(static_cast<std::size_t>(2 * L));
  for (auto& a : anchors) {
    a.resize(d);
    for (int i = 0; i < d; ++i) a(i) = normal(rng);
  }

  SynthCorpus corpus{Dataset(labels), trans, emis};
  const std::pair<const char*, int> sizes[] = {
      {"train", config.train_size}, {"valid", config.valid_size}, {"test", config.test_size}};
  std::uniform_int_distribution<int> length_dist(config.min_length, config.max_length);
  std::uniform_int_distribution<int> vocab(0, 999);
  for (auto [name, count] : sizes) {
    Split split;
    split.name = name;
    for (int m = 0; m < count; ++m) {
      const int T = length_dist(rng);
      Instance inst;
      char id[32];
      std::snprintf(id, sizeof id, "%s-%06d", name, m);
      inst.sentence.id = id;
      std::vector<LabelId> y(static_cast<std::size_t>(T));
      LabelId prev = LabelSet::kOutside;
      for (int t = 0; t < T; ++t) {
        y[static_cast<std::size_t>(t)] = draw(trans, prev, rng);
        prev = y[static_cast<std::size_t>(t)];
        inst.sentence.tokens.push_back("w" + std::to_string(vocab(rng)));
      }
      inst.weak.lf_names = lf_names;
      inst.weak.obs.assign(K, std::vector<LabelId>(static_cast<std::size_t>(T)));
      for (std::size_t k = 0; k < K; ++k) {
        for (int t = 0; t < T; ++t) inst.weak.obs[k][static_cast<std::size_t>(t)] = draw(emis[k], y[static_cast<std::size_t>(t)], rng);
      }
      EmbeddingSequence emb;
      emb.vectors = Matrix::Zero(T + 1, d);
      for (int t = 0; t < T; ++t) {
        const Vector& a = anchors[static_cast<std::size_t>(2 * y[static_cast<std::size_t>(t)] + (t % 2))];
        for (int i = 0; i < d; ++i) emb.vectors(t + 1, i) = a(i) + config.embedding_noise * normal(rng);
      }
      emb.vectors.row(0) = emb.vectors.bottomRows(T).colwise().mean();
      // Stored as float32 on disk; keep the in-memory corpus identical.
      emb.vectors = emb.vectors.cast<float>().cast<double>();
      inst.sentence.gold = std::move(y);
      inst.embedding = std::move(emb);
      split.instances.push_back(std::move(inst));
    }
    corpus.dataset.add_split(std::move(split));
  }
  return corpus;
}

void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const LabelSet& labels = corpus.dataset.labels();
  for (const auto& split : corpus.dataset.splits()) {
    write_split(dir / (split.name + ".jsonl"), split, labels);
    write_embeddings(dir / (split.name + ".emb"), split);
  }
  nlohmann::ordered_json j;
  j["labels"] = labels.labels();
  j["lf_names"] = corpus.dataset.lf_names();
  j["transition"] = matrix_json(corpus.transition);
  auto emis = nlohmann::ordered_json::array();
  for (const auto& m : corpus.emissions) emis.push_back(matrix_json(m));
  j["emissions"] = emis;
  std::ofstream out(dir / "phi_gen.json");
  out << j.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::io, "cannot write " + (dir / "phi_gen.json").string());
}

}  // namespace scmm
