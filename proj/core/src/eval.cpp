#include "scmm/eval.hpp"

#include <cmath>
#include <set>
#include <tuple>

#include "scmm/error.hpp"

namespace scmm {

std::vector<EntitySpan> decode_entities(const std::vector<LabelId>& seq, const LabelSet& labels) {
  std::vector<EntitySpan> spans;
  int open = -1;  // start of the current chunk, -1 when none
  int open_entity = -1;
  const int T = static_cast<int>(seq.size());
  for (int t = 0; t < T; ++t) {
    const LabelId l = seq[static_cast<std::size_t>(t)];
    const bool continues = labels.is_inside(l) && open >= 0 && labels.entity_of(l) == open_entity;
    if (continues) continue;
    if (open >= 0) spans.push_back({open, t, open_entity});
    if (l == LabelSet::kOutside) {
      open = -1;
      open_entity = -1;
    } else {
      open = t;
      open_entity = labels.entity_of(l);
    }
  }
  if (open >= 0) spans.push_back({open, T, open_entity});
  return spans;
}

std::vector<LabelId> encode_entities(const std::vector<EntitySpan>& spans, int length,
                                     const LabelSet& labels) {
  std::vector<LabelId> seq(static_cast<std::size_t>(length), LabelSet::kOutside);
  for (const auto& s : spans) {
    if (s.start < 0 || s.end > length || s.start >= s.end) {
      throw Error(ErrorKind::domain, "span out of range");
    }
    seq[static_cast<std::size_t>(s.start)] = labels.begin_of(s.entity);
    for (int t = s.start + 1; t < s.end; ++t) seq[static_cast<std::size_t>(t)] = labels.inside_of(s.entity);
  }
  return seq;
}

MetricReport metrics_from_counts(long true_positive, long predicted, long gold) {
  MetricReport r;
  r.true_positive = true_positive;
  r.predicted = predicted;
  r.gold = gold;
  r.precision = predicted > 0 ? static_cast<double>(true_positive) / predicted : 0.0;
  r.recall = gold > 0 ? static_cast<double>(true_positive) / gold : 0.0;
  const double denom = r.precision + r.recall;
  r.f1 = denom > 0 ? 2.0 * r.precision * r.recall / denom : 0.0;
  return r;
}

MetricReport entity_prf(const std::vector<std::vector<LabelId>>& gold,
                        const std::vector<std::vector<LabelId>>& predicted, const LabelSet& labels) {
  if (gold.size() != predicted.size()) {
    throw Error(ErrorKind::dimension, "entity_prf: " + std::to_string(gold.size()) +
                                          " gold sequences vs " + std::to_string(predicted.size()) +
                                          " predictions");
  }
  std::vector<EntityCounts> per(static_cast<std::size_t>(labels.num_entities()));
  for (std::size_t m = 0; m < gold.size(); ++m) {
    if (gold[m].size() != predicted[m].size()) {
      throw Error(ErrorKind::dimension, "entity_prf: length mismatch in sentence " + std::to_string(m));
    }
    const auto g = decode_entities(gold[m], labels);
    const auto p = decode_entities(predicted[m], labels);
    const std::set<EntitySpan> gold_set(g.begin(), g.end());
    for (const auto& s : g) ++per[static_cast<std::size_t>(s.entity)].gold;
    for (const auto& s : p) {
      auto& c = per[static_cast<std::size_t>(s.entity)];
      ++c.predicted;
      if (gold_set.count(s)) ++c.true_positive;
    }
  }
  long tp = 0, np = 0, ng = 0;
  for (const auto& c : per) {
    tp += c.true_positive;
    np += c.predicted;
    ng += c.gold;
  }
  MetricReport report = metrics_from_counts(tp, np, ng);
  for (int e = 0; e < labels.num_entities(); ++e) {
    report.per_entity[labels.entities()[static_cast<std::size_t>(e)]] = per[static_cast<std::size_t>(e)];
  }
  return report;
}

std::vector<LabelId> majority_vote(const WeakAnnotationMatrix& weak, int num_labels,
                                   std::mt19937_64& rng, VoteOptions options) {
  const int K = options.active_lfs < 0 ? weak.num_lfs() : std::min(options.active_lfs, weak.num_lfs());
  std::vector<LabelId> out(static_cast<std::size_t>(weak.length()), LabelSet::kOutside);
  std::vector<int> votes(static_cast<std::size_t>(num_labels));
  std::vector<LabelId> tied;
  for (int t = 0; t < weak.length(); ++t) {
    std::fill(votes.begin(), votes.end(), 0);
    for (int k = 0; k < K; ++k) {
      const LabelId l = weak.at(k, t);
      if (l == LabelSet::kOutside && !options.count_outside) continue;
      ++votes[static_cast<std::size_t>(l)];
    }
    int best = 0;
    for (int v : votes) best = std::max(best, v);
    if (best == 0) continue;
    tied.clear();
    for (LabelId l = 0; l < num_labels; ++l) {
      if (votes[static_cast<std::size_t>(l)] == best) tied.push_back(l);
    }
    if (tied.size() == 1) {
      out[static_cast<std::size_t>(t)] = tied.front();
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, tied.size() - 1);
      out[static_cast<std::size_t>(t)] = tied[pick(rng)];
    }
  }
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::dimension, "pearson: length mismatch");
  if (a.size() < 2) throw Error(ErrorKind::domain, "pearson: need at least two points");
  const double n = static_cast<double>(a.size());
  double mean_a = 0, mean_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0, var_a = 0, var_b = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a <= 0.0 || var_b <= 0.0) {
    throw Error(ErrorKind::domain, "pearson: correlation undefined for zero-variance input");
  }
  return cov / std::sqrt(var_a * var_b);
}

}  // namespace scmm
