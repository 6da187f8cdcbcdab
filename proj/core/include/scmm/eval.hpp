#pragma once

#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scmm/data.hpp"
#include "scmm/labels.hpp"

namespace scmm {

struct EntitySpan {
  int start = 0;  // inclusive
  int end = 0;    // exclusive
  int entity = 0;

  auto operator<=>(const EntitySpan&) const = default;
};

/// conll chunking: a chunk opens at B-e or at an I-e that does not continue an
/// e chunk, and extends over the following I-e tokens.
std::vector<EntitySpan> decode_entities(const std::vector<LabelId>& seq, const LabelSet& labels);
std::vector<LabelId> encode_entities(const std::vector<EntitySpan>& spans, int length,
                                     const LabelSet& labels);

struct EntityCounts {
  long true_positive = 0;
  long predicted = 0;
  long gold = 0;
};

struct MetricReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long true_positive = 0;
  long predicted = 0;
  long gold = 0;
  std::map<std::string, EntityCounts> per_entity;
};

MetricReport metrics_from_counts(long true_positive, long predicted, long gold);

/// Exact-match micro-averaged entity scores over a corpus.
MetricReport entity_prf(const std::vector<std::vector<LabelId>>& gold,
                        const std::vector<std::vector<LabelId>>& predicted, const LabelSet& labels);

struct VoteOptions {
  bool count_outside = false;  // let O observations vote
  int active_lfs = -1;         // all rows when negative
};

/// Per-token plurality label; ties are broken uniformly at random with `rng`
/// and tokens without any vote get O.
std::vector<LabelId> majority_vote(const WeakAnnotationMatrix& weak, int num_labels,
                                   std::mt19937_64& rng, VoteOptions options = {});

/// Throws a domain error when either input has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace scmm
