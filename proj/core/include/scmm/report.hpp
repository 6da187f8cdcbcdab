#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scmm/data.hpp"
#include "scmm/eval.hpp"
#include "scmm/model.hpp"

namespace scmm {

struct LfReliability {
  std::string name;
  std::vector<double> per_entity;  // corpus-mean Ã over the B/I columns of each entity
  double outside = 0.0;            // corpus-mean Ã of column O
  double mean = 0.0;               // mean over entities
  MetricReport f1;                 // the LF's own annotations against gold
};

struct ReliabilityReport {
  std::string split;
  std::vector<std::string> entities;
  std::vector<LfReliability> lfs;
  std::optional<double> pearson_r;  // unset when either side has zero variance
  std::optional<WxorTable> wxor;
};

/// Needs gold labels and at least two LFs.
ReliabilityReport reliability_report(const SparseChmm& model, const Split& split, int threads);

std::string to_json(const ReliabilityReport& report);
std::string to_csv(const ReliabilityReport& report);

}  // namespace scmm
