#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scmm/data.hpp"
#include "scmm/labels.hpp"
#include "scmm/tensor.hpp"

namespace scmm {

struct SynthConfig {
  std::vector<std::string> entities{"PER", "LOC"};
  int train_size = 2000;
  int valid_size = 300;
  int test_size = 300;
  int min_length = 8;
  int max_length = 16;

  // Gold chain. Row O doubles as the distribution of the first label.
  std::optional<Matrix> transition;
  double entity_density = 0.15;   // P(O -> B-*)
  double continue_prob = 0.55;    // P(B/I-e -> I-e)

  // LF k reports the true non-O label with probability reliabilities[k].
  std::vector<double> reliabilities{0.9, 0.8, 0.65, 0.5, 0.35, 0.2};
  std::optional<Tensor3> emissions;
  int confusion_lf = 2;        // this LF maps part of entity 0 onto entity 1; -1 for none
  double confusion = 0.3;
  double false_positive = 0.15;  // scaled by (1 - reliability)

  int embedding_dim = 32;
  double embedding_noise = 0.5;
  std::uint64_t seed = 7;

  void validate() const;
};

Matrix default_transition(const LabelSet& labels, double entity_density, double continue_prob);
Tensor3 default_emissions(const LabelSet& labels, const SynthConfig& config);

struct SynthCorpus {
  Dataset dataset;  // splits "train", "valid", "test" with gold and embeddings
  Matrix transition;
  Tensor3 emissions;  // Φ_gen, K x L x L
};

SynthCorpus generate_corpus(const SynthConfig& config);

/// <split>.jsonl, <split>.emb and phi_gen.json under `dir`.
void write_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

}  // namespace scmm
