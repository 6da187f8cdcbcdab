#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "scmm/checkpoint.hpp"
#include "scmm/data.hpp"
#include "scmm/emission.hpp"
#include "scmm/hmm.hpp"
#include "scmm/nn.hpp"
#include "scmm/transition.hpp"

namespace scmm {

inline constexpr const char* kTransitionHead = "transition";
inline constexpr const char* kReliabilityHead = "reliability";
inline constexpr const char* kScalingHead = "scaling";

struct ModelShape {
  int embedding_dim = 0;
  int num_lfs = 0;     // LFs seen in training, including a majority-vote pseudo-LF
  int active_lfs = 0;  // LFs whose evidence enters inference
};

/// Sparse conditional HMM: token-wise transition head, sentence-level
/// reliability head, and the WXOR scaling head.
class SparseChmm {
 public:
  SparseChmm(LabelSet labels, ModelShape shape, EmissionHyper hyper, InitialState init,
             std::uint64_t seed);
  SparseChmm(const SparseChmm& other);
  SparseChmm& operator=(const SparseChmm& other);
  SparseChmm(SparseChmm&& other) noexcept;
  SparseChmm& operator=(SparseChmm&& other) noexcept;

  const LabelSet& labels() const { return labels_; }
  const ModelShape& shape() const { return shape_; }
  int num_labels() const { return labels_.size(); }

  EmissionHyper& hyper() { return hyper_; }
  const EmissionHyper& hyper() const { return hyper_; }
  InitialState initial_state() const { return init_; }

  nn::ParamRegistry& registry() { return registry_; }
  const nn::ParamRegistry& registry() const { return registry_; }
  nn::DenseLayer& transition_head() { return transition_; }
  nn::DenseLayer& reliability_head() { return reliability_; }
  nn::DenseLayer& scaling_head() { return scaling_; }
  const nn::DenseLayer& transition_head() const { return transition_; }
  const nn::DenseLayer& reliability_head() const { return reliability_; }
  const nn::DenseLayer& scaling_head() const { return scaling_; }

  /// Installs the corpus WXOR table. Stored values are rounded to float32.
  void set_wxor(WxorTable table);
  const std::optional<WxorTable>& wxor() const { return wxor_; }
  /// Δ participates in the emission only when enabled and a table is present.
  void enable_addon(bool on) { addon_enabled_ = on; }
  bool addon_enabled() const { return addon_enabled_ && wxor_.has_value(); }
  void reset_scaling_head(std::mt19937_64& rng);

  EmissionHeads heads() const;
  EmissionBundle emission(const Vector& sentence_embedding, EmissionMode mode,
                          std::mt19937_64* rng) const;
  TransitionTensor transitions(const EmbeddingSequence& embedding) const;

  /// Viterbi decode with mean-mode emission over the active LFs.
  ViterbiPath decode(const Instance& instance) const;

  void save_tensors(TensorTable& table) const;
  static SparseChmm load_tensors(const TensorTable& table, const LabelSet& labels,
                                 const EmissionHyper& hyper, InitialState init);

 private:
  void rebuild_registry();

  LabelSet labels_;
  ModelShape shape_;
  EmissionHyper hyper_;
  InitialState init_;
  nn::DenseLayer transition_;
  nn::DenseLayer reliability_;
  nn::DenseLayer scaling_;
  std::optional<WxorTable> wxor_;
  bool addon_enabled_ = false;
  nn::ParamRegistry registry_;
};

struct SentenceObjective {
  double value = 0.0;
  int tokens = 0;
  nn::Gradients grads;  // slots for unfrozen heads only
};

struct EmOptions {
  EmissionMode mode = EmissionMode::mean;
  DirichletGradient estimator = DirichletGradient::mean_path;
};

/// Q for one sentence and its gradient w.r.t. the unfrozen heads. With
/// `fixed_posteriors` the E-step is skipped and those γ/ξ are used as
/// constants; otherwise they are computed under the current parameters and
/// optionally returned through `posteriors_out`.
SentenceObjective em_objective(const SparseChmm& model, const Instance& instance,
                               const EmOptions& options, std::mt19937_64* rng,
                               const PosteriorStats* fixed_posteriors = nullptr,
                               PosteriorStats* posteriors_out = nullptr);

struct PretrainTargets {
  const Matrix* transition = nullptr;  // Ψ*; null drops the transition term
  const Tensor3* emission = nullptr;   // per-LF Φ*
};

/// (1/K) Σ_k ||Φ_k - Φ*_k||² + (1/T) Σ_t ||Ψ(t) - Ψ*||² in mean mode.
SentenceObjective pretrain_objective(const SparseChmm& model, const Instance& instance,
                                     const PretrainTargets& targets);

/// log p(x(1:T)) under mean-mode emission and all training LFs.
double sentence_log_likelihood(const SparseChmm& model, const Instance& instance);

}  // namespace scmm
