#pragma once

#include <optional>
#include <random>
#include <vector>

#include "scmm/data.hpp"
#include "scmm/labels.hpp"
#include "scmm/nn.hpp"
#include "scmm/tensor.hpp"

namespace scmm {

enum class ReliabilityLevel { label, entity };
enum class EmissionMode { sample, mean };
enum class DirichletGradient { mean_path, implicit };

struct EmissionHyper {
  double h_n = 1.2;
  double h_s = 1.5;
  std::optional<double> h_r;  // 1/K when unset
  double g_n = 4.0;
  double g_r = 0.1;
  double nu_base = 10.0;
  double nu_expan = 1000.0;
  ReliabilityLevel level = ReliabilityLevel::entity;

  double split_h(int num_lfs) const { return h_r ? *h_r : 1.0 / num_lfs; }
  /// Throws a domain error on out-of-range values.
  void validate(int num_lfs) const;
};

// ---------------------------------------------------------------------------
// Scalar building blocks.

/// Piecewise reliability scaling. With u = a^(1/s):
///   u < r : u^n / r^(n-1)
///   u >= r: 1 - (1-u)^n / (1-r)^(n-1)
/// Both branches equal r at the split and pass through (0,0) and (1,1).
double scale_h(double a, double n, double s, double r);
double scale_h_grad(double a, double n, double s, double r);

/// Emit-to-O expansion for non-O latent rows:
///   a <= r: c·a^n + (1-L)·a + 1,  c = (2-L) / ((n-1) r^n - n r^(n-1))
///   a >  r: g(r)·(1-a)/(1-r)
double expand_g(double a, double n, double r, int num_labels);
double expand_g_grad(double a, double n, double r, int num_labels);

// ---------------------------------------------------------------------------
// Reliability head.

/// Width of the reliability head's per-LF output: L per label, E+1 per entity.
int reliability_width(const LabelSet& labels, ReliabilityLevel level);

/// All K x L, one sentence.
struct ReliabilityBundle {
  Matrix logits;      // A, after per-entity broadcast
  Matrix normalized;  // Â: sigmoid on column O, softmax across LFs elsewhere
  Matrix scaled;      // Ã = h(Â)
};

ReliabilityBundle reliability_from_logits(const Matrix& raw, const EmissionHyper& hyper,
                                          const LabelSet& labels);
ReliabilityBundle predict_reliability(const Vector& sentence_embedding,
                                      const nn::DenseLayer& layer, const EmissionHyper& hyper,
                                      const LabelSet& labels);
/// Gradient of the head's flattened (row-major K x width) output given ∂/∂Ã.
Vector reliability_vjp(const ReliabilityBundle& bundle, const Matrix& d_scaled,
                       const EmissionHyper& hyper, const LabelSet& labels);

// ---------------------------------------------------------------------------
// Base prior Λ.

Tensor3 expand_base_prior(const Matrix& scaled, const EmissionHyper& hyper);
Matrix expand_base_prior_vjp(const Matrix& scaled, const EmissionHyper& hyper,
                             const Tensor3& d_base);

// ---------------------------------------------------------------------------
// Weighted XOR statistics.

/// W(t)[k](q,g) = (1-Ã[k,q])·x[k,q]·Σ_k' Ã[k',g]·x[k',g] for q,g ≠ O, q ≠ g.
Tensor3 wxor_token(const std::vector<LabelId>& observed, const Matrix& scaled);

struct WxorTable {
  Tensor3 aggregated;  // Ŵ
  Tensor3 normalized;  // W̃, masked softmax over query labels per target column
  Matrix counts;       // K x L: tokens where LF k observed label q
};

/// Streams per-token WXOR terms over a corpus and normalizes at the end.
class WxorAccumulator {
 public:
  WxorAccumulator(int num_lfs, int num_labels);

  void add_token(const std::vector<LabelId>& observed, const Matrix& scaled);
  /// Adds every token of one sentence under that sentence's Ã.
  void add_sentence(const WeakAnnotationMatrix& weak, const Matrix& scaled);
  std::size_t tokens() const { return tokens_; }

  WxorTable finish() const;

 private:
  int num_lfs_;
  int num_labels_;
  Tensor3 numerator_;
  Matrix counts_;
  std::size_t tokens_ = 0;
};

/// Masked softmax of each Ŵ[k](:, g) over q ∉ {O, g}.
Tensor3 normalize_wxor(const Tensor3& aggregated);

// ---------------------------------------------------------------------------
// Addon prior Δ.

struct AddonPrior {
  Matrix scale;   // C, K x L, in (0,1)
  Tensor3 delta;  // Δ[k](g,q) = C[k,q]·W̃[k](q,g)
};

AddonPrior build_addon(const Vector& sentence_embedding, const nn::DenseLayer& scaling_layer,
                       const Tensor3& wxor_normalized);
AddonPrior addon_from_scale(const Matrix& scale, const Tensor3& wxor_normalized);
Vector addon_vjp(const AddonPrior& addon, const Tensor3& wxor_normalized, const Tensor3& d_delta);

// ---------------------------------------------------------------------------
// Concentration and Dirichlet emission.

/// Ω = ν_expan·(Λ + Δ) + ν_base; `delta` may be null (Δ = 0).
Tensor3 build_concentration(const Tensor3& base, const Tensor3* delta, const EmissionHyper& hyper);

struct DirichletDraw {
  Tensor3 phi;
  Tensor3 gammas;  // unnormalized Gamma draws, sample mode only
};

Tensor3 dirichlet_mean(const Tensor3& concentration);
DirichletDraw dirichlet_sample(const Tensor3& concentration, std::mt19937_64& rng);
DirichletDraw draw_emission(const Tensor3& concentration, EmissionMode mode, std::mt19937_64* rng);

/// ∂/∂Ω given ∂/∂Φ. Mean mode differentiates Ω/ΣΩ exactly. In sample mode the
/// mean-path estimator differentiates through the mean at the sampled value;
/// the implicit estimator differentiates the normalized Gamma draws.
Tensor3 dirichlet_vjp(const Tensor3& concentration, const DirichletDraw& draw, EmissionMode mode,
                      DirichletGradient estimator, const Tensor3& d_phi);

/// ∂x/∂α for x ~ Gamma(α, 1) via implicit differentiation of the CDF.
double gamma_sample_grad(double x, double alpha);

// ---------------------------------------------------------------------------
// Whole pipeline for one sentence.

struct EmissionBundle {
  ReliabilityBundle reliability;
  Tensor3 base_prior;
  std::optional<AddonPrior> addon;
  Tensor3 concentration;
  DirichletDraw draw;
  EmissionMode mode = EmissionMode::mean;

  const Tensor3& emission() const { return draw.phi; }
};

struct EmissionHeads {
  const nn::DenseLayer* reliability = nullptr;
  const nn::DenseLayer* scaling = nullptr;  // null disables Δ
  const Tensor3* wxor = nullptr;            // W̃, required with scaling
};

EmissionBundle build_emission(const Vector& sentence_embedding, const EmissionHeads& heads,
                              const EmissionHyper& hyper, const LabelSet& labels,
                              EmissionMode mode, std::mt19937_64* rng);

struct EmissionGrad {
  Vector reliability_out;
  Vector scaling_out;  // empty when Δ is disabled
};

EmissionGrad emission_vjp(const EmissionBundle& bundle, const EmissionHeads& heads,
                          const EmissionHyper& hyper, const LabelSet& labels,
                          DirichletGradient estimator, const Tensor3& d_phi);

}  // namespace scmm
