#pragma once

#include <vector>

#include "scmm/data.hpp"
#include "scmm/tensor.hpp"
#include "scmm/transition.hpp"

namespace scmm {

inline constexpr double kEvidenceFloor = 1e-30;

/// Per-sentence forward-backward output. Row t of the (T+1) x L matrices is
/// time step t; row 0 is the unobserved initial state.
struct PosteriorStats {
  Matrix alpha;             // filtered marginals
  Matrix beta;              // scaled future evidence
  Matrix gamma;             // smoothed marginals
  std::vector<Matrix> xi;   // xi[t-1](i,j) = p(z(t-1)=i, z(t)=j | x)
  Vector log_normalizers;   // log c_t, entry 0 is 0
  double log_likelihood = 0.0;
};

/// T x L matrix of log φ(t)_l = Σ_k log Φ[k](l, obs(k,t)) over the first
/// `active_lfs` LFs, each factor floored at `floor`.
Matrix emission_evidence(const Tensor3& phi, const WeakAnnotationMatrix& weak, int active_lfs,
                         double floor = kEvidenceFloor);
Tensor3 evidence_vjp(const Tensor3& phi, const WeakAnnotationMatrix& weak, int active_lfs,
                     const Matrix& d_log_evidence, double floor = kEvidenceFloor);

PosteriorStats forward_backward(const TransitionTensor& transitions, const Matrix& log_evidence);

/// Expected complete-data log likelihood with γ and ξ held fixed.
double expected_ll(const PosteriorStats& stats, const TransitionTensor& transitions,
                   const Matrix& log_evidence);

struct ExpectedLLGrad {
  std::vector<Matrix> d_steps;  // ∂Q/∂Ψ(t) = ξ(t) / Ψ(t)
  Matrix d_log_evidence;        // ∂Q/∂log φ(t) = γ(t)
};
ExpectedLLGrad expected_ll_grad(const PosteriorStats& stats, const TransitionTensor& transitions);

struct ViterbiPath {
  std::vector<LabelId> labels;
  double log_score = 0.0;  // log p(z(1:T), x(1:T)) with z(0) marginalized
};

/// Ties resolve toward the lowest label index.
ViterbiPath viterbi(const TransitionTensor& transitions, const Matrix& log_evidence);

}  // namespace scmm
