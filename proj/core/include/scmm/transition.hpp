#pragma once

#include <vector>

#include "scmm/data.hpp"
#include "scmm/nn.hpp"
#include "scmm/tensor.hpp"

namespace scmm {

enum class InitialState { delta_outside, uniform };

/// Token-wise transition matrices Ψ(1..T) plus the distribution of z(0).
struct TransitionTensor {
  std::vector<Matrix> steps;  // steps[t-1] = Ψ(t), row-stochastic L x L
  Vector initial;

  int length() const { return static_cast<int>(steps.size()); }
  int num_labels() const { return static_cast<int>(initial.size()); }
};

Vector initial_distribution(int num_labels, InitialState init);

/// Row-wise softmax of reshape(dense(e_t)) into L x L (row-major).
Matrix transition_step(const Vector& token_embedding, const nn::DenseLayer& layer, int num_labels);

TransitionTensor predict_transition(const EmbeddingSequence& embedding, const nn::DenseLayer& layer,
                                    int num_labels, InitialState init);

/// Accumulates the head's parameter gradient given ∂/∂Ψ(t) for every step.
void transition_vjp(const EmbeddingSequence& embedding, const TransitionTensor& transitions,
                    const std::vector<Matrix>& d_steps, nn::DenseGrad& grad);

}  // namespace scmm
