#include "scmm/transition.hpp"

#include "scmm/error.hpp"

namespace scmm {

Vector initial_distribution(int num_labels, InitialState init) {
  if (init == InitialState::uniform) return Vector::Constant(num_labels, 1.0 / num_labels);
  Vector p = Vector::Zero(num_labels);
  p(0) = 1.0;
  return p;
}

Matrix transition_step(const Vector& token_embedding, const nn::DenseLayer& layer, int num_labels) {
  if (layer.out_dim() != num_labels * num_labels) {
    throw Error(ErrorKind::dimension, "transition head must output L*L = " +
                                          std::to_string(num_labels * num_labels) + " values");
  }
  const Vector flat = layer.apply(token_embedding);
  Matrix psi(num_labels, num_labels);
  for (int i = 0; i < num_labels; ++i) {
    psi.row(i) = nn::softmax(flat.segment(i * num_labels, num_labels)).transpose();
  }
  return psi;
}

TransitionTensor predict_transition(const EmbeddingSequence& embedding, const nn::DenseLayer& layer,
                                    int num_labels, InitialState init) {
  TransitionTensor out;
  out.initial = initial_distribution(num_labels, init);
  out.steps.reserve(static_cast<std::size_t>(embedding.length()));
  for (int t = 1; t <= embedding.length(); ++t) {
    out.steps.push_back(transition_step(embedding.token(t), layer, num_labels));
  }
  return out;
}

void transition_vjp(const EmbeddingSequence& embedding, const TransitionTensor& transitions,
                    const std::vector<Matrix>& d_steps, nn::DenseGrad& grad) {
  const int L = transitions.num_labels();
  if (d_steps.size() != transitions.steps.size()) {
    throw Error(ErrorKind::dimension, "transition_vjp: step count mismatch");
  }
  Vector d_flat(L * L);
  for (int t = 0; t < transitions.length(); ++t) {
    const Matrix& psi = transitions.steps[static_cast<std::size_t>(t)];
    const Matrix& d_psi = d_steps[static_cast<std::size_t>(t)];
    for (int i = 0; i < L; ++i) {
      d_flat.segment(i * L, L) = nn::softmax_vjp(psi.row(i).transpose(), d_psi.row(i).transpose());
    }
    grad.accumulate(embedding.token(t + 1), d_flat);
  }
}

}  // namespace scmm
