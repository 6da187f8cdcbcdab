#include "scmm/hmm.hpp"

#include <cmath>
#include <limits>

#include "scmm/error.hpp"

namespace scmm {

Matrix emission_evidence(const Tensor3& phi, const WeakAnnotationMatrix& weak, int active_lfs,
                         double floor) {
  if (active_lfs > weak.num_lfs() || active_lfs > static_cast<int>(phi.size())) {
    throw Error(ErrorKind::dimension, "evidence: more active LFs than observations or emissions");
  }
  const int T = weak.length();
  const int L = phi.empty() ? 0 : static_cast<int>(phi.front().rows());
  Matrix log_ev = Matrix::Zero(T, L);
  for (int k = 0; k < active_lfs; ++k) {
    const Matrix& slice = phi[static_cast<std::size_t>(k)];
    for (int t = 0; t < T; ++t) {
      const LabelId j = weak.at(k, t);
      for (int l = 0; l < L; ++l) log_ev(t, l) += std::log(std::max(slice(l, j), floor));
    }
  }
  return log_ev;
}

Tensor3 evidence_vjp(const Tensor3& phi, const WeakAnnotationMatrix& weak, int active_lfs,
                     const Matrix& d_log_evidence, double floor) {
  const int L = phi.empty() ? 0 : static_cast<int>(phi.front().rows());
  Tensor3 d_phi = zeros3(static_cast<int>(phi.size()), L, L);
  for (int k = 0; k < active_lfs; ++k) {
    const Matrix& slice = phi[static_cast<std::size_t>(k)];
    for (int t = 0; t < weak.length(); ++t) {
      const LabelId j = weak.at(k, t);
      for (int l = 0; l < L; ++l) {
        if (slice(l, j) > floor) d_phi[static_cast<std::size_t>(k)](l, j) += d_log_evidence(t, l) / slice(l, j);
      }
    }
  }
  return d_phi;
}

PosteriorStats forward_backward(const TransitionTensor& transitions, const Matrix& log_evidence) {
  const int T = transitions.length();
  const int L = transitions.num_labels();
  if (T < 1) throw Error(ErrorKind::dimension, "forward-backward needs at least one token");
  if (log_evidence.rows() != T || log_evidence.cols() != L) {
    throw Error(ErrorKind::dimension, "forward-backward: evidence is " +
                                          std::to_string(log_evidence.rows()) + "x" +
                                          std::to_string(log_evidence.cols()) + ", expected " +
                                          std::to_string(T) + "x" + std::to_string(L));
  }

  PosteriorStats s;
  s.alpha = Matrix::Zero(T + 1, L);
  s.beta = Matrix::Ones(T + 1, L);
  s.gamma = Matrix::Zero(T + 1, L);
  s.log_normalizers = Vector::Zero(T + 1);
  s.xi.assign(static_cast<std::size_t>(T), Matrix::Zero(L, L));

  // Evidence rescaled by its per-step max so exp() stays in range.
  Matrix evidence(T, L);
  Vector ev_shift(T);
  for (int t = 0; t < T; ++t) {
    ev_shift(t) = log_evidence.row(t).maxCoeff();
    evidence.row(t) = (log_evidence.row(t).array() - ev_shift(t)).exp();
  }

  s.alpha.row(0) = transitions.initial.transpose();
  Vector c(T + 1);
  c(0) = 1.0;
  for (int t = 1; t <= T; ++t) {
    const Matrix& psi = transitions.steps[static_cast<std::size_t>(t - 1)];
    Eigen::RowVectorXd a = (s.alpha.row(t - 1) * psi).array() * evidence.row(t - 1).array();
    c(t) = a.sum();
    if (!(c(t) > 0.0) || !std::isfinite(c(t))) {
      throw Error(ErrorKind::numeric, "degenerate evidence at token " + std::to_string(t - 1));
    }
    s.alpha.row(t) = a / c(t);
    s.log_normalizers(t) = std::log(c(t)) + ev_shift(t - 1);
  }
  s.log_likelihood = s.log_normalizers.sum();

  for (int t = T; t >= 1; --t) {
    const Matrix& psi = transitions.steps[static_cast<std::size_t>(t - 1)];
    const Vector weighted = evidence.row(t - 1).transpose().cwiseProduct(s.beta.row(t).transpose());
    s.beta.row(t - 1) = (psi * weighted).transpose() / c(t);

    Matrix xi = psi.array() * (s.alpha.row(t - 1).transpose() * weighted.transpose()).array();
    xi /= xi.sum();
    s.xi[static_cast<std::size_t>(t - 1)] = std::move(xi);
  }

  for (int t = 0; t <= T; ++t) {
    Eigen::RowVectorXd g = s.alpha.row(t).cwiseProduct(s.beta.row(t));
    s.gamma.row(t) = g / g.sum();
  }
  return s;
}

double expected_ll(const PosteriorStats& stats, const TransitionTensor& transitions,
                   const Matrix& log_evidence) {
  const int T = transitions.length();
  const int L = transitions.num_labels();
  double q = 0.0;
  for (int i = 0; i < L; ++i) {
    const double w = stats.gamma(0, i);
    if (w > 0.0) q += w * std::log(transitions.initial(i));
  }
  for (int t = 1; t <= T; ++t) {
    const Matrix& psi = transitions.steps[static_cast<std::size_t>(t - 1)];
    const Matrix& xi = stats.xi[static_cast<std::size_t>(t - 1)];
    q += (xi.array() * psi.array().log()).sum();
    q += stats.gamma.row(t).dot(log_evidence.row(t - 1));
  }
  if (!std::isfinite(q)) throw Error(ErrorKind::numeric, "expected log likelihood is not finite");
  return q;
}

ExpectedLLGrad expected_ll_grad(const PosteriorStats& stats, const TransitionTensor& transitions) {
  const int T = transitions.length();
  ExpectedLLGrad g;
  g.d_steps.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    g.d_steps.push_back(stats.xi[static_cast<std::size_t>(t)].cwiseQuotient(
        transitions.steps[static_cast<std::size_t>(t)]));
  }
  g.d_log_evidence = stats.gamma.bottomRows(T);
  return g;
}

ViterbiPath viterbi(const TransitionTensor& transitions, const Matrix& log_evidence) {
  const int T = transitions.length();
  const int L = transitions.num_labels();
  if (T < 1) throw Error(ErrorKind::dimension, "viterbi needs at least one token");
  if (log_evidence.rows() != T || log_evidence.cols() != L) {
    throw Error(ErrorKind::dimension, "viterbi: evidence shape mismatch");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();

  Matrix score(T, L);
  Eigen::MatrixXi back = Eigen::MatrixXi::Zero(T, L);
  const Eigen::RowVectorXd first = transitions.initial.transpose() * transitions.steps.front();
  for (int j = 0; j < L; ++j) {
    score(0, j) = (first(j) > 0 ? std::log(first(j)) : kNegInf) + log_evidence(0, j);
  }
  for (int t = 1; t < T; ++t) {
    const Matrix log_psi = transitions.steps[static_cast<std::size_t>(t)].array().log();
    for (int j = 0; j < L; ++j) {
      double best = kNegInf;
      int arg = 0;
      for (int i = 0; i < L; ++i) {
        const double cand = score(t - 1, i) + log_psi(i, j);
        if (cand > best) {
          best = cand;
          arg = i;
        }
      }
      score(t, j) = best + log_evidence(t, j);
      back(t, j) = arg;
    }
  }

  ViterbiPath path;
  path.labels.assign(static_cast<std::size_t>(T), 0);
  int last = 0;
  double best = kNegInf;
  for (int j = 0; j < L; ++j) {
    if (score(T - 1, j) > best) {
      best = score(T - 1, j);
      last = j;
    }
  }
  if (!std::isfinite(best)) throw Error(ErrorKind::numeric, "viterbi: no finite-score path");
  path.log_score = best;
  path.labels[static_cast<std::size_t>(T - 1)] = last;
  for (int t = T - 1; t > 0; --t) {
    last = back(t, last);
    path.labels[static_cast<std::size_t>(t - 1)] = last;
  }
  return path;
}

}  // namespace scmm
