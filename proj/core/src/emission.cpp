#include "scmm/emission.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "scmm/error.hpp"

namespace scmm {

void EmissionHyper::validate(int num_lfs) const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorKind::domain, std::string("emission hyperparameter: ") + what);
  };
  require(num_lfs >= 1, "need at least one labeling function");
  require(h_n > 0 && std::isfinite(h_n), "h_n must be positive");
  require(h_s > 0 && std::isfinite(h_s), "h_s must be positive");
  const double r = split_h(num_lfs);
  require(r > 0 && r < 1, "h_r must lie in (0,1)");
  require(g_n > 1 && std::isfinite(g_n), "g_n must exceed 1");
  require(g_r > 0 && g_r < 1, "g_r must lie in (0,1)");
  require(nu_base > 0 && std::isfinite(nu_base), "nu_base must be positive");
  require(nu_expan > 0 && std::isfinite(nu_expan), "nu_expan must be positive");
}

namespace {

double checked_unit(double a, const char* fn) {
  constexpr double kSlack = 1e-12;
  if (!(a >= -kSlack && a <= 1 + kSlack)) {
    throw Error(ErrorKind::domain, std::string(fn) + ": argument " + std::to_string(a) +
                                       " outside [0,1]");
  }
  return std::clamp(a, 0.0, 1.0);
}

}  // namespace

double scale_h(double a, double n, double s, double r) {
  a = checked_unit(a, "scale_h");
  if (!(r > 0 && r < 1) || n <= 0 || s <= 0) {
    throw Error(ErrorKind::domain, "scale_h: need r in (0,1) and n, s > 0");
  }
  const double u = std::pow(a, 1.0 / s);
  if (u < r) return std::pow(u, n) / std::pow(r, n - 1);
  return 1.0 - std::pow(1.0 - u, n) / std::pow(1.0 - r, n - 1);
}

double scale_h_grad(double a, double n, double s, double r) {
  a = checked_unit(a, "scale_h_grad");
  if (a == 0.0) {
    const double p = n / s;
    if (p > 1) return 0.0;
    if (p < 1) return std::numeric_limits<double>::infinity();
    return 1.0 / (s * std::pow(r, n - 1)) * n;
  }
  const double u = std::pow(a, 1.0 / s);
  if (u < r) {
    // d/da of a^(n/s) / r^(n-1)
    return (n / s) * std::pow(a, n / s - 1.0) / std::pow(r, n - 1);
  }
  const double du = u / (s * a);
  return n * std::pow(1.0 - u, n - 1) / std::pow(1.0 - r, n - 1) * du;
}

namespace {

double g_coefficient(double n, double r, int num_labels) {
  const double L = num_labels;
  return (2.0 - L) / ((n - 1.0) * std::pow(r, n) - n * std::pow(r, n - 1.0));
}

double g_lower(double a, double n, double r, int num_labels) {
  const double L = num_labels;
  return g_coefficient(n, r, num_labels) * std::pow(a, n) + (1.0 - L) * a + 1.0;
}

}  // namespace

double expand_g(double a, double n, double r, int num_labels) {
  a = checked_unit(a, "expand_g");
  if (a <= r) return g_lower(a, n, r, num_labels);
  const double at_split = g_lower(r, n, r, num_labels);
  return at_split * (1.0 - a) / (1.0 - r);
}

double expand_g_grad(double a, double n, double r, int num_labels) {
  a = checked_unit(a, "expand_g_grad");
  if (a <= r) {
    const double L = num_labels;
    return g_coefficient(n, r, num_labels) * n * std::pow(a, n - 1.0) + (1.0 - L);
  }
  return g_lower(r, n, r, num_labels) / (r - 1.0);
}

int reliability_width(const LabelSet& labels, ReliabilityLevel level) {
  return level == ReliabilityLevel::entity ? labels.num_entities() + 1 : labels.size();
}

namespace {

// Column of the raw head output feeding label l.
int source_column(LabelId l, const LabelSet& labels, ReliabilityLevel level) {
  if (level == ReliabilityLevel::label || l == LabelSet::kOutside) return l;
  return labels.entity_of(l) + 1;
}

}  // namespace

ReliabilityBundle reliability_from_logits(const Matrix& raw, const EmissionHyper& hyper,
                                          const LabelSet& labels) {
  const int width = reliability_width(labels, hyper.level);
  if (raw.cols() != width) {
    throw Error(ErrorKind::dimension, "reliability logits need " + std::to_string(width) +
                                          " columns, got " + std::to_string(raw.cols()));
  }
  const int K = static_cast<int>(raw.rows());
  const int L = labels.size();
  const double r = hyper.split_h(K);

  ReliabilityBundle out;
  out.logits.resize(K, L);
  for (LabelId l = 0; l < L; ++l) out.logits.col(l) = raw.col(source_column(l, labels, hyper.level));

  out.normalized.resize(K, L);
  for (int k = 0; k < K; ++k) out.normalized(k, 0) = nn::sigmoid(out.logits(k, 0));
  for (LabelId l = 1; l < L; ++l) out.normalized.col(l) = nn::softmax(out.logits.col(l));

  out.scaled = out.normalized.unaryExpr(
      [&](double a) { return scale_h(a, hyper.h_n, hyper.h_s, r); });
  return out;
}

ReliabilityBundle predict_reliability(const Vector& sentence_embedding,
                                      const nn::DenseLayer& layer, const EmissionHyper& hyper,
                                      const LabelSet& labels) {
  const int width = reliability_width(labels, hyper.level);
  if (layer.out_dim() % width != 0) {
    throw Error(ErrorKind::dimension, "reliability head output " + std::to_string(layer.out_dim()) +
                                          " is not a multiple of " + std::to_string(width));
  }
  const int K = layer.out_dim() / width;
  const Vector flat = layer.apply(sentence_embedding);
  // Row-major K x width.
  Matrix raw = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), K, width);
  return reliability_from_logits(raw, hyper, labels);
}

Vector reliability_vjp(const ReliabilityBundle& bundle, const Matrix& d_scaled,
                       const EmissionHyper& hyper, const LabelSet& labels) {
  const int K = static_cast<int>(bundle.scaled.rows());
  const int L = static_cast<int>(bundle.scaled.cols());
  const double r = hyper.split_h(K);

  Matrix d_norm(K, L);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < L; ++l) {
      const double a = bundle.normalized(k, l);
      d_norm(k, l) = d_scaled(k, l) * scale_h_grad(a, hyper.h_n, hyper.h_s, r);
    }
  }

  Matrix d_logits(K, L);
  for (int k = 0; k < K; ++k) {
    const double s = bundle.normalized(k, 0);
    d_logits(k, 0) = d_norm(k, 0) * s * (1.0 - s);
  }
  for (int l = 1; l < L; ++l) {
    d_logits.col(l) = nn::softmax_vjp(bundle.normalized.col(l), d_norm.col(l));
  }

  const int width = reliability_width(labels, hyper.level);
  Vector flat = Vector::Zero(static_cast<Eigen::Index>(K) * width);
  for (int k = 0; k < K; ++k) {
    for (LabelId l = 0; l < L; ++l) {
      flat(k * width + source_column(l, labels, hyper.level)) += d_logits(k, l);
    }
  }
  return flat;
}

namespace {

struct Expansion {
  double value;
  double slope;
};

Expansion expand_entry(int i, int j, double a, const EmissionHyper& hyper, int L) {
  Expansion e;
  if (i == j) {
    e = {a, 1.0};
  } else if (i == 0) {
    e = {(1.0 - a) / (L - 1), -1.0 / (L - 1)};
  } else {
    // g dips below zero for large g_r; clamp it before sharing out the rest
    // so the row still sums to one.
    double g = expand_g(a, hyper.g_n, hyper.g_r, L);
    double dg = expand_g_grad(a, hyper.g_n, hyper.g_r, L);
    if (g < 0.0) g = dg = 0.0;
    e = j == 0 ? Expansion{g, dg} : Expansion{(1.0 - a - g) / (L - 2), (-1.0 - dg) / (L - 2)};
  }
  if (e.value < 0.0) e = {0.0, 0.0};
  return e;
}

}  // namespace

Tensor3 expand_base_prior(const Matrix& scaled, const EmissionHyper& hyper) {
  const int K = static_cast<int>(scaled.rows());
  const int L = static_cast<int>(scaled.cols());
  if (L < 3) throw Error(ErrorKind::domain, "base prior needs at least one entity (L >= 3)");
  Tensor3 base = zeros3(K, L, L);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < L; ++i) {
      const double a = checked_unit(scaled(k, i), "expand_base_prior");
      for (int j = 0; j < L; ++j) base[k](i, j) = expand_entry(i, j, a, hyper, L).value;
    }
  }
  return base;
}

Matrix expand_base_prior_vjp(const Matrix& scaled, const EmissionHyper& hyper,
                             const Tensor3& d_base) {
  const int K = static_cast<int>(scaled.rows());
  const int L = static_cast<int>(scaled.cols());
  Matrix d_scaled = Matrix::Zero(K, L);
  for (int k = 0; k < K; ++k) {
    for (int i = 0; i < L; ++i) {
      const double a = checked_unit(scaled(k, i), "expand_base_prior_vjp");
      double acc = 0.0;
      for (int j = 0; j < L; ++j) acc += d_base[k](i, j) * expand_entry(i, j, a, hyper, L).slope;
      d_scaled(k, i) = acc;
    }
  }
  return d_scaled;
}

WxorAccumulator::WxorAccumulator(int num_lfs, int num_labels)
    : num_lfs_(num_lfs),
      num_labels_(num_labels),
      numerator_(zeros3(num_lfs, num_labels, num_labels)),
      counts_(Matrix::Zero(num_lfs, num_labels)) {}

void WxorAccumulator::add_token(const std::vector<LabelId>& observed, const Matrix& scaled) {
  if (static_cast<int>(observed.size()) != num_lfs_ || scaled.rows() != num_lfs_ ||
      scaled.cols() != num_labels_) {
    throw Error(ErrorKind::dimension, "wxor: observation/reliability shape mismatch");
  }
  // Confidence mass the LFs put on each target label at this token.
  Vector support = Vector::Zero(num_labels_);
  for (int k = 0; k < num_lfs_; ++k) {
    const LabelId g = observed[static_cast<std::size_t>(k)];
    support(g) += scaled(k, g);
  }
  for (int k = 0; k < num_lfs_; ++k) {
    const LabelId q = observed[static_cast<std::size_t>(k)];
    counts_(k, q) += 1.0;
    if (q == LabelSet::kOutside) continue;
    const double doubt = 1.0 - scaled(k, q);
    for (int g = 1; g < num_labels_; ++g) {
      if (g != q) numerator_[k](q, g) += doubt * support(g);
    }
  }
  ++tokens_;
}

void WxorAccumulator::add_sentence(const WeakAnnotationMatrix& weak, const Matrix& scaled) {
  std::vector<LabelId> column(static_cast<std::size_t>(weak.num_lfs()));
  for (int t = 0; t < weak.length(); ++t) {
    for (int k = 0; k < weak.num_lfs(); ++k) column[static_cast<std::size_t>(k)] = weak.at(k, t);
    add_token(column, scaled);
  }
}

Tensor3 normalize_wxor(const Tensor3& aggregated) {
  Tensor3 out;
  out.reserve(aggregated.size());
  for (const auto& slice : aggregated) {
    const int L = static_cast<int>(slice.rows());
    Matrix norm = Matrix::Zero(L, L);
    for (int g = 1; g < L; ++g) {
      double top = -std::numeric_limits<double>::infinity();
      for (int q = 1; q < L; ++q) {
        if (q != g) top = std::max(top, slice(q, g));
      }
      double total = 0.0;
      for (int q = 1; q < L; ++q) {
        if (q == g) continue;
        norm(q, g) = std::exp(slice(q, g) - top);
        total += norm(q, g);
      }
      if (total > 0) norm.col(g) /= total;
    }
    out.push_back(std::move(norm));
  }
  return out;
}

WxorTable WxorAccumulator::finish() const {
  if (tokens_ == 0) throw Error(ErrorKind::schema, "wxor aggregation over an empty corpus");
  WxorTable table;
  table.counts = counts_;
  table.aggregated = zeros3(num_lfs_, num_labels_, num_labels_);
  for (int k = 0; k < num_lfs_; ++k) {
    for (int q = 1; q < num_labels_; ++q) {
      const double denom = counts_(k, q);
      if (denom == 0.0) continue;  // never observed: no evidence, no addon mass
      table.aggregated[k].row(q) = numerator_[k].row(q) / denom;
    }
  }
  table.normalized = normalize_wxor(table.aggregated);
  return table;
}

Tensor3 wxor_token(const std::vector<LabelId>& observed, const Matrix& scaled) {
  WxorAccumulator acc(static_cast<int>(scaled.rows()), static_cast<int>(scaled.cols()));
  acc.add_token(observed, scaled);
  return acc.finish().aggregated;  // one token, each count is 0 or 1
}

AddonPrior addon_from_scale(const Matrix& scale, const Tensor3& wxor_normalized) {
  const int K = static_cast<int>(scale.rows());
  const int L = static_cast<int>(scale.cols());
  if (static_cast<int>(wxor_normalized.size()) != K) {
    throw Error(ErrorKind::dimension, "addon: scaling factors and WXOR disagree on K");
  }
  AddonPrior addon{scale, zeros3(K, L, L)};
  for (int k = 0; k < K; ++k) {
    // Target label moves to the latent-state axis.
    addon.delta[k] = (wxor_normalized[k].array().colwise() * scale.row(k).transpose().array())
                         .matrix()
                         .transpose();
  }
  return addon;
}

AddonPrior build_addon(const Vector& sentence_embedding, const nn::DenseLayer& scaling_layer,
                       const Tensor3& wxor_normalized) {
  if (wxor_normalized.empty()) throw Error(ErrorKind::dimension, "addon: empty WXOR table");
  const int K = static_cast<int>(wxor_normalized.size());
  const int L = static_cast<int>(wxor_normalized.front().rows());
  if (scaling_layer.out_dim() != K * L) {
    throw Error(ErrorKind::dimension, "scaling head must output K*L = " + std::to_string(K * L) +
                                          " values, got " + std::to_string(scaling_layer.out_dim()));
  }
  const Vector flat = scaling_layer.apply(sentence_embedding);
  Matrix scale(K, L);
  for (int k = 0; k < K; ++k) {
    for (int l = 0; l < L; ++l) scale(k, l) = nn::sigmoid(flat(k * L + l));
  }
  return addon_from_scale(scale, wxor_normalized);
}

Vector addon_vjp(const AddonPrior& addon, const Tensor3& wxor_normalized, const Tensor3& d_delta) {
  const int K = static_cast<int>(addon.scale.rows());
  const int L = static_cast<int>(addon.scale.cols());
  Vector flat(static_cast<Eigen::Index>(K) * L);
  for (int k = 0; k < K; ++k) {
    for (int q = 0; q < L; ++q) {
      double d_scale = 0.0;
      for (int g = 0; g < L; ++g) d_scale += d_delta[k](g, q) * wxor_normalized[k](q, g);
      const double c = addon.scale(k, q);
      flat(k * L + q) = d_scale * c * (1.0 - c);
    }
  }
  return flat;
}

Tensor3 build_concentration(const Tensor3& base, const Tensor3* delta, const EmissionHyper& hyper) {
  if (!(hyper.nu_base > 0) || !(hyper.nu_expan > 0)) {
    throw Error(ErrorKind::domain, "concentration scales must be positive");
  }
  if (delta && delta->size() != base.size()) {
    throw Error(ErrorKind::dimension, "concentration: base and addon priors disagree on K");
  }
  Tensor3 omega;
  omega.reserve(base.size());
  for (std::size_t k = 0; k < base.size(); ++k) {
    Matrix sum = delta ? Matrix(base[k] + (*delta)[k]) : base[k];
    omega.push_back((hyper.nu_expan * sum.array() + hyper.nu_base).matrix());
  }
  return omega;
}

namespace {

void require_finite_positive(const Tensor3& concentration) {
  for (const auto& slice : concentration) {
    if (!slice.allFinite() || (slice.array() <= 0).any()) {
      throw Error(ErrorKind::numeric, "Dirichlet concentration must be finite and positive");
    }
  }
}

}  // namespace

Tensor3 dirichlet_mean(const Tensor3& concentration) {
  require_finite_positive(concentration);
  Tensor3 phi;
  phi.reserve(concentration.size());
  for (const auto& slice : concentration) {
    phi.push_back((slice.array().colwise() / slice.rowwise().sum().array()).matrix());
  }
  return phi;
}

DirichletDraw dirichlet_sample(const Tensor3& concentration, std::mt19937_64& rng) {
  require_finite_positive(concentration);
  DirichletDraw draw;
  for (const auto& slice : concentration) {
    Matrix gammas(slice.rows(), slice.cols());
    for (Eigen::Index i = 0; i < slice.rows(); ++i) {
      for (Eigen::Index j = 0; j < slice.cols(); ++j) {
        std::gamma_distribution<double> dist(slice(i, j), 1.0);
        gammas(i, j) = dist(rng);
      }
    }
    draw.phi.push_back((gammas.array().colwise() / gammas.rowwise().sum().array()).matrix());
    draw.gammas.push_back(std::move(gammas));
  }
  return draw;
}

DirichletDraw draw_emission(const Tensor3& concentration, EmissionMode mode, std::mt19937_64* rng) {
  if (mode == EmissionMode::mean) return DirichletDraw{dirichlet_mean(concentration), {}};
  if (!rng) throw Error(ErrorKind::domain, "sample mode needs a random stream");
  return dirichlet_sample(concentration, *rng);
}

double gamma_sample_grad(double x, double alpha) {
  namespace bm = boost::math;
  const double h = 1e-5 * std::max(1.0, alpha);
  const double d_cdf = (bm::gamma_p(alpha + h, x) - bm::gamma_p(alpha - h, x)) / (2.0 * h);
  const double density = bm::gamma_p_derivative(alpha, x);
  if (density <= 0.0) return 0.0;
  return -d_cdf / density;
}

Tensor3 dirichlet_vjp(const Tensor3& concentration, const DirichletDraw& draw, EmissionMode mode,
                      DirichletGradient estimator, const Tensor3& d_phi) {
  Tensor3 d_omega;
  d_omega.reserve(concentration.size());
  const bool implicit = mode == EmissionMode::sample && estimator == DirichletGradient::implicit;
  for (std::size_t k = 0; k < concentration.size(); ++k) {
    const Matrix& omega = concentration[k];
    Matrix out(omega.rows(), omega.cols());
    for (Eigen::Index i = 0; i < omega.rows(); ++i) {
      if (implicit) {
        const double total = draw.gammas[k].row(i).sum();
        const double inner = d_phi[k].row(i).dot(draw.phi[k].row(i));
        for (Eigen::Index j = 0; j < omega.cols(); ++j) {
          const double d_gamma = (d_phi[k](i, j) - inner) / total;
          out(i, j) = d_gamma * gamma_sample_grad(draw.gammas[k](i, j), omega(i, j));
        }
      } else {
        const double total = omega.row(i).sum();
        const Eigen::RowVectorXd mean = omega.row(i) / total;
        const double inner = d_phi[k].row(i).dot(mean);
        out.row(i) = (d_phi[k].row(i).array() - inner) / total;
      }
    }
    d_omega.push_back(std::move(out));
  }
  return d_omega;
}

EmissionBundle build_emission(const Vector& sentence_embedding, const EmissionHeads& heads,
                              const EmissionHyper& hyper, const LabelSet& labels,
                              EmissionMode mode, std::mt19937_64* rng) {
  if (!heads.reliability) throw Error(ErrorKind::dimension, "emission needs a reliability head");
  EmissionBundle bundle;
  bundle.mode = mode;
  bundle.reliability = predict_reliability(sentence_embedding, *heads.reliability, hyper, labels);
  bundle.base_prior = expand_base_prior(bundle.reliability.scaled, hyper);
  if (heads.scaling) {
    if (!heads.wxor) throw Error(ErrorKind::dimension, "addon prior needs a WXOR table");
    bundle.addon = build_addon(sentence_embedding, *heads.scaling, *heads.wxor);
  }
  bundle.concentration =
      build_concentration(bundle.base_prior, bundle.addon ? &bundle.addon->delta : nullptr, hyper);
  bundle.draw = draw_emission(bundle.concentration, mode, rng);
  return bundle;
}

EmissionGrad emission_vjp(const EmissionBundle& bundle, const EmissionHeads& heads,
                          const EmissionHyper& hyper, const LabelSet& labels,
                          DirichletGradient estimator, const Tensor3& d_phi) {
  Tensor3 d_omega = dirichlet_vjp(bundle.concentration, bundle.draw, bundle.mode, estimator, d_phi);
  for (auto& slice : d_omega) slice *= hyper.nu_expan;  // ∂Ω/∂Λ = ∂Ω/∂Δ = ν_expan

  EmissionGrad grad;
  const Matrix d_scaled = expand_base_prior_vjp(bundle.reliability.scaled, hyper, d_omega);
  grad.reliability_out = reliability_vjp(bundle.reliability, d_scaled, hyper, labels);
  if (bundle.addon) grad.scaling_out = addon_vjp(*bundle.addon, *heads.wxor, d_omega);
  return grad;
}

}  // namespace scmm
