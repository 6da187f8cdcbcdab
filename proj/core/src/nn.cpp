#include "scmm/nn.hpp"

#include <cmath>

#include "scmm/error.hpp"

namespace scmm::nn {

Vector DenseLayer::apply(const Vector& input) const {
  if (input.size() != weights.rows()) {
    throw Error(ErrorKind::dimension, "dense layer expects input of size " +
                                          std::to_string(weights.rows()) + ", got " +
                                          std::to_string(input.size()));
  }
  return weights.transpose() * input + bias;
}

DenseLayer glorot_uniform(int in_dim, int out_dim, std::mt19937_64& rng) {
  DenseLayer layer(in_dim, out_dim);
  const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (int c = 0; c < out_dim; ++c) {
    for (int r = 0; r < in_dim; ++r) layer.weights(r, c) = round_f32(dist(rng));
  }
  return layer;
}

void DenseGrad::accumulate(const Vector& input, const Vector& d_output) {
  weights.noalias() += input * d_output.transpose();
  bias += d_output;
}

bool DenseGrad::all_finite() const { return weights.allFinite() && bias.allFinite(); }

Vector softmax(const Vector& logits) {
  const double top = logits.maxCoeff();
  Vector out = (logits.array() - top).exp();
  return out / out.sum();
}

Vector softmax_vjp(const Vector& probs, const Vector& d_probs) {
  const double inner = probs.dot(d_probs);
  return probs.array() * (d_probs.array() - inner);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void ParamRegistry::add(const std::string& name, DenseLayer* layer) {
  if (!layers_.emplace(name, layer).second) {
    throw Error(ErrorKind::schema, "duplicate parameter handle '" + name + "'");
  }
}

DenseLayer& ParamRegistry::layer(const std::string& name) {
  auto it = layers_.find(name);
  if (it == layers_.end()) throw Error(ErrorKind::schema, "unknown parameter handle '" + name + "'");
  return *it->second;
}

const DenseLayer& ParamRegistry::layer(const std::string& name) const {
  auto it = layers_.find(name);
  if (it == layers_.end()) throw Error(ErrorKind::schema, "unknown parameter handle '" + name + "'");
  return *it->second;
}

std::vector<std::string> ParamRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : layers_) out.push_back(name);
  return out;
}

void ParamRegistry::freeze_all() {
  for (auto& [_, layer] : layers_) layer->trainable = false;
}

void ParamRegistry::set_trainable(const std::string& name, bool trainable) {
  layer(name).trainable = trainable;
}

Gradients Gradients::for_registry(const ParamRegistry& registry) {
  Gradients g;
  for (const auto& name : registry.names()) {
    if (!registry.is_frozen(name)) g.grads_.emplace(name, DenseGrad(registry.layer(name)));
  }
  return g;
}

DenseGrad* Gradients::slot(const std::string& name) {
  auto it = grads_.find(name);
  return it == grads_.end() ? nullptr : &it->second;
}

const DenseGrad& Gradients::at(const std::string& name) const {
  auto it = grads_.find(name);
  if (it == grads_.end()) throw Error(ErrorKind::schema, "no gradient for handle '" + name + "'");
  return it->second;
}

void Gradients::add(const Gradients& other) {
  for (const auto& [name, g] : other.grads_) {
    auto it = grads_.find(name);
    if (it == grads_.end()) {
      grads_.emplace(name, g);
    } else {
      it->second.weights += g.weights;
      it->second.bias += g.bias;
    }
  }
}

void Gradients::scale(double factor) {
  for (auto& [_, g] : grads_) {
    g.weights *= factor;
    g.bias *= factor;
  }
}

void Gradients::check_finite() const {
  for (const auto& [name, g] : grads_) {
    if (!g.all_finite()) {
      throw Error(ErrorKind::numeric, "non-finite gradient for handle '" + name + "'");
    }
  }
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::int64_t step, const AdamConfig& config) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw Error(ErrorKind::dimension, "adam update: buffer sizes disagree");
  }
  const double t = static_cast<double>(step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grads[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / correction1;
    const double v_hat = v[i] / correction2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
}

void round_f32(Matrix& m) { m = m.unaryExpr([](double x) { return round_f32(x); }); }
void round_f32(Vector& v) { v = v.unaryExpr([](double x) { return round_f32(x); }); }

Adam::Adam(AdamConfig config, const ParamRegistry& registry) : config_(config) {
  for (const auto& name : registry.names()) {
    const auto& layer = registry.layer(name);
    moments_.emplace(name, Moments{Matrix::Zero(layer.in_dim(), layer.out_dim()),
                                   Matrix::Zero(layer.in_dim(), layer.out_dim()),
                                   Vector::Zero(layer.out_dim()), Vector::Zero(layer.out_dim())});
  }
}

void Adam::step(ParamRegistry& registry, const Gradients& grads) {
  ++step_count_;
  for (const auto& [name, g] : grads.entries()) {
    if (registry.is_frozen(name)) continue;
    auto& layer = registry.layer(name);
    auto& mom = moments_.at(name);
    if (g.weights.rows() != layer.weights.rows() || g.weights.cols() != layer.weights.cols() ||
        g.bias.size() != layer.bias.size()) {
      throw Error(ErrorKind::dimension, "gradient shape mismatch for handle '" + name + "'");
    }
    auto span_of = [](auto& dense) { return std::span<double>(dense.data(), static_cast<std::size_t>(dense.size())); };
    auto cspan_of = [](const auto& dense) {
      return std::span<const double>(dense.data(), static_cast<std::size_t>(dense.size()));
    };
    adam_update(span_of(layer.weights), cspan_of(g.weights), span_of(mom.m_weights),
                span_of(mom.v_weights), step_count_, config_);
    adam_update(span_of(layer.bias), cspan_of(g.bias), span_of(mom.m_bias), span_of(mom.v_bias),
                step_count_, config_);
    round_f32(layer.weights);
    round_f32(layer.bias);
    round_f32(mom.m_weights);
    round_f32(mom.v_weights);
    round_f32(mom.m_bias);
    round_f32(mom.v_bias);
  }
}

void Adam::restore(std::int64_t step_count, std::map<std::string, Moments> moments) {
  step_count_ = step_count;
  moments_ = std::move(moments);
}

}  // namespace scmm::nn
