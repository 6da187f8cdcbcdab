#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "scmm/tensor.hpp"

namespace scmm::nn {

/// Fully connected layer: output = weightsᵀ · input + bias, with weights
/// stored d_in x d_out.
struct DenseLayer {
  Matrix weights;
  Vector bias;
  bool trainable = true;

  DenseLayer() = default;
  DenseLayer(int in_dim, int out_dim)
      : weights(Matrix::Zero(in_dim, out_dim)), bias(Vector::Zero(out_dim)) {}

  int in_dim() const { return static_cast<int>(weights.rows()); }
  int out_dim() const { return static_cast<int>(weights.cols()); }

  Vector apply(const Vector& input) const;
};

/// Uniform in ±sqrt(6 / (d_in + d_out)), zero bias. Values are rounded to
/// float32 so checkpoints round-trip exactly.
DenseLayer glorot_uniform(int in_dim, int out_dim, std::mt19937_64& rng);

struct DenseGrad {
  Matrix weights;
  Vector bias;

  DenseGrad() = default;
  explicit DenseGrad(const DenseLayer& layer)
      : weights(Matrix::Zero(layer.in_dim(), layer.out_dim())),
        bias(Vector::Zero(layer.out_dim())) {}

  /// Chain rule through dense_apply for one input/upstream-gradient pair.
  void accumulate(const Vector& input, const Vector& d_output);
  bool all_finite() const;
};

Vector softmax(const Vector& logits);
/// Vector-Jacobian product of softmax given its output.
Vector softmax_vjp(const Vector& probs, const Vector& d_probs);
double sigmoid(double x);

/// Named handles to the trainable layers plus their freeze state.
class ParamRegistry {
 public:
  void add(const std::string& name, DenseLayer* layer);

  bool contains(const std::string& name) const { return layers_.count(name) != 0; }
  DenseLayer& layer(const std::string& name);
  const DenseLayer& layer(const std::string& name) const;
  std::vector<std::string> names() const;

  void freeze_all();
  void set_trainable(const std::string& name, bool trainable);
  bool is_frozen(const std::string& name) const { return !layer(name).trainable; }

 private:
  std::map<std::string, DenseLayer*> layers_;
};

/// Gradient map keyed by handle name. Only unfrozen handles get a slot.
class Gradients {
 public:
  Gradients() = default;
  static Gradients for_registry(const ParamRegistry& registry);

  bool contains(const std::string& name) const { return grads_.count(name) != 0; }
  /// nullptr for absent (frozen) handles.
  DenseGrad* slot(const std::string& name);
  const DenseGrad& at(const std::string& name) const;
  const std::map<std::string, DenseGrad>& entries() const { return grads_; }

  void add(const Gradients& other);
  void scale(double factor);
  /// Throws a numeric error naming the first handle with a non-finite entry.
  void check_finite() const;

 private:
  std::map<std::string, DenseGrad> grads_;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One bias-corrected adaptive-moment update on raw buffers. `step` is the
/// 1-based update count.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, std::int64_t step, const AdamConfig& config);

class Adam {
 public:
  struct Moments {
    Matrix m_weights, v_weights;
    Vector m_bias, v_bias;
  };

  Adam(AdamConfig config, const ParamRegistry& registry);

  /// Descends along `grads` for every unfrozen handle that has a gradient.
  /// Parameters and moments are kept float32-representable.
  void step(ParamRegistry& registry, const Gradients& grads);

  std::int64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return config_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  void restore(std::int64_t step_count, std::map<std::string, Moments> moments);

 private:
  AdamConfig config_;
  std::int64_t step_count_ = 0;
  std::map<std::string, Moments> moments_;
};

inline double round_f32(double x) { return static_cast<double>(static_cast<float>(x)); }
void round_f32(Matrix& m);
void round_f32(Vector& v);

}  // namespace scmm::nn
