#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "scmm/error.hpp"
#include "scmm/nn.hpp"
#include "support/oracles.hpp"

namespace scmm::nn {
namespace {

using scmm::testing::check_layer_gradient;
using scmm::testing::random_layer;
using scmm::testing::random_vector;

TEST(Dense, ZeroInputGivesBias) {
  std::mt19937_64 rng(1);
  DenseLayer layer = random_layer(4, 3, rng);
  EXPECT_EQ(layer.apply(Vector::Zero(4)), layer.bias);
}

TEST(Dense, IdentityWeights) {
  DenseLayer layer(3, 3);
  layer.weights = Matrix::Identity(3, 3);
  Vector x(3);
  x << 0.5, -2.0, 7.25;
  EXPECT_EQ(layer.apply(x), x);
}

TEST(Dense, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  for (int rep = 0; rep < 20; ++rep) {
    DenseLayer layer = random_layer(3, 2, rng);
    Vector x = random_vector(3, rng);
    Vector got = layer.apply(x);
    for (int j = 0; j < 2; ++j) {
      double acc = layer.bias(j);
      for (int i = 0; i < 3; ++i) acc += x(i) * layer.weights(i, j);
      EXPECT_NEAR(got(j), acc, 1e-14);
    }
  }
}

TEST(Dense, DimensionMismatch) {
  DenseLayer layer(3, 2);
  try {
    layer.apply(Vector::Zero(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(Dense, GlorotRange) {
  std::mt19937_64 rng(3);
  DenseLayer layer = glorot_uniform(8, 5, rng);
  const double bound = std::sqrt(6.0 / 13.0);
  EXPECT_LE(layer.weights.cwiseAbs().maxCoeff(), bound);
  EXPECT_TRUE(layer.bias.isZero());
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i) {
    EXPECT_EQ(layer.weights.data()[i], round_f32(layer.weights.data()[i]));
  }
}

TEST(Backprop, SumLossWithZeroWeights) {
  DenseLayer layer(3, 2);
  Vector x(3);
  x << 1.0, 2.0, -0.5;
  DenseGrad g(layer);
  g.accumulate(x, Vector::Ones(2));
  EXPECT_EQ(g.bias, Vector::Ones(2));
  EXPECT_EQ(g.weights, (x * Vector::Ones(2).transpose()).eval());
}

TEST(Backprop, SoftmaxLogLossMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  for (int rep = 0; rep < 10; ++rep) {
    DenseLayer layer = random_layer(5, 4, rng);
    Vector x = random_vector(5, rng);
    Vector w = random_vector(4, rng);
    auto f = [&] {
      Vector p = softmax(layer.apply(x));
      double s = 0.0;
      for (int i = 0; i < 4; ++i) s += w(i) * std::log(p(i));
      return s;
    };
    Vector p = softmax(layer.apply(x));
    Vector d_p = w.cwiseQuotient(p);
    DenseGrad g(layer);
    g.accumulate(x, softmax_vjp(p, d_p));
    auto check = check_layer_gradient(layer, g, f);
    EXPECT_LE(check.worst, 1e-4);
    EXPECT_EQ(check.checked, 24);
  }
}

TEST(Backprop, SigmoidMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  DenseLayer layer = random_layer(3, 3, rng);
  Vector x = random_vector(3, rng);
  auto f = [&] {
    Vector z = layer.apply(x);
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (i + 1) * sigmoid(z(i));
    return s;
  };
  Vector z = layer.apply(x);
  Vector d(3);
  for (int i = 0; i < 3; ++i) d(i) = (i + 1) * sigmoid(z(i)) * (1 - sigmoid(z(i)));
  DenseGrad g(layer);
  g.accumulate(x, d);
  EXPECT_LE(check_layer_gradient(layer, g, f).worst, 1e-4);
}

TEST(Activations, SoftmaxSimplexAndSigmoidRange) {
  std::mt19937_64 rng(6);
  for (int rep = 0; rep < 200; ++rep) {
    Vector z = random_vector(1 + rep % 8, rng, 10.0);
    Vector p = softmax(z);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_GT(p.minCoeff(), 0.0);
    const double s = sigmoid(z(0));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  Vector big(2);
  big << 1000.0, 0.0;
  EXPECT_TRUE(softmax(big).allFinite());
  EXPECT_DOUBLE_EQ(sigmoid(0.0), 0.5);
}

TEST(Registry, FrozenHandlesGetNoSlot) {
  DenseLayer a(2, 2), b(2, 2);
  ParamRegistry reg;
  reg.add("a", &a);
  reg.add("b", &b);
  reg.set_trainable("a", false);
  Gradients g = Gradients::for_registry(reg);
  EXPECT_FALSE(g.contains("a"));
  EXPECT_EQ(g.slot("a"), nullptr);
  ASSERT_NE(g.slot("b"), nullptr);
  EXPECT_TRUE(reg.is_frozen("a"));
  reg.freeze_all();
  EXPECT_TRUE(Gradients::for_registry(reg).entries().empty());
}

TEST(Registry, NonFiniteGradientNamesHandle) {
  DenseLayer a(2, 2);
  ParamRegistry reg;
  reg.add("reliability", &a);
  Gradients g = Gradients::for_registry(reg);
  g.slot("reliability")->bias(1) = std::nan("");
  try {
    g.check_finite();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("reliability"), std::string::npos);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::mt19937_64 rng(7);
  DenseLayer a = glorot_uniform(3, 2, rng);
  const DenseLayer before = a;
  ParamRegistry reg;
  reg.add("a", &a);
  Adam adam({}, reg);
  Gradients g = Gradients::for_registry(reg);
  for (int i = 0; i < 5; ++i) adam.step(reg, g);
  EXPECT_EQ(a.weights, before.weights);
  EXPECT_EQ(a.bias, before.bias);
}

TEST(Adam, QuadraticConverges) {
  std::vector<double> x{0.0}, m{0.0}, v{0.0};
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  for (int step = 1; step <= 500; ++step) {
    std::vector<double> g{2.0 * (x[0] - 3.0)};
    adam_update(x, g, m, v, step, cfg);
  }
  EXPECT_LT(std::abs(x[0] - 3.0), 1e-2);
}

TEST(Adam, SecondStepNoLargerThanFirst) {
  // Closed form with constant gradient g: m̂ = g, v̂ = g² at every step, so
  // both steps have magnitude lr·|g|/(|g|+ε).
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  std::vector<double> x{1.0}, m{0.0}, v{0.0};
  const std::vector<double> g{0.7};
  adam_update(x, g, m, v, 1, cfg);
  const double first = 1.0 - x[0];
  const double x1 = x[0];
  adam_update(x, g, m, v, 2, cfg);
  const double second = x1 - x[0];
  const double expected = cfg.learning_rate * 0.7 / (0.7 + cfg.epsilon);
  EXPECT_NEAR(first, expected, 1e-15);
  EXPECT_LE(second, first + 1e-15);
}

TEST(Adam, FrozenHandleUntouched) {
  std::mt19937_64 rng(8);
  DenseLayer a = glorot_uniform(3, 2, rng), b = glorot_uniform(3, 2, rng);
  ParamRegistry reg;
  reg.add("a", &a);
  reg.add("b", &b);
  Adam adam({}, reg);
  Gradients g = Gradients::for_registry(reg);
  g.slot("a")->weights.setOnes();
  g.slot("b")->weights.setOnes();
  reg.set_trainable("a", false);
  const DenseLayer a0 = a, b0 = b;
  adam.step(reg, g);
  EXPECT_EQ(a.weights, a0.weights);
  EXPECT_NE(b.weights, b0.weights);
  EXPECT_EQ(adam.step_count(), 1);
}

TEST(Adam, ParametersStayFloat32) {
  std::mt19937_64 rng(9);
  DenseLayer a = glorot_uniform(3, 2, rng);
  ParamRegistry reg;
  reg.add("a", &a);
  Adam adam({}, reg);
  Gradients g = Gradients::for_registry(reg);
  g.slot("a")->weights = random_layer(3, 2, rng).weights;
  adam.step(reg, g);
  for (Eigen::Index i = 0; i < a.weights.size(); ++i) EXPECT_EQ(a.weights.data()[i], round_f32(a.weights.data()[i]));
}

}  // namespace
}  // namespace scmm::nn
