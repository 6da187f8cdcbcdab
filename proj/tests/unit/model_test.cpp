#include <gtest/gtest.h>

#include <random>

#include "scmm/error.hpp"
#include "scmm/model.hpp"
#include "support/gradient_suite.hpp"
#include "support/temp_dir.hpp"

namespace scmm {
namespace {

using testing::random_instance;

const LabelSet kPerLoc({"PER", "LOC"});

SparseChmm small_model(std::uint64_t seed, int K = 3, int d = 5) {
  EmissionHyper h;
  h.g_r = 0.1;
  SparseChmm m(kPerLoc, ModelShape{d, K, K}, h, InitialState::delta_outside, seed);
  std::mt19937_64 rng(seed);
  testing::randomize_heads(m, rng, 0.5);
  return m;
}

TEST(Model, GradientsMatchFiniteDifferences) {
  auto r = testing::run_gradient_suite(101, 4);
  EXPECT_GT(r.checked, 1000);
  EXPECT_LE(r.worst, 1e-4) << r.worst_at;
}

TEST(Model, StageOneHasNoAddon) {
  auto m = small_model(1);
  std::mt19937_64 rng(2);
  m.set_wxor(testing::random_wxor(3, 5, rng));
  m.enable_addon(false);
  Vector e = testing::random_vector(5, rng);
  auto b = m.emission(e, EmissionMode::mean, nullptr);
  EXPECT_FALSE(b.addon.has_value());
  Tensor3 expect = build_concentration(b.base_prior, nullptr, m.hyper());
  for (int k = 0; k < 3; ++k) EXPECT_EQ(b.concentration[k], expect[k]);
  m.enable_addon(true);
  EXPECT_TRUE(m.emission(e, EmissionMode::mean, nullptr).addon.has_value());
}

TEST(Model, FrozenHeadsGetNoGradient) {
  auto m = small_model(3);
  std::mt19937_64 rng(4);
  auto inst = random_instance(3, 4, 5, 5, rng);
  m.registry().set_trainable(kReliabilityHead, false);
  m.registry().set_trainable(kScalingHead, false);
  auto obj = em_objective(m, inst, EmOptions{}, nullptr);
  EXPECT_TRUE(obj.grads.contains(kTransitionHead));
  EXPECT_FALSE(obj.grads.contains(kReliabilityHead));
  EXPECT_FALSE(obj.grads.contains(kScalingHead));
}

TEST(Model, LogLikelihoodAgreesWithForwardBackward) {
  auto m = small_model(5);
  std::mt19937_64 rng(6);
  auto inst = random_instance(3, 6, 5, 5, rng);
  auto b = m.emission(inst.embedding->sentence(), EmissionMode::mean, nullptr);
  auto fb = forward_backward(m.transitions(*inst.embedding), emission_evidence(b.emission(), inst.weak, 3));
  EXPECT_NEAR(sentence_log_likelihood(m, inst), fb.log_likelihood, 1e-12);
  auto enumerated = testing::enumerate_paths(m.transitions(*inst.embedding), emission_evidence(b.emission(), inst.weak, 3));
  EXPECT_NEAR(fb.log_likelihood, enumerated.log_z, 1e-8 * std::abs(enumerated.log_z));
}

TEST(Model, DecodeUsesOnlyActiveLfs) {
  EmissionHyper h;
  h.g_r = 0.1;
  SparseChmm m(kPerLoc, ModelShape{4, 3, 2}, h, InitialState::delta_outside, 7);
  std::mt19937_64 rng(8);
  auto inst = random_instance(3, 5, 5, 4, rng);
  auto a = m.decode(inst);
  for (auto& v : inst.weak.obs[2]) v = (v + 1) % 5;
  EXPECT_EQ(m.decode(inst).labels, a.labels);
}

TEST(Model, SentenceLfCountChecked) {
  auto m = small_model(9);
  std::mt19937_64 rng(10);
  auto inst = random_instance(2, 3, 5, 5, rng);
  EXPECT_THROW(em_objective(m, inst, EmOptions{}, nullptr), Error);
}

TEST(Model, TensorRoundTripIsBitIdentical) {
  auto m = small_model(11);
  std::mt19937_64 rng(12);
  m.set_wxor(testing::random_wxor(3, 5, rng));
  m.enable_addon(true);
  // Checkpoints hold float32 values; start from representable weights.
  for (const auto& name : m.registry().names()) {
    nn::round_f32(m.registry().layer(name).weights);
    nn::round_f32(m.registry().layer(name).bias);
  }
  testing::TempDir dir;
  TensorTable table;
  m.save_tensors(table);
  table.save(dir / "m.scmp");
  auto back = SparseChmm::load_tensors(TensorTable::load(dir / "m.scmp"), kPerLoc, m.hyper(), m.initial_state());
  EXPECT_TRUE(back.addon_enabled());
  for (int i = 0; i < 10; ++i) {
    auto inst = random_instance(3, 3 + i % 5, 5, 5, rng);
    EXPECT_EQ(back.decode(inst).labels, m.decode(inst).labels);
    EXPECT_EQ(back.decode(inst).log_score, m.decode(inst).log_score);
    auto e1 = m.emission(inst.embedding->sentence(), EmissionMode::mean, nullptr).emission();
    auto e2 = back.emission(inst.embedding->sentence(), EmissionMode::mean, nullptr).emission();
    for (int k = 0; k < 3; ++k) EXPECT_EQ(e1[k], e2[k]);
  }
}

TEST(Checkpoint, FormatErrors) {
  testing::TempDir dir;
  auto p = dir.write("bad.scmp", "XXXX\x01\x00\x00\x00");
  EXPECT_THROW(TensorTable::load(p), Error);
  TensorTable t;
  t.put_scalar("x", 2.5);
  t.save(dir / "ok.scmp");
  std::string bytes = testing::slurp(dir / "ok.scmp");
  p = dir.write("short.scmp", bytes.substr(0, bytes.size() - 2));
  EXPECT_THROW(TensorTable::load(p), Error);
  EXPECT_EQ(TensorTable::load(dir / "ok.scmp").scalar("x"), 2.5);
  EXPECT_THROW(TensorTable::load(dir / "missing.scmp"), Error);
}

}  // namespace
}  // namespace scmm
