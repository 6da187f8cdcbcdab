#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "scmm/error.hpp"
#include "scmm/synth.hpp"
#include "scmm/trainer.hpp"
#include "support/temp_dir.hpp"

namespace scmm {
namespace {

const LabelSet kPer({"PER"});

Instance make(std::vector<std::vector<LabelId>> obs, std::optional<std::vector<LabelId>> gold = std::nullopt) {
  Instance inst;
  const auto T = obs.front().size();
  inst.sentence.id = "x";
  inst.sentence.tokens.assign(T, "w");
  inst.sentence.gold = std::move(gold);
  for (std::size_t k = 0; k < obs.size(); ++k) inst.weak.lf_names.push_back("lf" + std::to_string(k));
  inst.weak.obs = std::move(obs);
  return inst;
}

Split hand_split() {
  Split s;
  s.name = "train";
  s.instances.push_back(make({{1, 2, 0}, {1, 0, 0}}));
  s.instances.push_back(make({{0, 1}, {0, 1}}));
  return s;
}

TEST(InitStats, HandTally) {
  const Split s = hand_split();
  const std::vector<std::vector<LabelId>> pseudo{{1, 2, 0}, {0, 1}};
  InitStats st = compute_init_stats(s, pseudo, 3);
  Matrix psi(3, 3);
  psi << 2.0 / 6, 3.0 / 6, 1.0 / 6,  //
      1.0 / 4, 1.0 / 4, 2.0 / 4,     //
      2.0 / 4, 1.0 / 4, 1.0 / 4;
  EXPECT_TRUE(st.transition.isApprox(psi, 1e-15));
  Matrix phi0(3, 3), phi1(3, 3);
  phi0 << 3.0 / 5, 1.0 / 5, 1.0 / 5,  //
      1.0 / 5, 3.0 / 5, 1.0 / 5,      //
      1.0 / 4, 1.0 / 4, 2.0 / 4;
  phi1 << 3.0 / 5, 1.0 / 5, 1.0 / 5,  //
      1.0 / 5, 3.0 / 5, 1.0 / 5,      //
      2.0 / 4, 1.0 / 4, 1.0 / 4;
  EXPECT_TRUE(st.emission[0].isApprox(phi0, 1e-15));
  EXPECT_TRUE(st.emission[1].isApprox(phi1, 1e-15));

  // No ties in this corpus, so the vote-driven overload sees the same labels.
  std::mt19937_64 rng(1);
  InitStats voted = compute_init_stats(s, 3, rng);
  EXPECT_EQ(voted.transition, st.transition);
  EXPECT_EQ(voted.emission[1], st.emission[1]);
}

TEST(InitStats, AllOutsideCorpus) {
  Split s;
  s.name = "train";
  for (int i = 0; i < 200; ++i) s.instances.push_back(make({std::vector<LabelId>(10, 0), std::vector<LabelId>(10, 0)}));
  std::mt19937_64 rng(2);
  InitStats st = compute_init_stats(s, 5, rng);
  EXPECT_GT(st.transition(0, 0), 0.998);
  EXPECT_GT(st.emission[0](0, 0), 0.998);
  EXPECT_GT(st.emission[1](0, 0), 0.998);
  // Rows never visited stay uniform rather than empty.
  for (int r = 1; r < 5; ++r) {
    EXPECT_TRUE(st.transition.row(r).isApprox(Eigen::RowVectorXd::Constant(5, 0.2)));
    EXPECT_GT(st.emission[0].row(r).minCoeff(), 0.0);
  }
}

TEST(InitStats, EmptySplitRejected) {
  Split s;
  std::mt19937_64 rng(3);
  EXPECT_THROW(compute_init_stats(s, 3, rng), Error);
}

TEST(TrueEmission, CopyAndAbstain) {
  Split s;
  s.name = "gold";
  const std::vector<LabelId> gold{0, 1, 2, 0, 1};
  s.instances.push_back(make({gold, std::vector<LabelId>(5, 0)}, gold));
  Tensor3 t = true_emission_stats(s, 3);
  EXPECT_EQ(t[0], Matrix(Matrix::Identity(3, 3)));
  for (int i = 0; i < 3; ++i) EXPECT_EQ(t[1](i, 0), 1.0);

  Split no_gold = hand_split();
  EXPECT_THROW(true_emission_stats(no_gold, 3), Error);
}

TEST(TrueEmission, UnseenGoldRowIsDeltaOutside) {
  Split s;
  s.name = "gold";
  s.instances.push_back(make({{1, 1}}, std::vector<LabelId>{0, 0}));
  Tensor3 t = true_emission_stats(s, 3);
  EXPECT_EQ(t[0](2, 0), 1.0);
  EXPECT_EQ(t[0].row(2).sum(), 1.0);
}

TEST(TrueEmission, MatchesGeneratorMatrices) {
  SynthConfig cfg;
  cfg.train_size = 9000;
  cfg.valid_size = 1;
  cfg.test_size = 1;
  cfg.embedding_dim = 2;
  SynthCorpus c = generate_corpus(cfg);
  const Split& train = c.dataset.split("train");
  std::vector<long> per_label(5, 0);
  for (const auto& inst : train.instances) {
    for (LabelId y : *inst.sentence.gold) ++per_label[static_cast<std::size_t>(y)];
  }
  for (long n : per_label) ASSERT_GE(n, 5000);
  Tensor3 t = true_emission_stats(train, 5);
  double worst = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) worst = std::max(worst, (t[k] - c.emissions[k]).cwiseAbs().maxCoeff());
  EXPECT_LE(worst, 0.03);
}

TEST(MajorityVoteLf, AppendsOneRow) {
  std::mt19937_64 rng(4);
  Split s = with_majority_vote_lf(hand_split(), 3, rng);
  EXPECT_EQ(s.instances[0].weak.num_lfs(), 3);
  EXPECT_EQ(s.instances[0].weak.lf_names.back(), kMajorityVoteLf);
  EXPECT_EQ(s.instances[0].weak.obs.back(), (std::vector<LabelId>{1, 2, 0}));
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.mix_weight = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.stages[1].patience = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  EXPECT_DOUBLE_EQ(c.g_r_for(1, 5), 0.1);
  EXPECT_DOUBLE_EQ(c.g_r_for(2, 5), 0.01);
  EXPECT_DOUBLE_EQ(c.g_r_for(3, 5), 0.01);
  EXPECT_EQ(c.mix_weight, 0.2);
  EXPECT_EQ(c.stages[2].mode, EmissionMode::mean);
}

// ---------------------------------------------------------------------------
// Trainer on a small synthetic corpus

SynthCorpus small_corpus(int train = 50) {
  SynthConfig cfg;
  cfg.train_size = train;
  cfg.valid_size = 30;
  cfg.test_size = 30;
  cfg.embedding_dim = 8;
  cfg.seed = 11;
  return generate_corpus(cfg);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.pretrain_epochs = 3;
  for (auto& s : c.stages) {
    s.max_epochs = 3;
    s.patience = 2;
  }
  c.threads = 2;
  return c;
}

TEST(Trainer, PretrainLossDecreases) {
  SynthCorpus c = small_corpus(200);
  TrainConfig cfg = quick_config();
  cfg.pretrain_epochs = 8;
  Trainer t(c.dataset, cfg);
  auto losses = t.pretrain(1);
  ASSERT_EQ(losses.size(), 8u);
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1] + 1e-8) << i;
  EXPECT_LT(losses.back(), losses.front());
}

TEST(Trainer, MixWeightOneGivesInitEmission) {
  SynthCorpus c = small_corpus();
  TrainConfig cfg = quick_config();
  cfg.mix_weight = 1.0;
  Trainer t(c.dataset, cfg);
  t.pretrain(1);
  Tensor3 target = t.stage2_target();
  for (std::size_t k = 0; k < target.size(); ++k) EXPECT_EQ(target[k], t.init_stats().emission[k]);
}

TEST(Trainer, FreezeMasksAreBitExact) {
  SynthCorpus c = small_corpus();
  Trainer t(c.dataset, quick_config());
  t.pretrain(1);
  const nn::DenseLayer scaling0 = t.model().scaling_head();
  t.em_stage(1);
  EXPECT_FALSE(t.model().addon_enabled());
  EXPECT_EQ(t.model().scaling_head().weights, scaling0.weights);

  t.aggregate_wxor();
  const nn::DenseLayer trans1 = t.model().transition_head();
  const nn::DenseLayer rel1 = t.model().reliability_head();
  t.pretrain(2);
  t.em_stage(2);
  EXPECT_TRUE(t.model().addon_enabled());
  EXPECT_EQ(t.model().transition_head().weights, trans1.weights);
  EXPECT_EQ(t.model().transition_head().bias, trans1.bias);
  EXPECT_EQ(t.model().reliability_head().weights, rel1.weights);
  EXPECT_EQ(t.model().reliability_head().bias, rel1.bias);

  const nn::DenseLayer rel2 = t.model().reliability_head();
  const nn::DenseLayer sc2 = t.model().scaling_head();
  t.em_stage(3);
  EXPECT_EQ(t.model().reliability_head().weights, rel2.weights);
  EXPECT_EQ(t.model().scaling_head().weights, sc2.weights);
  EXPECT_EQ(t.model().scaling_head().bias, sc2.bias);
}

TEST(Trainer, SmokePipelineWritesArtifacts) {
  SynthCorpus c = small_corpus();
  testing::TempDir dir;
  Trainer t(c.dataset, quick_config(), dir.path());
  TrainReport r = t.train();
  ASSERT_EQ(r.stages.size(), 3u);
  for (const char* name : {"pre1", "s1", "pre2", "s2", "s3"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / (std::string(name) + ".scmp"))) << name;
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "model.scmp"));
  auto report = nlohmann::json::parse(testing::slurp(dir / "report.json"));
  EXPECT_EQ(report["stages"].size(), 3u);
  EXPECT_TRUE(report["majority_vote"].contains("test"));

  std::ifstream log(dir / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    auto j = nlohmann::json::parse(line);
    for (const char* key : {"stage", "epoch", "q_mean", "valid_p", "valid_r", "valid_f1", "seconds"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
    ++lines;
  }
  EXPECT_EQ(static_cast<std::size_t>(lines), t.records().size());

  // s3 checkpoint reloads to the trained model's predictions.
  Checkpoint meta;
  SparseChmm back = Checkpoint::load(dir / "model.scmp", c.dataset.labels(), t.config(), &meta);
  EXPECT_EQ(meta.stage, Stage::s3);
  const Split& test = c.dataset.split("test");
  EXPECT_EQ(predict_split(back, test, 1), predict_split(t.model(), test, 1));
}

TEST(Trainer, MajorityVoteLfOnlyInTraining) {
  SynthCorpus c = small_corpus();
  TrainConfig cfg = quick_config();
  cfg.use_mv = true;
  Trainer t(c.dataset, cfg);
  const int K = static_cast<int>(c.dataset.lf_names().size());
  EXPECT_EQ(t.training_split().instances[0].weak.num_lfs(), K + 1);
  EXPECT_EQ(t.model().shape().num_lfs, K + 1);
  EXPECT_EQ(t.model().shape().active_lfs, K);
  t.pretrain(1);
  t.em_stage(1);
  const Split& test = c.dataset.split("test");
  EXPECT_EQ(test.instances[0].weak.num_lfs(), K);
  EXPECT_NO_THROW(predict_split(t.model(), test, 2));
}

TEST(Trainer, ThreadCountDoesNotChangeResults) {
  SynthCorpus c = small_corpus();
  TrainConfig a = quick_config();
  a.threads = 1;
  TrainConfig b = quick_config();
  b.threads = 4;
  Trainer ta(c.dataset, a), tb(c.dataset, b);
  ta.pretrain(1);
  tb.pretrain(1);
  ta.em_stage(1);
  tb.em_stage(1);
  EXPECT_EQ(ta.model().transition_head().weights, tb.model().transition_head().weights);
  EXPECT_EQ(ta.model().reliability_head().weights, tb.model().reliability_head().weights);
}

TEST(Trainer, EvaluationSplitNeedsGold) {
  SynthCorpus c = small_corpus();
  Dataset ds(c.dataset.labels());
  ds.add_split(c.dataset.split("train"));
  Split valid = c.dataset.split("valid");
  for (auto& inst : valid.instances) inst.sentence.gold.reset();
  ds.add_split(valid);
  EXPECT_THROW(Trainer(ds, quick_config()), Error);
  TrainConfig cfg = quick_config();
  cfg.eval_split = "nope";
  EXPECT_THROW(Trainer(c.dataset, cfg), Error);
}

}  // namespace
}  // namespace scmm
