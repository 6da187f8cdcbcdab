#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scmm/data.hpp"
#include "scmm/emission.hpp"
#include "scmm/eval.hpp"
#include "scmm/model.hpp"
#include "scmm/nn.hpp"

namespace scmm {

enum class Stage { pre1, s1, pre2, s2, s3 };
std::string_view to_string(Stage stage);
Stage stage_from_string(std::string_view tag);

enum class WxorScope { train_valid, valid };

struct StageConfig {
  double learning_rate = 1e-3;
  int max_epochs = 50;
  int patience = 5;
  std::optional<double> g_r;  // stage 1: 1/(2L), stages 2-3: 1/(20L) when unset
  EmissionMode mode = EmissionMode::sample;
};

struct TrainConfig {
  int batch_size = 64;
  double lr_pretrain = 5e-4;
  int pretrain_epochs = 5;
  std::array<StageConfig, 3> stages{
      StageConfig{2e-4, 50, 5, std::nullopt, EmissionMode::sample},
      StageConfig{4e-5, 50, 5, std::nullopt, EmissionMode::sample},
      StageConfig{2e-4, 50, 5, std::nullopt, EmissionMode::mean}};
  double mix_weight = 0.2;  // λ in Φ' = λΦ* + (1-λ)·mean Φ(stage 1)
  bool use_mv = false;
  bool mv_count_outside = false;
  WxorScope wxor_scope = WxorScope::train_valid;
  DirichletGradient estimator = DirichletGradient::mean_path;
  std::uint64_t seed = 42;
  EmissionHyper hyper;
  InitialState init = InitialState::delta_outside;
  std::string train_split = "train";
  std::string eval_split = "valid";
  int threads = 0;  // 0: SCMM_THREADS or hardware concurrency

  void validate() const;
  /// g_r for EM stage 1..3, resolved against the label count.
  double g_r_for(int stage, int num_labels) const;
};

/// Majority-vote-derived starting matrices.
struct InitStats {
  Matrix transition;  // Ψ*, L x L
  Tensor3 emission;   // Φ*, K x L x L
};

/// Add-one smoothed bigram and LF/pseudo-label co-occurrence counts,
/// row-normalized. Transitions include the step out of the O start state.
InitStats compute_init_stats(const Split& split, const std::vector<std::vector<LabelId>>& pseudo_labels,
                             int num_labels);
InitStats compute_init_stats(const Split& split, int num_labels, std::mt19937_64& rng,
                             VoteOptions options = {});

/// Φ_true[k](i,j) = #(x=j, y=i) / #(y=i); rows with no gold support are
/// delta-on-O. Diagnostic only.
Tensor3 true_emission_stats(const Split& split, int num_labels);

/// Appends a majority-vote pseudo-LF row to every sentence.
Split with_majority_vote_lf(const Split& split, int num_labels, std::mt19937_64& rng,
                            VoteOptions options = {});

inline constexpr const char* kMajorityVoteLf = "__majority_vote__";

struct EpochRecord {
  Stage stage;
  int epoch;
  std::optional<double> q_mean;
  MetricReport valid;
  double seconds;
};

std::string to_json_line(const EpochRecord& record);

struct StageResult {
  Stage stage;
  int best_epoch = 0;
  int epochs_run = 0;
  double best_valid_f1 = 0.0;
  std::optional<MetricReport> test;
};

struct TrainReport {
  std::vector<StageResult> stages;
  MetricReport majority_vote_valid;
  std::optional<MetricReport> majority_vote_test;
};

std::string to_json(const TrainReport& report);

/// Saved model plus optimizer state for one pipeline stage.
struct Checkpoint {
  Stage stage = Stage::s3;
  int epoch = 0;
  double best_valid_f1 = 0.0;
  std::optional<nn::Adam> optimizer;

  static void save(const std::filesystem::path& path, const SparseChmm& model, Stage stage, int epoch,
                   double best_valid_f1, const nn::Adam* optimizer);
  /// Loads the model; `hyper` supplies the values a checkpoint does not store.
  static SparseChmm load(const std::filesystem::path& path, const LabelSet& labels,
                         const TrainConfig& config, Checkpoint* meta = nullptr);
};

/// Emission hyperparameters in effect for a stage (g_r is stage-dependent).
EmissionHyper stage_hyper(const TrainConfig& config, Stage stage, int num_labels);

/// Decodes a split with the model (mean mode, Viterbi).
std::vector<std::vector<LabelId>> predict_split(const SparseChmm& model, const Split& split, int threads);
MetricReport evaluate_split(const SparseChmm& model, const Split& split, int threads);

class Trainer {
 public:
  /// `out_dir`, when given, receives checkpoints/ and metrics.jsonl.
  Trainer(const Dataset& dataset, TrainConfig config,
          std::optional<std::filesystem::path> out_dir = std::nullopt);

  const InitStats& init_stats() const { return init_; }
  const SparseChmm& model() const { return model_; }
  SparseChmm& model() { return model_; }
  const TrainConfig& config() const { return config_; }
  const std::vector<EpochRecord>& records() const { return records_; }
  const Split& training_split() const { return train_; }

  /// Stage 1 (all heads, both MSE terms) or stage 2 (scaling head only,
  /// target Φ'). Returns per-epoch mean loss.
  std::vector<double> pretrain(int stage);
  StageResult em_stage(int stage);
  /// Builds the WXOR table from the current model over the configured scope.
  void aggregate_wxor();
  /// Φ' from the current (stage-1) model.
  Tensor3 stage2_target() const;

  TrainReport train();

 private:
  void set_trainable(bool transition, bool reliability, bool scaling);
  double selection_score(const MetricReport& report) const;
  void write_checkpoint(Stage stage, int epoch, double best_f1, const nn::Adam* adam) const;
  void log(const EpochRecord& record);

  const Dataset& dataset_;
  TrainConfig config_;
  std::optional<std::filesystem::path> out_dir_;
  int threads_;
  int num_lfs_real_;
  Split train_;
  Split valid_;
  InitStats init_;
  SparseChmm model_;
  std::vector<EpochRecord> records_;
};

}  // namespace scmm
