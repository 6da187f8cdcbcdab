#include "scmm/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "scmm/error.hpp"
#include "scmm/parallel.hpp"

namespace scmm {
namespace {

using json = nlohmann::ordered_json;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream per (purpose, stage, epoch, index).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ a);
  h = splitmix(h ^ b);
  return splitmix(h ^ c);
}

enum Purpose : std::uint64_t {
  kModelInit = 1,
  kMajority = 2,
  kShuffle = 3,
  kSentence = 4,
  kScalingInit = 5,
  kBaseline = 6,
};

constexpr double kEps = 1e-12;

std::vector<std::vector<LabelId>> vote_split(const Split& split, int num_labels, std::mt19937_64& rng,
                                             VoteOptions options) {
  std::vector<std::vector<LabelId>> out;
  out.reserve(split.size());
  for (const auto& inst : split.instances) out.push_back(majority_vote(inst.weak, num_labels, rng, options));
  return out;
}

Split append_lf(const Split& split, const std::vector<std::vector<LabelId>>& row) {
  Split out = split;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.instances[i].weak.lf_names.push_back(kMajorityVoteLf);
    out.instances[i].weak.obs.push_back(row[i]);
  }
  return out;
}

std::vector<std::vector<LabelId>> gold_of(const Split& split) {
  std::vector<std::vector<LabelId>> out;
  out.reserve(split.size());
  for (const auto& inst : split.instances) out.push_back(*inst.sentence.gold);
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void require_embeddings(const Split& split) {
  if (!split.has_embeddings()) {
    throw Error(ErrorKind::schema, "split '" + split.name + "' has no embeddings attached");
  }
}

int stage_number(Stage stage) {
  switch (stage) {
    case Stage::pre1:
    case Stage::s1:
      return 1;
    case Stage::pre2:
    case Stage::s2:
      return 2;
    case Stage::s3:
      return 3;
  }
  return 1;
}

Stage em_stage_tag(int stage) {
  return stage == 1 ? Stage::s1 : stage == 2 ? Stage::s2 : Stage::s3;
}

json metric_json(const MetricReport& m) {
  return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
              {"true_positive", m.true_positive}, {"predicted", m.predicted}, {"gold", m.gold}};
}

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::pre1: return "pre1";
    case Stage::s1: return "s1";
    case Stage::pre2: return "pre2";
    case Stage::s2: return "s2";
    case Stage::s3: return "s3";
  }
  return "s3";
}

Stage stage_from_string(std::string_view tag) {
  for (Stage s : {Stage::pre1, Stage::s1, Stage::pre2, Stage::s2, Stage::s3}) {
    if (to_string(s) == tag) return s;
  }
  throw Error(ErrorKind::config, "unknown stage '" + std::string(tag) + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::config, msg); };
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(lr_pretrain > 0)) fail("lr_pretrain must be positive");
  if (pretrain_epochs < 0) fail("pretrain_epochs must be non-negative");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    const std::string tag = "stage" + std::to_string(i + 1);
    if (!(s.learning_rate > 0)) fail(tag + ".lr must be positive");
    if (s.max_epochs < 0) fail(tag + ".max_epochs must be non-negative");
    if (s.patience < 1) fail(tag + ".patience must be positive");
    if (s.g_r && !(*s.g_r > 0 && *s.g_r < 1)) fail(tag + ".g_r must lie in (0, 1)");
  }
  if (!(mix_weight >= 0 && mix_weight <= 1)) fail("mix_weight must lie in [0, 1]");
  if (train_split.empty() || eval_split.empty()) fail("split names must be non-empty");
  if (threads < 0) fail("threads must be non-negative");
}

double TrainConfig::g_r_for(int stage, int num_labels) const {
  const auto& s = stages.at(static_cast<std::size_t>(stage - 1));
  if (s.g_r) return *s.g_r;
  return stage == 1 ? 1.0 / (2.0 * num_labels) : 1.0 / (20.0 * num_labels);
}

EmissionHyper stage_hyper(const TrainConfig& config, Stage stage, int num_labels) {
  EmissionHyper h = config.hyper;
  h.g_r = config.g_r_for(stage_number(stage), num_labels);
  return h;
}

InitStats compute_init_stats(const Split& split, const std::vector<std::vector<LabelId>>& pseudo_labels,
                             int num_labels) {
  if (split.size() == 0) throw Error(ErrorKind::schema, "cannot compute statistics of an empty split");
  if (pseudo_labels.size() != split.size()) {
    throw Error(ErrorKind::dimension, "pseudo-label count does not match the split");
  }
  const int L = num_labels;
  const int K = split.instances.front().weak.num_lfs();
  Matrix trans = Matrix::Ones(L, L);
  Tensor3 emis = zeros3(K, L, L);
  for (auto& m : emis) m.setOnes();

  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& inst = split.instances[i];
    const auto& y = pseudo_labels[i];
    if (static_cast<int>(y.size()) != inst.weak.length()) {
      throw Error(ErrorKind::dimension, "pseudo labels of '" + inst.sentence.id + "' have wrong length");
    }
    LabelId prev = LabelSet::kOutside;
    for (std::size_t t = 0; t < y.size(); ++t) {
      trans(prev, y[t]) += 1.0;
      prev = y[t];
      for (int k = 0; k < K; ++k) emis[static_cast<std::size_t>(k)](y[t], inst.weak.at(k, static_cast<int>(t))) += 1.0;
    }
  }
  for (int r = 0; r < L; ++r) trans.row(r) /= trans.row(r).sum();
  for (auto& m : emis) {
    for (int r = 0; r < L; ++r) m.row(r) /= m.row(r).sum();
  }
  return {trans, emis};
}

InitStats compute_init_stats(const Split& split, int num_labels, std::mt19937_64& rng, VoteOptions options) {
  return compute_init_stats(split, vote_split(split, num_labels, rng, options), num_labels);
}

Tensor3 true_emission_stats(const Split& split, int num_labels) {
  if (!split.has_gold()) throw Error(ErrorKind::schema, "split '" + split.name + "' has no gold labels");
  if (split.size() == 0) throw Error(ErrorKind::schema, "cannot compute statistics of an empty split");
  const int L = num_labels;
  const int K = split.instances.front().weak.num_lfs();
  Tensor3 counts = zeros3(K, L, L);
  for (const auto& inst : split.instances) {
    const auto& y = *inst.sentence.gold;
    for (int k = 0; k < K; ++k) {
      for (std::size_t t = 0; t < y.size(); ++t) {
        counts[static_cast<std::size_t>(k)](y[t], inst.weak.at(k, static_cast<int>(t))) += 1.0;
      }
    }
  }
  for (auto& m : counts) {
    for (int r = 0; r < L; ++r) {
      const double total = m.row(r).sum();
      if (total > 0) {
        m.row(r) /= total;
      } else {
        m.row(r).setZero();
        m(r, LabelSet::kOutside) = 1.0;
      }
    }
  }
  return counts;
}

Split with_majority_vote_lf(const Split& split, int num_labels, std::mt19937_64& rng, VoteOptions options) {
  return append_lf(split, vote_split(split, num_labels, rng, options));
}

std::string to_json_line(const EpochRecord& r) {
  json j;
  j["stage"] = std::string(to_string(r.stage));
  j["epoch"] = r.epoch;
  j["q_mean"] = r.q_mean ? json(*r.q_mean) : json(nullptr);
  j["valid_p"] = r.valid.precision;
  j["valid_r"] = r.valid.recall;
  j["valid_f1"] = r.valid.f1;
  j["seconds"] = r.seconds;
  return j.dump();
}

std::string to_json(const TrainReport& report) {
  json j;
  j["majority_vote"] = json{{"valid", metric_json(report.majority_vote_valid)}};
  if (report.majority_vote_test) j["majority_vote"]["test"] = metric_json(*report.majority_vote_test);
  json stages = json::array();
  for (const auto& s : report.stages) {
    json e{{"stage", std::string(to_string(s.stage))},
           {"best_epoch", s.best_epoch},
           {"epochs_run", s.epochs_run},
           {"best_valid_f1", s.best_valid_f1}};
    if (s.test) e["test"] = metric_json(*s.test);
    stages.push_back(e);
  }
  j["stages"] = stages;
  return j.dump(2);
}

void Checkpoint::save(const std::filesystem::path& path, const SparseChmm& model, Stage stage, int epoch,
                      double best_valid_f1, const nn::Adam* optimizer) {
  TensorTable table;
  model.save_tensors(table);
  table.put_scalar("meta.stage", static_cast<double>(static_cast<int>(stage)));
  table.put_scalar("meta.epoch", epoch);
  table.put_scalar("meta.best_valid_f1", best_valid_f1);
  if (optimizer) {
    table.put_scalar("adam.step", static_cast<double>(optimizer->step_count()));
    table.put_scalar("adam.lr", optimizer->config().learning_rate);
    for (const auto& [name, m] : optimizer->moments()) {
      table.put("adam." + name + ".m_weights", m.m_weights);
      table.put("adam." + name + ".v_weights", m.v_weights);
      table.put("adam." + name + ".m_bias", m.m_bias);
      table.put("adam." + name + ".v_bias", m.v_bias);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  table.save(path);
}

SparseChmm Checkpoint::load(const std::filesystem::path& path, const LabelSet& labels,
                            const TrainConfig& config, Checkpoint* meta) {
  const TensorTable table = TensorTable::load(path);
  Stage stage = Stage::s3;
  if (table.contains("meta.stage")) {
    const int s = static_cast<int>(table.scalar("meta.stage"));
    if (s < 0 || s > static_cast<int>(Stage::s3)) throw Error(ErrorKind::format, "checkpoint has an invalid stage");
    stage = static_cast<Stage>(s);
  }
  SparseChmm model = SparseChmm::load_tensors(table, labels, stage_hyper(config, stage, labels.size()), config.init);
  if (meta) {
    meta->stage = stage;
    meta->epoch = table.contains("meta.epoch") ? static_cast<int>(table.scalar("meta.epoch")) : 0;
    meta->best_valid_f1 = table.contains("meta.best_valid_f1") ? table.scalar("meta.best_valid_f1") : 0.0;
    meta->optimizer.reset();
    if (table.contains("adam.step")) {
      nn::Adam adam(nn::AdamConfig{table.scalar("adam.lr")}, model.registry());
      std::map<std::string, nn::Adam::Moments> moments;
      for (const auto& name : model.registry().names()) {
        const std::string p = "adam." + name + ".";
        if (!table.contains(p + "m_weights")) continue;
        moments[name] = {table.matrix(p + "m_weights"), table.matrix(p + "v_weights"),
                         table.vector(p + "m_bias"), table.vector(p + "v_bias")};
      }
      adam.restore(static_cast<std::int64_t>(table.scalar("adam.step")), std::move(moments));
      meta->optimizer = std::move(adam);
    }
  }
  return model;
}

std::vector<std::vector<LabelId>> predict_split(const SparseChmm& model, const Split& split, int threads) {
  require_embeddings(split);
  std::vector<std::vector<LabelId>> out(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) { out[i] = model.decode(split.instances[i]).labels; });
  return out;
}

MetricReport evaluate_split(const SparseChmm& model, const Split& split, int threads) {
  if (!split.has_gold()) throw Error(ErrorKind::schema, "split '" + split.name + "' has no gold labels");
  return entity_prf(gold_of(split), predict_split(model, split, threads), model.labels());
}

namespace {

SparseChmm make_model(const Dataset& dataset, const TrainConfig& config, const Split& train, int real_lfs) {
  config.validate();
  if (train.size() == 0) throw Error(ErrorKind::schema, "training split is empty");
  require_embeddings(train);
  ModelShape shape;
  shape.embedding_dim = train.instances.front().embedding->dim();
  shape.num_lfs = train.instances.front().weak.num_lfs();
  shape.active_lfs = real_lfs;
  return SparseChmm(dataset.labels(), shape, stage_hyper(config, Stage::s1, dataset.labels().size()),
                    config.init, stream_seed(config.seed, kModelInit));
}

const Split& find_split(const Dataset& dataset, const std::string& name, const char* role) {
  if (!dataset.has_split(name)) {
    throw Error(ErrorKind::config, std::string(role) + " split '" + name + "' is not loaded");
  }
  return dataset.split(name);
}

}  // namespace

Trainer::Trainer(const Dataset& dataset, TrainConfig config, std::optional<std::filesystem::path> out_dir)
    : dataset_(dataset),
      config_(std::move(config)),
      out_dir_(std::move(out_dir)),
      threads_(config_.threads > 0 ? config_.threads : worker_threads()),
      num_lfs_real_(static_cast<int>(dataset.lf_names().size())),
      train_(find_split(dataset, config_.train_split, "training")),
      valid_(find_split(dataset, config_.eval_split, "evaluation")),
      init_(),
      model_([&]() -> SparseChmm {
        const int L = dataset.labels().size();
        VoteOptions opts{config_.mv_count_outside, -1};
        std::mt19937_64 rng(stream_seed(config_.seed, kMajority));
        const auto pseudo = vote_split(train_, L, rng, opts);
        if (config_.use_mv) {
          auto valid_votes = vote_split(valid_, L, rng, opts);
          train_ = append_lf(train_, pseudo);
          valid_ = append_lf(valid_, valid_votes);
        }
        init_ = compute_init_stats(train_, pseudo, L);
        return make_model(dataset, config_, train_, num_lfs_real_);
      }()) {
  require_embeddings(valid_);
  if (!valid_.has_gold()) {
    throw Error(ErrorKind::schema, "evaluation split '" + valid_.name + "' needs gold labels for model selection");
  }
  if (out_dir_) {
    std::filesystem::create_directories(*out_dir_ / "checkpoints");
    std::ofstream(*out_dir_ / "metrics.jsonl", std::ios::trunc);
  }
}

void Trainer::set_trainable(bool transition, bool reliability, bool scaling) {
  auto& reg = model_.registry();
  reg.set_trainable(kTransitionHead, transition);
  reg.set_trainable(kReliabilityHead, reliability);
  reg.set_trainable(kScalingHead, scaling);
}

void Trainer::log(const EpochRecord& record) {
  records_.push_back(record);
  if (!out_dir_) return;
  std::ofstream out(*out_dir_ / "metrics.jsonl", std::ios::app);
  out << to_json_line(record) << '\n';
  if (!out) throw Error(ErrorKind::io, "cannot append to metrics log");
}

void Trainer::write_checkpoint(Stage stage, int epoch, double best_f1, const nn::Adam* adam) const {
  if (!out_dir_) return;
  Checkpoint::save(*out_dir_ / "checkpoints" / (std::string(to_string(stage)) + ".scmp"), model_, stage, epoch,
                   best_f1, adam);
}

Tensor3 Trainer::stage2_target() const {
  const auto K = static_cast<std::size_t>(model_.shape().num_lfs);
  const int L = model_.num_labels();
  std::vector<Tensor3> per(train_.size());
  parallel_for(train_.size(), threads_, [&](std::size_t i) {
    per[i] = model_.emission(train_.instances[i].embedding->sentence(), EmissionMode::mean, nullptr).emission();
  });
  Tensor3 mean = zeros3(static_cast<int>(K), L, L);
  for (const auto& phi : per) {
    for (std::size_t k = 0; k < K; ++k) mean[k] += phi[k];
  }
  const double lambda = config_.mix_weight;
  Tensor3 target(K);
  for (std::size_t k = 0; k < K; ++k) {
    target[k] = lambda * init_.emission[k] + (1.0 - lambda) * mean[k] / static_cast<double>(train_.size());
  }
  return target;
}

std::vector<double> Trainer::pretrain(int stage) {
  if (stage != 1 && stage != 2) throw Error(ErrorKind::usage, "pretraining stage must be 1 or 2");
  const int L = model_.num_labels();
  Tensor3 mixed;
  PretrainTargets targets;
  if (stage == 1) {
    model_.enable_addon(false);
    model_.hyper() = stage_hyper(config_, Stage::pre1, L);
    set_trainable(true, true, false);
    targets = {&init_.transition, &init_.emission};
  } else {
    if (!model_.wxor()) aggregate_wxor();
    model_.enable_addon(false);
    model_.hyper() = stage_hyper(config_, Stage::pre1, L);
    mixed = stage2_target();
    std::mt19937_64 rng(stream_seed(config_.seed, kScalingInit));
    model_.reset_scaling_head(rng);
    model_.enable_addon(true);
    model_.hyper() = stage_hyper(config_, Stage::pre2, L);
    set_trainable(false, false, true);
    targets = {nullptr, &mixed};
  }
  const Stage tag = stage == 1 ? Stage::pre1 : Stage::pre2;

  nn::Adam adam(nn::AdamConfig{config_.lr_pretrain}, model_.registry());
  std::vector<double> losses;
  std::vector<std::size_t> order(train_.size());
  const auto B = static_cast<std::size_t>(config_.batch_size);
  for (int epoch = 1; epoch <= config_.pretrain_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle(stream_seed(config_.seed, kShuffle, static_cast<std::uint64_t>(tag), epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    double total = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += B) {
      const std::size_t n = std::min(B, order.size() - lo);
      std::vector<SentenceObjective> parts(n);
      parallel_for(n, threads_, [&](std::size_t i) {
        parts[i] = pretrain_objective(model_, train_.instances[order[lo + i]], targets);
      });
      nn::Gradients grads = nn::Gradients::for_registry(model_.registry());
      for (const auto& p : parts) {
        total += p.value;
        grads.add(p.grads);
      }
      grads.scale(1.0 / static_cast<double>(n));
      grads.check_finite();
      adam.step(model_.registry(), grads);
    }
    losses.push_back(total / static_cast<double>(order.size()));
  }
  write_checkpoint(tag, config_.pretrain_epochs, 0.0, &adam);
  return losses;
}

void Trainer::aggregate_wxor() {
  const int K = model_.shape().num_lfs;
  WxorAccumulator acc(K, model_.num_labels());
  std::vector<const Split*> scope;
  if (config_.wxor_scope == WxorScope::train_valid) scope.push_back(&train_);
  scope.push_back(&valid_);
  for (const Split* split : scope) {
    std::vector<Matrix> scaled(split->size());
    parallel_for(split->size(), threads_, [&](std::size_t i) {
      const auto& inst = split->instances[i];
      scaled[i] = predict_reliability(inst.embedding->sentence(), model_.reliability_head(), model_.hyper(),
                                      model_.labels())
                      .scaled;
    });
    for (std::size_t i = 0; i < split->size(); ++i) acc.add_sentence(split->instances[i].weak, scaled[i]);
  }
  model_.set_wxor(acc.finish());
}

double Trainer::selection_score(const MetricReport& report) const { return report.f1; }

StageResult Trainer::em_stage(int stage) {
  if (stage < 1 || stage > 3) throw Error(ErrorKind::usage, "EM stage must be 1, 2 or 3");
  const Stage tag = em_stage_tag(stage);
  const auto& sc = config_.stages[static_cast<std::size_t>(stage - 1)];
  model_.hyper() = stage_hyper(config_, tag, model_.num_labels());
  if (stage == 1) {
    model_.enable_addon(false);
    set_trainable(true, true, false);
  } else {
    if (!model_.wxor()) aggregate_wxor();
    model_.enable_addon(true);
    if (stage == 2) set_trainable(false, false, true);
    else set_trainable(true, false, false);
  }

  nn::Adam adam(nn::AdamConfig{sc.learning_rate}, model_.registry());
  const EmOptions options{sc.mode, config_.estimator};

  StageResult result;
  result.stage = tag;
  auto start = std::chrono::steady_clock::now();
  MetricReport report = evaluate_split(model_, valid_, threads_);
  log({tag, 0, std::nullopt, report, seconds_since(start)});
  double best = selection_score(report);
  result.best_valid_f1 = report.f1;
  SparseChmm best_model = model_;
  std::optional<nn::Adam> best_adam;
  int since_best = 0;

  std::vector<std::size_t> order(train_.size());
  const auto B = static_cast<std::size_t>(config_.batch_size);
  for (int epoch = 1; epoch <= sc.max_epochs; ++epoch) {
    start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle(stream_seed(config_.seed, kShuffle, static_cast<std::uint64_t>(tag), epoch));
    std::shuffle(order.begin(), order.end(), shuffle);
    double q_total = 0.0;
    double tokens_total = 0.0;
    for (std::size_t lo = 0; lo < order.size(); lo += B) {
      const std::size_t n = std::min(B, order.size() - lo);
      std::vector<SentenceObjective> parts(n);
      parallel_for(n, threads_, [&](std::size_t i) {
        const std::size_t idx = order[lo + i];
        std::mt19937_64 rng(stream_seed(config_.seed, kSentence,
                                        (static_cast<std::uint64_t>(tag) << 32) | static_cast<std::uint64_t>(epoch),
                                        idx));
        parts[i] = em_objective(model_, train_.instances[idx], options, &rng);
      });
      nn::Gradients grads = nn::Gradients::for_registry(model_.registry());
      double q = 0.0;
      double tokens = 0.0;
      for (const auto& p : parts) {
        q += p.value;
        tokens += p.tokens;
        grads.add(p.grads);
      }
      q_total += q;
      tokens_total += tokens;
      grads.scale(-1.0 / std::max(tokens, 1.0));
      grads.check_finite();
      adam.step(model_.registry(), grads);
    }
    report = evaluate_split(model_, valid_, threads_);
    const double q_mean = q_total / std::max(tokens_total, 1.0);
    if (!std::isfinite(q_mean)) throw Error(ErrorKind::numeric, "expected log-likelihood became non-finite");
    log({tag, epoch, q_mean, report, seconds_since(start)});
    result.epochs_run = epoch;
    const double score = selection_score(report);
    if (score > best + kEps) {
      best = score;
      result.best_epoch = epoch;
      result.best_valid_f1 = report.f1;
      best_model = model_;
      best_adam = adam;
      since_best = 0;
    } else if (++since_best >= sc.patience) {
      break;
    }
  }
  model_ = std::move(best_model);
  // Freeze flags live in the layers; keep the stage's mask after restoring.
  if (stage == 1) set_trainable(true, true, false);
  else if (stage == 2) set_trainable(false, false, true);
  else set_trainable(true, false, false);

  if (dataset_.has_split("test")) {
    const Split& test = dataset_.split("test");
    if (test.has_gold() && test.has_embeddings()) result.test = evaluate_split(model_, test, threads_);
  }
  write_checkpoint(tag, result.best_epoch, result.best_valid_f1, best_adam ? &*best_adam : nullptr);
  return result;
}

TrainReport Trainer::train() {
  TrainReport report;
  const int L = model_.num_labels();
  VoteOptions opts{config_.mv_count_outside, num_lfs_real_};
  {
    std::mt19937_64 rng(stream_seed(config_.seed, kBaseline));
    const Split& valid = dataset_.split(config_.eval_split);
    report.majority_vote_valid = entity_prf(gold_of(valid), vote_split(valid, L, rng, opts), model_.labels());
    if (dataset_.has_split("test") && dataset_.split("test").has_gold()) {
      const Split& test = dataset_.split("test");
      report.majority_vote_test = entity_prf(gold_of(test), vote_split(test, L, rng, opts), model_.labels());
    }
  }
  pretrain(1);
  report.stages.push_back(em_stage(1));
  aggregate_wxor();
  pretrain(2);
  report.stages.push_back(em_stage(2));
  report.stages.push_back(em_stage(3));
  if (out_dir_) {
    std::filesystem::copy_file(*out_dir_ / "checkpoints" / "s3.scmp", *out_dir_ / "model.scmp",
                               std::filesystem::copy_options::overwrite_existing);
    std::ofstream(*out_dir_ / "report.json") << to_json(report) << '\n';
  }
  return report;
}

}  // namespace scmm
