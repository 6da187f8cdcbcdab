#include "scmm/model.hpp"

#include "scmm/error.hpp"

namespace scmm {

SparseChmm::SparseChmm(LabelSet labels, ModelShape shape, EmissionHyper hyper, InitialState init,
                       std::uint64_t seed)
    : labels_(std::move(labels)), shape_(shape), hyper_(hyper), init_(init) {
  if (shape_.embedding_dim < 1 || shape_.num_lfs < 1 || shape_.active_lfs < 1 ||
      shape_.active_lfs > shape_.num_lfs) {
    throw Error(ErrorKind::dimension, "invalid model shape");
  }
  hyper_.validate(shape_.num_lfs);
  const int L = labels_.size();
  std::mt19937_64 rng(seed);
  transition_ = nn::glorot_uniform(shape_.embedding_dim, L * L, rng);
  reliability_ = nn::glorot_uniform(shape_.embedding_dim,
                                    shape_.num_lfs * reliability_width(labels_, hyper_.level), rng);
  scaling_ = nn::glorot_uniform(shape_.embedding_dim, shape_.num_lfs * L, rng);
  rebuild_registry();
}

SparseChmm::SparseChmm(const SparseChmm& other)
    : labels_(other.labels_),
      shape_(other.shape_),
      hyper_(other.hyper_),
      init_(other.init_),
      transition_(other.transition_),
      reliability_(other.reliability_),
      scaling_(other.scaling_),
      wxor_(other.wxor_),
      addon_enabled_(other.addon_enabled_) {
  rebuild_registry();
}

SparseChmm& SparseChmm::operator=(const SparseChmm& other) {
  if (this == &other) return *this;
  SparseChmm copy(other);
  *this = std::move(copy);
  return *this;
}

SparseChmm::SparseChmm(SparseChmm&& other) noexcept
    : labels_(std::move(other.labels_)),
      shape_(other.shape_),
      hyper_(other.hyper_),
      init_(other.init_),
      transition_(std::move(other.transition_)),
      reliability_(std::move(other.reliability_)),
      scaling_(std::move(other.scaling_)),
      wxor_(std::move(other.wxor_)),
      addon_enabled_(other.addon_enabled_) {
  rebuild_registry();
}

SparseChmm& SparseChmm::operator=(SparseChmm&& other) noexcept {
  labels_ = std::move(other.labels_);
  shape_ = other.shape_;
  hyper_ = other.hyper_;
  init_ = other.init_;
  transition_ = std::move(other.transition_);
  reliability_ = std::move(other.reliability_);
  scaling_ = std::move(other.scaling_);
  wxor_ = std::move(other.wxor_);
  addon_enabled_ = other.addon_enabled_;
  rebuild_registry();
  return *this;
}

void SparseChmm::rebuild_registry() {
  registry_ = nn::ParamRegistry();
  registry_.add(kTransitionHead, &transition_);
  registry_.add(kReliabilityHead, &reliability_);
  registry_.add(kScalingHead, &scaling_);
}

void SparseChmm::set_wxor(WxorTable table) {
  const int L = labels_.size();
  if (static_cast<int>(table.normalized.size()) != shape_.num_lfs ||
      table.normalized.front().rows() != L) {
    throw Error(ErrorKind::dimension, "WXOR table does not match the model's LF/label counts");
  }
  for (auto& s : table.normalized) nn::round_f32(s);
  for (auto& s : table.aggregated) nn::round_f32(s);
  wxor_ = std::move(table);
}

void SparseChmm::reset_scaling_head(std::mt19937_64& rng) {
  const bool trainable = scaling_.trainable;
  scaling_ = nn::glorot_uniform(shape_.embedding_dim, shape_.num_lfs * labels_.size(), rng);
  scaling_.trainable = trainable;
}

EmissionHeads SparseChmm::heads() const {
  EmissionHeads h;
  h.reliability = &reliability_;
  if (addon_enabled()) {
    h.scaling = &scaling_;
    h.wxor = &wxor_->normalized;
  }
  return h;
}

EmissionBundle SparseChmm::emission(const Vector& sentence_embedding, EmissionMode mode,
                                    std::mt19937_64* rng) const {
  return build_emission(sentence_embedding, heads(), hyper_, labels_, mode, rng);
}

TransitionTensor SparseChmm::transitions(const EmbeddingSequence& embedding) const {
  return predict_transition(embedding, transition_, labels_.size(), init_);
}

namespace {

const EmbeddingSequence& require_embedding(const Instance& instance) {
  if (!instance.embedding) {
    throw Error(ErrorKind::schema, "sentence '" + instance.sentence.id + "' has no embeddings");
  }
  return *instance.embedding;
}

}  // namespace

ViterbiPath SparseChmm::decode(const Instance& instance) const {
  const auto& emb = require_embedding(instance);
  const auto bundle = emission(emb.sentence(), EmissionMode::mean, nullptr);
  const int active = std::min(shape_.active_lfs, instance.weak.num_lfs());
  const Matrix log_ev = emission_evidence(bundle.emission(), instance.weak, active);
  return viterbi(transitions(emb), log_ev);
}

void SparseChmm::save_tensors(TensorTable& table) const {
  const int L = labels_.size();
  table.put("transition.weights", transition_.weights);
  table.put("transition.bias", transition_.bias);
  table.put("reliability.weights", reliability_.weights);
  table.put("reliability.bias", reliability_.bias);
  table.put("scaling.weights", scaling_.weights);
  table.put("scaling.bias", scaling_.bias);
  Vector shape(7);
  shape << shape_.embedding_dim, shape_.num_lfs, shape_.active_lfs, L,
      hyper_.level == ReliabilityLevel::entity ? 1 : 0, addon_enabled_ ? 1 : 0, wxor_ ? 1 : 0;
  table.put("meta.shape", shape);
  if (wxor_) {
    const int K = shape_.num_lfs;
    Matrix aggregated(K * L, L), normalized(K * L, L);
    for (int k = 0; k < K; ++k) {
      aggregated.middleRows(k * L, L) = wxor_->aggregated[static_cast<std::size_t>(k)];
      normalized.middleRows(k * L, L) = wxor_->normalized[static_cast<std::size_t>(k)];
    }
    table.put("wxor.aggregated", aggregated);
    table.put("wxor.normalized", normalized);
    table.put("wxor.counts", wxor_->counts);
  }
}

SparseChmm SparseChmm::load_tensors(const TensorTable& table, const LabelSet& labels,
                                    const EmissionHyper& hyper, InitialState init) {
  const Vector meta = table.vector("meta.shape");
  if (meta.size() != 7) throw Error(ErrorKind::format, "checkpoint meta.shape has wrong size");
  ModelShape shape{static_cast<int>(meta(0)), static_cast<int>(meta(1)), static_cast<int>(meta(2))};
  const int L = static_cast<int>(meta(3));
  if (L != labels.size()) {
    throw Error(ErrorKind::schema, "checkpoint has " + std::to_string(L) + " labels, label set has " +
                                       std::to_string(labels.size()));
  }
  const auto level = meta(4) != 0 ? ReliabilityLevel::entity : ReliabilityLevel::label;
  if (level != hyper.level) {
    throw Error(ErrorKind::config, "checkpoint reliability level disagrees with configuration");
  }
  SparseChmm model(labels, shape, hyper, init, 0);
  auto load_layer = [&](nn::DenseLayer& layer, const std::string& name) {
    Matrix w = table.matrix(name + ".weights");
    Vector b = table.vector(name + ".bias");
    if (w.rows() != layer.weights.rows() || w.cols() != layer.weights.cols() ||
        b.size() != layer.bias.size()) {
      throw Error(ErrorKind::format, "checkpoint tensor '" + name + "' has unexpected shape");
    }
    layer.weights = std::move(w);
    layer.bias = std::move(b);
  };
  load_layer(model.transition_, kTransitionHead);
  load_layer(model.reliability_, kReliabilityHead);
  load_layer(model.scaling_, kScalingHead);
  if (meta(6) != 0) {
    const int K = shape.num_lfs;
    const Matrix aggregated = table.matrix("wxor.aggregated");
    const Matrix normalized = table.matrix("wxor.normalized");
    WxorTable wx;
    wx.counts = table.matrix("wxor.counts");
    for (int k = 0; k < K; ++k) {
      wx.aggregated.push_back(aggregated.middleRows(k * L, L));
      wx.normalized.push_back(normalized.middleRows(k * L, L));
    }
    model.wxor_ = std::move(wx);
  }
  model.addon_enabled_ = meta(5) != 0;
  return model;
}

SentenceObjective em_objective(const SparseChmm& model, const Instance& instance,
                               const EmOptions& options, std::mt19937_64* rng,
                               const PosteriorStats* fixed_posteriors,
                               PosteriorStats* posteriors_out) {
  const auto& emb = require_embedding(instance);
  const auto& registry = model.registry();
  if (instance.weak.num_lfs() != model.shape().num_lfs) {
    throw Error(ErrorKind::dimension, "sentence '" + instance.sentence.id + "' has " +
                                          std::to_string(instance.weak.num_lfs()) +
                                          " LF rows, model expects " +
                                          std::to_string(model.shape().num_lfs));
  }
  const int K = model.shape().num_lfs;

  const EmissionBundle bundle = model.emission(emb.sentence(), options.mode, rng);
  const TransitionTensor psi = model.transitions(emb);
  const Matrix log_ev = emission_evidence(bundle.emission(), instance.weak, K);

  PosteriorStats local;
  const PosteriorStats* stats = fixed_posteriors;
  if (!stats) {
    local = forward_backward(psi, log_ev);
    stats = &local;
  }

  SentenceObjective out;
  out.tokens = instance.sentence.length();
  out.value = expected_ll(*stats, psi, log_ev);
  out.grads = nn::Gradients::for_registry(registry);

  const ExpectedLLGrad dq = expected_ll_grad(*stats, psi);
  if (auto* g = out.grads.slot(kTransitionHead)) transition_vjp(emb, psi, dq.d_steps, *g);

  auto* g_rel = out.grads.slot(kReliabilityHead);
  auto* g_scale = model.addon_enabled() ? out.grads.slot(kScalingHead) : nullptr;
  if (g_rel || g_scale) {
    const Tensor3 d_phi = evidence_vjp(bundle.emission(), instance.weak, K, dq.d_log_evidence);
    const EmissionGrad eg =
        emission_vjp(bundle, model.heads(), model.hyper(), model.labels(), options.estimator, d_phi);
    if (g_rel) g_rel->accumulate(emb.sentence(), eg.reliability_out);
    if (g_scale) g_scale->accumulate(emb.sentence(), eg.scaling_out);
  }
  if (posteriors_out && !fixed_posteriors) *posteriors_out = std::move(local);
  return out;
}

SentenceObjective pretrain_objective(const SparseChmm& model, const Instance& instance,
                                     const PretrainTargets& targets) {
  const auto& emb = require_embedding(instance);
  SentenceObjective out;
  out.tokens = instance.sentence.length();
  out.grads = nn::Gradients::for_registry(model.registry());

  if (targets.emission) {
    const EmissionBundle bundle = model.emission(emb.sentence(), EmissionMode::mean, nullptr);
    const Tensor3& phi = bundle.emission();
    const auto K = static_cast<double>(phi.size());
    if (targets.emission->size() != phi.size()) {
      throw Error(ErrorKind::dimension, "pretrain: emission target has wrong LF count");
    }
    Tensor3 d_phi;
    d_phi.reserve(phi.size());
    for (std::size_t k = 0; k < phi.size(); ++k) {
      const Matrix diff = phi[k] - (*targets.emission)[k];
      out.value += diff.squaredNorm() / K;
      d_phi.push_back(2.0 * diff / K);
    }
    auto* g_rel = out.grads.slot(kReliabilityHead);
    auto* g_scale = model.addon_enabled() ? out.grads.slot(kScalingHead) : nullptr;
    if (g_rel || g_scale) {
      const EmissionGrad eg = emission_vjp(bundle, model.heads(), model.hyper(), model.labels(),
                                           DirichletGradient::mean_path, d_phi);
      if (g_rel) g_rel->accumulate(emb.sentence(), eg.reliability_out);
      if (g_scale) g_scale->accumulate(emb.sentence(), eg.scaling_out);
    }
  }

  if (targets.transition) {
    const TransitionTensor psi = model.transitions(emb);
    const double T = psi.length();
    std::vector<Matrix> d_steps;
    d_steps.reserve(psi.steps.size());
    for (const auto& step : psi.steps) {
      const Matrix diff = step - *targets.transition;
      out.value += diff.squaredNorm() / T;
      d_steps.push_back(2.0 * diff / T);
    }
    if (auto* g = out.grads.slot(kTransitionHead)) transition_vjp(emb, psi, d_steps, *g);
  }
  return out;
}

double sentence_log_likelihood(const SparseChmm& model, const Instance& instance) {
  const auto& emb = require_embedding(instance);
  const auto bundle = model.emission(emb.sentence(), EmissionMode::mean, nullptr);
  const Matrix log_ev = emission_evidence(bundle.emission(), instance.weak, model.shape().num_lfs);
  return forward_backward(model.transitions(emb), log_ev).log_likelihood;
}

}  // namespace scmm
