#include "scmm/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "scmm/error.hpp"

namespace scmm {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error(ErrorKind::config, msg); }

// Typed access to one table that remembers which keys were read, so leftovers
// can be reported as unknown.
class Section {
 public:
  Section(const toml::table* table, std::string path) : table_(table), path_(std::move(path)) {}

  bool present() const { return table_ != nullptr; }

  const toml::node* get(const std::string& key) {
    seen_.insert(key);
    return table_ ? table_->get(key) : nullptr;
  }

  template <class T>
  void read(const std::string& key, T& out) {
    const toml::node* node = get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!v) type_error(key, "a boolean");
      out = *v;
    } else if constexpr (std::is_integral_v<T>) {
      auto v = node->value<std::int64_t>();
      if (!v || !node->is_integer()) type_error(key, "an integer");
      out = static_cast<T>(*v);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!node->is_number()) type_error(key, "a number");
      out = *node->value<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      auto v = node->value<std::string>();
      if (!v) type_error(key, "a string");
      out = *v;
    }
  }

  template <class T>
  void read(const std::string& key, std::optional<T>& out) {
    if (!table_ || !table_->contains(key)) {
      seen_.insert(key);
      return;
    }
    T value{};
    read(key, value);
    out = value;
  }

  std::vector<double> numbers(const std::string& key) {
    std::vector<double> out;
    const toml::node* node = get(key);
    if (!node) return out;
    const auto* arr = node->as_array();
    if (!arr) type_error(key, "an array of numbers");
    for (const auto& v : *arr) {
      if (!v.is_number()) type_error(key, "an array of numbers");
      out.push_back(*v.value<double>());
    }
    return out;
  }

  std::optional<std::vector<std::string>> strings(const std::string& key) {
    const toml::node* node = get(key);
    if (!node) return std::nullopt;
    const auto* arr = node->as_array();
    if (!arr) type_error(key, "an array of strings");
    std::vector<std::string> out;
    for (const auto& v : *arr) {
      auto s = v.value<std::string>();
      if (!s) type_error(key, "an array of strings");
      out.push_back(*s);
    }
    return out;
  }

  std::optional<Matrix> matrix(const std::string& key) {
    const toml::node* node = get(key);
    if (!node) return std::nullopt;
    return to_matrix(*node, key);
  }

  std::optional<Tensor3> tensor(const std::string& key) {
    const toml::node* node = get(key);
    if (!node) return std::nullopt;
    const auto* arr = node->as_array();
    if (!arr) type_error(key, "an array of matrices");
    Tensor3 out;
    for (const auto& m : *arr) out.push_back(to_matrix(m, key));
    return out;
  }

  Section sub(const std::string& key) {
    const toml::node* node = get(key);
    if (node && !node->is_table()) type_error(key, "a table");
    return Section(node ? node->as_table() : nullptr, qualified(key));
  }

  void reject_unknown() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) fail("unknown config key '" + qualified(std::string(k.str())) + "'");
    }
  }

 private:
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void type_error(const std::string& key, const char* want) const {
    fail("config key '" + qualified(key) + "' must be " + want);
  }

  Matrix to_matrix(const toml::node& node, const std::string& key) const {
    const auto* rows = node.as_array();
    if (!rows || rows->empty()) type_error(key, "a non-empty array of equal-length rows");
    Matrix m;
    for (std::size_t r = 0; r < rows->size(); ++r) {
      const auto* row = (*rows)[r].as_array();
      if (!row) type_error(key, "a non-empty array of equal-length rows");
      if (r == 0) m.resize(static_cast<Eigen::Index>(rows->size()), static_cast<Eigen::Index>(row->size()));
      if (static_cast<Eigen::Index>(row->size()) != m.cols()) type_error(key, "a non-empty array of equal-length rows");
      for (std::size_t c = 0; c < row->size(); ++c) {
        if (!(*row)[c].is_number()) type_error(key, "numeric");
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *(*row)[c].value<double>();
      }
    }
    return m;
  }

  const toml::table* table_;
  std::string path_;
  std::set<std::string> seen_;
};

toml::table parse_toml(std::string_view text, std::string_view source) {
  try {
    return toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "cannot parse " << source << " at line " << e.source().begin.line << ": " << e.description();
    throw Error(ErrorKind::config, msg.str());
  }
}

void apply_overrides(toml::table& root, const std::vector<std::string>& overrides) {
  for (const auto& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail("override '" + item + "' is not of the form key=value");
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);

    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string p; std::getline(ss, p, '.');) {
      if (p.empty()) fail("override key '" + key + "' has an empty component");
      parts.push_back(p);
    }
    toml::table* table = &root;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      auto* node = table->get(parts[i]);
      if (!node) {
        table->insert(parts[i], toml::table{});
        node = table->get(parts[i]);
      }
      table = node->as_table();
      if (!table) fail("override key '" + key + "' passes through a non-table value");
    }

    toml::table parsed;
    try {
      parsed = toml::parse("v = " + raw);
    } catch (const toml::parse_error&) {
      parsed.insert("v", raw);
    }
    table->insert_or_assign(parts.back(), *parsed.get("v"));
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

EmissionMode parse_mode(const std::string& s, const std::string& key) {
  if (s == "sample") return EmissionMode::sample;
  if (s == "mean") return EmissionMode::mean;
  fail("config key '" + key + "' must be \"sample\" or \"mean\"");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir,
                           const std::vector<std::string>& overrides) {
  toml::table root = parse_toml(text, "config");
  apply_overrides(root, overrides);
  Section top(&root, "");
  RunConfig cfg;

  Section data = top.sub("data");
  if (auto ents = data.strings("entities")) cfg.data.entities = *ents;
  for (const std::string name : {"train", "valid", "test"}) {
    std::optional<std::string> ann, emb;
    data.read(name, ann);
    data.read(name + "_embeddings", emb);
    if (!ann) {
      if (emb) fail("config key 'data." + name + "_embeddings' given without 'data." + name + "'");
      continue;
    }
    SplitSource src{resolve(base_dir, *ann), std::nullopt};
    if (emb) src.embeddings = resolve(base_dir, *emb);
    cfg.data.splits[name] = src;
  }
  data.reject_unknown();

  TrainConfig& t = cfg.train;
  Section model = top.sub("model");
  std::optional<std::string> level, init;
  model.read("reliability_level", level);
  if (level) {
    if (*level == "entity") t.hyper.level = ReliabilityLevel::entity;
    else if (*level == "label") t.hyper.level = ReliabilityLevel::label;
    else fail("config key 'model.reliability_level' must be \"entity\" or \"label\"");
  }
  model.read("h_n", t.hyper.h_n);
  model.read("h_s", t.hyper.h_s);
  model.read("h_r", t.hyper.h_r);
  model.read("g_n", t.hyper.g_n);
  model.read("nu_base", t.hyper.nu_base);
  model.read("nu_expan", t.hyper.nu_expan);
  model.read("initial_state", init);
  if (init) {
    if (*init == "delta_o") t.init = InitialState::delta_outside;
    else if (*init == "uniform") t.init = InitialState::uniform;
    else fail("config key 'model.initial_state' must be \"delta_o\" or \"uniform\"");
  }
  model.reject_unknown();

  Section train = top.sub("train");
  train.read("seed", t.seed);
  train.read("batch_size", t.batch_size);
  train.read("lr_pretrain", t.lr_pretrain);
  train.read("pretrain_epochs", t.pretrain_epochs);
  train.read("mix_weight", t.mix_weight);
  train.read("use_mv", t.use_mv);
  train.read("mv_count_outside", t.mv_count_outside);
  train.read("train_split", t.train_split);
  train.read("eval_split", t.eval_split);
  train.read("threads", t.threads);
  std::optional<std::string> scope, grad;
  train.read("wxor_scope", scope);
  if (scope) {
    if (*scope == "train+valid") t.wxor_scope = WxorScope::train_valid;
    else if (*scope == "valid") t.wxor_scope = WxorScope::valid;
    else fail("config key 'train.wxor_scope' must be \"train+valid\" or \"valid\"");
  }
  train.read("dirichlet_gradient", grad);
  if (grad) {
    if (*grad == "mean_path") t.estimator = DirichletGradient::mean_path;
    else if (*grad == "implicit") t.estimator = DirichletGradient::implicit;
    else fail("config key 'train.dirichlet_gradient' must be \"mean_path\" or \"implicit\"");
  }
  for (int s = 1; s <= 3; ++s) {
    const std::string key = "stage" + std::to_string(s);
    Section st = train.sub(key);
    auto& sc = t.stages[static_cast<std::size_t>(s - 1)];
    st.read("lr", sc.learning_rate);
    st.read("max_epochs", sc.max_epochs);
    st.read("patience", sc.patience);
    st.read("g_r", sc.g_r);
    std::optional<std::string> mode;
    st.read("emission_mode", mode);
    if (mode) sc.mode = parse_mode(*mode, "train." + key + ".emission_mode");
    st.reject_unknown();
  }
  train.reject_unknown();
  top.reject_unknown();

  t.validate();
  if (cfg.data.entities.empty()) fail("config key 'data.entities' is required");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return parse_run_config(read_file(path), path.parent_path(), overrides);
}

Dataset load_run_dataset(const DataConfig& data) {
  Dataset dataset{LabelSet(data.entities)};
  for (const auto& [name, src] : data.splits) {
    Split split = read_split(src.annotations, dataset.labels(), name);
    if (src.embeddings) load_embeddings(*src.embeddings, split);
    dataset.add_split(std::move(split));
  }
  return dataset;
}

SynthConfig parse_synth_config(std::string_view text, const std::vector<std::string>& overrides) {
  toml::table root = parse_toml(text, "config");
  apply_overrides(root, overrides);
  Section top(&root, "");
  Section s = top.sub("synth");
  SynthConfig c;
  if (auto ents = s.strings("entities")) c.entities = *ents;
  s.read("train_size", c.train_size);
  s.read("valid_size", c.valid_size);
  s.read("test_size", c.test_size);
  s.read("min_length", c.min_length);
  s.read("max_length", c.max_length);
  c.transition = s.matrix("transition");
  s.read("entity_density", c.entity_density);
  s.read("continue_prob", c.continue_prob);
  if (auto rel = s.numbers("reliabilities"); !rel.empty()) c.reliabilities = rel;
  c.emissions = s.tensor("emissions");
  if (c.emissions) c.reliabilities.assign(c.emissions->size(), 1.0);
  s.read("confusion_lf", c.confusion_lf);
  if (c.emissions) c.confusion_lf = -1;
  s.read("confusion", c.confusion);
  s.read("false_positive", c.false_positive);
  s.read("embedding_dim", c.embedding_dim);
  s.read("embedding_noise", c.embedding_noise);
  s.read("seed", c.seed);
  s.reject_unknown();
  top.reject_unknown();
  c.validate();
  return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  return parse_synth_config(read_file(path), overrides);
}

}  // namespace scmm
