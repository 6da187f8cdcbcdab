#include "scmm_cli/cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "scmm/config.hpp"
#include "scmm/error.hpp"
#include "scmm/eval.hpp"
#include "scmm/parallel.hpp"
#include "scmm/report.hpp"
#include "scmm/synth.hpp"
#include "scmm/trainer.hpp"

namespace scmm::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct Options {
  std::string config;
  std::string out = "scmm-out";
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string split;
  std::string data;
  std::string embeddings;
  std::string pred;
  std::string gold;
  std::vector<std::string> entities;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
}

json metric_json(const MetricReport& m, const LabelSet& labels) {
  json j{{"f1", m.f1}, {"precision", m.precision}, {"recall", m.recall},
         {"true_positive", m.true_positive}, {"predicted", m.predicted}, {"gold", m.gold}};
  json per = json::object();
  for (const auto& e : labels.entities()) {
    auto it = m.per_entity.find(e);
    const EntityCounts c = it == m.per_entity.end() ? EntityCounts{} : it->second;
    const MetricReport r = metrics_from_counts(c.true_positive, c.predicted, c.gold);
    per[e] = json{{"f1", r.f1}, {"precision", r.precision}, {"recall", r.recall}};
  }
  j["per_entity"] = per;
  return j;
}

int threads_of(const RunConfig& cfg) { return cfg.train.threads > 0 ? cfg.train.threads : worker_threads(); }

RunConfig require_config(const Options& o) {
  if (o.config.empty()) throw Error(ErrorKind::usage, "--config is required");
  return load_run_config(o.config, o.overrides);
}

// The split to run on: an explicit --data file, or a configured split.
Split select_split(const Options& o, const RunConfig& cfg, const LabelSet& labels, const std::string& fallback) {
  if (!o.data.empty()) {
    Split split = read_split(o.data, labels, fs::path(o.data).stem().string());
    if (o.embeddings.empty()) throw Error(ErrorKind::usage, "--data needs --embeddings");
    load_embeddings(o.embeddings, split);
    return split;
  }
  const std::string name = o.split.empty() ? fallback : o.split;
  auto it = cfg.data.splits.find(name);
  if (it == cfg.data.splits.end()) throw Error(ErrorKind::config, "split '" + name + "' is not configured");
  Split split = read_split(it->second.annotations, labels, name);
  if (!it->second.embeddings) throw Error(ErrorKind::config, "split '" + name + "' has no embeddings configured");
  load_embeddings(*it->second.embeddings, split);
  return split;
}

int run_train(const Options& o, std::ostream& out) {
  const RunConfig cfg = require_config(o);
  const Dataset dataset = load_run_dataset(cfg.data);
  const fs::path dir(o.out);
  Trainer trainer(dataset, cfg.train, dir);
  const TrainReport report = trainer.train();
  const Split& eval = dataset.split(cfg.train.eval_split);
  if (trainer.model().shape().active_lfs >= 2) {
    const ReliabilityReport rel = reliability_report(trainer.model(), eval, threads_of(cfg));
    write_text(dir / "reliability.json", to_json(rel) + "\n");
    write_text(dir / "reliability.csv", to_csv(rel));
  }
  out << to_json(report) << '\n';
  return 0;
}

int run_predict(const Options& o, std::ostream& out) {
  const RunConfig cfg = require_config(o);
  if (o.checkpoint.empty()) throw Error(ErrorKind::usage, "--checkpoint is required");
  const LabelSet labels(cfg.data.entities);
  const SparseChmm model = Checkpoint::load(o.checkpoint, labels, cfg.train);
  const Split split = select_split(o, cfg, labels, "test");
  const auto preds = predict_split(model, split, threads_of(cfg));
  std::ostringstream lines;
  for (std::size_t i = 0; i < split.size(); ++i) {
    json names = json::array();
    for (LabelId l : preds[i]) names.push_back(labels.name(l));
    lines << json{{"id", split.instances[i].sentence.id}, {"labels", names}}.dump() << '\n';
  }
  const fs::path path = fs::path(o.out) / (split.name + ".predictions.jsonl");
  write_text(path, lines.str());
  out << json{{"sentences", split.size()}, {"predictions", path.string()}}.dump() << '\n';
  return 0;
}

// id -> BIO strings from a JSONL file carrying "id" and "labels".
std::vector<std::pair<std::string, std::vector<std::string>>> read_label_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::vector<std::pair<std::string, std::vector<std::string>>> rows;
  std::set<std::string> ids;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::parse, path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("labels") ||
        !j["labels"].is_array()) {
      throw Error(ErrorKind::schema, path.string() + ":" + std::to_string(n) + ": record needs \"id\" and \"labels\"");
    }
    std::vector<std::string> labels;
    for (const auto& l : j["labels"]) {
      if (!l.is_string()) throw Error(ErrorKind::schema, path.string() + ":" + std::to_string(n) + ": labels must be strings");
      labels.push_back(l.get<std::string>());
    }
    std::string id = j["id"].get<std::string>();
    if (!ids.insert(id).second) throw Error(ErrorKind::schema, "duplicate id '" + id + "' in " + path.string());
    rows.emplace_back(std::move(id), std::move(labels));
  }
  return rows;
}

void collect_entities(const std::vector<std::pair<std::string, std::vector<std::string>>>& rows,
                      std::vector<std::string>& order) {
  for (const auto& [id, labels] : rows) {
    for (const auto& l : labels) {
      if (l.size() > 2 && (l.rfind("B-", 0) == 0 || l.rfind("I-", 0) == 0)) {
        const std::string e = l.substr(2);
        if (std::find(order.begin(), order.end(), e) == order.end()) order.push_back(e);
      }
    }
  }
}

int run_evaluate(const Options& o, std::ostream& out) {
  if (o.pred.empty() || o.gold.empty()) throw Error(ErrorKind::usage, "--pred and --gold are required");
  const auto gold_rows = read_label_file(o.gold);
  const auto pred_rows = read_label_file(o.pred);
  std::vector<std::string> entities = o.entities;
  if (entities.empty() && !o.config.empty()) entities = load_run_config(o.config, o.overrides).data.entities;
  if (entities.empty()) {
    collect_entities(gold_rows, entities);
    collect_entities(pred_rows, entities);
  }
  if (entities.empty()) throw Error(ErrorKind::schema, "no entity labels found; pass --entities");
  const LabelSet labels(entities);

  std::map<std::string, const std::vector<std::string>*> pred_by_id;
  for (const auto& [id, l] : pred_rows) pred_by_id[id] = &l;
  auto to_ids = [&](const std::vector<std::string>& names, const std::string& id) {
    std::vector<LabelId> ids;
    for (const auto& n : names) {
      auto found = labels.find(n);
      if (!found) throw Error(ErrorKind::schema, "unknown label '" + n + "' in sentence '" + id + "'");
      ids.push_back(*found);
    }
    return ids;
  };
  std::vector<std::vector<LabelId>> gold, pred;
  for (const auto& [id, l] : gold_rows) {
    auto it = pred_by_id.find(id);
    if (it == pred_by_id.end()) throw Error(ErrorKind::schema, "no prediction for sentence '" + id + "'");
    if (it->second->size() != l.size()) {
      throw Error(ErrorKind::dimension, "prediction for '" + id + "' has " + std::to_string(it->second->size()) +
                                            " labels, gold has " + std::to_string(l.size()));
    }
    gold.push_back(to_ids(l, id));
    pred.push_back(to_ids(*it->second, id));
  }
  if (pred_rows.size() != gold_rows.size()) {
    throw Error(ErrorKind::schema, "prediction file has sentences missing from the gold file");
  }
  const std::string text = metric_json(entity_prf(gold, pred, labels), labels).dump();
  out << text << '\n';
  return 0;
}

int run_report(const Options& o, std::ostream& out) {
  const RunConfig cfg = require_config(o);
  if (o.checkpoint.empty()) throw Error(ErrorKind::usage, "--checkpoint is required");
  const LabelSet labels(cfg.data.entities);
  const SparseChmm model = Checkpoint::load(o.checkpoint, labels, cfg.train);
  const Split split = select_split(o, cfg, labels, cfg.train.eval_split);
  const ReliabilityReport rel = reliability_report(model, split, threads_of(cfg));
  const fs::path dir(o.out);
  write_text(dir / "reliability.json", to_json(rel) + "\n");
  write_text(dir / "reliability.csv", to_csv(rel));
  out << to_json(rel) << '\n';
  return 0;
}

int run_synth(const Options& o, std::ostream& out) {
  const SynthConfig cfg = o.config.empty() ? parse_synth_config("", o.overrides) : load_synth_config(o.config, o.overrides);
  const SynthCorpus corpus = generate_corpus(cfg);
  write_corpus(corpus, o.out);
  json sizes = json::object();
  for (const auto& s : corpus.dataset.splits()) sizes[s.name] = s.size();
  out << json{{"out", o.out}, {"sentences", sizes}, {"lfs", corpus.dataset.lf_names().size()}}.dump() << '\n';
  return 0;
}

json check_file(const fs::path& data, const std::optional<fs::path>& embeddings, const LabelSet* labels) {
  json entry{{"data", data.empty() ? json(nullptr) : json(data.string())},
             {"embeddings", embeddings ? json(embeddings->string()) : json(nullptr)}};
  json errors = json::array();
  json warnings = json::array();
  auto record = [&](const Error& e) {
    errors.push_back(json{{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}});
  };
  if (!data.empty()) {
    try {
      Split split = read_split(data, *labels, data.stem().string());
      entry["sentences"] = split.size();
      entry["lfs"] = split.size() ? split.instances.front().weak.num_lfs() : 0;
      for (const auto& inst : split.instances) {
        if (!inst.sentence.gold) continue;
        for (const auto& v : validate_bio(*inst.sentence.gold, *labels, BioMode::strict)) {
          warnings.push_back("sentence '" + inst.sentence.id + "' token " + std::to_string(v.position) + ": " + v.message);
        }
      }
      if (embeddings) {
        load_embeddings(*embeddings, split);
        entry["embedding_dim"] = split.size() ? split.instances.front().embedding->dim() : 0;
      }
    } catch (const Error& e) {
      record(e);
    }
  } else if (embeddings) {
    try {
      const auto seqs = read_embeddings(*embeddings);
      entry["sentences"] = seqs.size();
      entry["embedding_dim"] = seqs.empty() ? 0 : seqs.front().dim();
    } catch (const Error& e) {
      record(e);
    }
  }
  entry["errors"] = errors;
  entry["warnings"] = warnings;
  return entry;
}

int run_validate(const Options& o, std::ostream& out, std::ostream& err) {
  json files = json::array();
  std::optional<LabelSet> labels;
  if (!o.entities.empty()) labels.emplace(o.entities);
  if (!o.data.empty() || !o.embeddings.empty()) {
    if (!o.data.empty() && !labels) {
      if (o.config.empty()) throw Error(ErrorKind::usage, "validating --data needs --entities or --config");
      labels.emplace(load_run_config(o.config, o.overrides).data.entities);
    }
    std::optional<fs::path> emb;
    if (!o.embeddings.empty()) emb = o.embeddings;
    files.push_back(check_file(o.data, emb, labels ? &*labels : nullptr));
  } else {
    const RunConfig cfg = require_config(o);
    if (!labels) labels.emplace(cfg.data.entities);
    for (const auto& [name, src] : cfg.data.splits) files.push_back(check_file(src.annotations, src.embeddings, &*labels));
  }
  std::size_t n_errors = 0;
  for (const auto& f : files) n_errors += f["errors"].size();
  out << json{{"ok", n_errors == 0}, {"files", files}}.dump(2) << '\n';
  if (n_errors) {
    err << json{{"error", {{"kind", "format"}, {"message", std::to_string(n_errors) + " validation error(s)"}}}}.dump()
        << '\n';
    return 1;
  }
  return 0;
}

void report_error(std::ostream& err, std::string_view kind, const std::string& message) {
  err << json{{"error", {{"kind", std::string(kind)}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse conditional HMM label model for weakly supervised NER", "scmm"};
  app.require_subcommand(1, 1);
  Options o;

  auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--config", o.config, "TOML configuration file");
    if (required) opt->required();
    sub->add_option("--set", o.overrides, "dotted key=value override (repeatable)");
  };
  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", o.out, "output directory")->capture_default_str(); };

  auto* train = app.add_subcommand("train", "run the full training pipeline");
  add_config(train, true);
  add_out(train);

  auto* predict = app.add_subcommand("predict", "decode a split with a checkpoint");
  add_config(predict, true);
  add_out(predict);
  predict->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  predict->add_option("--split", o.split, "configured split to decode (default test)");
  predict->add_option("--data", o.data, "JSONL file to decode instead of a configured split");
  predict->add_option("--embeddings", o.embeddings, "embedding file for --data");

  auto* evaluate = app.add_subcommand("evaluate", "entity P/R/F1 of predictions against gold");
  evaluate->add_option("--pred", o.pred, "prediction JSONL")->required();
  evaluate->add_option("--gold", o.gold, "gold JSONL")->required();
  evaluate->add_option("--entities", o.entities, "entity types in label order")->delimiter(',');
  add_config(evaluate, false);

  auto* report = app.add_subcommand("report", "per-LF reliability and correlation tables");
  add_config(report, true);
  add_out(report);
  report->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required();
  report->add_option("--split", o.split, "configured split (default: the evaluation split)");
  report->add_option("--data", o.data, "JSONL file instead of a configured split");
  report->add_option("--embeddings", o.embeddings, "embedding file for --data");

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  add_config(synth, false);
  add_out(synth);

  auto* validate = app.add_subcommand("validate", "format-check data and embedding files");
  add_config(validate, false);
  validate->add_option("--data", o.data, "JSONL file");
  validate->add_option("--embeddings", o.embeddings, "embedding file");
  validate->add_option("--entities", o.entities, "entity types in label order")->delimiter(',');

  if (!args.empty() && !args.front().empty() && args.front()[0] != '-') {
    bool known = false;
    for (const auto* sub : app.get_subcommands({})) known = known || sub->get_name() == args.front();
    if (!known) {
      report_error(err, "usage", "unknown verb '" + args.front() + "'");
      return 2;
    }
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (*train) return run_train(o, out);
    if (*predict) return run_predict(o, out);
    if (*evaluate) return run_evaluate(o, out);
    if (*report) return run_report(o, out);
    if (*synth) return run_synth(o, out);
    if (*validate) return run_validate(o, out, err);
  } catch (const Error& e) {
    report_error(err, to_string(e.kind()), e.what());
    return e.kind() == ErrorKind::usage ? 2 : 1;
  } catch (const fs::filesystem_error& e) {
    report_error(err, "io", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error(err, "internal", e.what());
    return 1;
  }
  report_error(err, "usage", "no verb given");
  return 2;
}

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace scmm::cli
