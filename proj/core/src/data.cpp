#include "scmm/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "scmm/error.hpp"

namespace scmm {

using ordered_json = nlohmann::ordered_json;

bool Split::has_gold() const {
  return !instances.empty() &&
         std::all_of(instances.begin(), instances.end(),
                     [](const Instance& inst) { return inst.sentence.gold.has_value(); });
}

bool Split::has_embeddings() const {
  return !instances.empty() &&
         std::all_of(instances.begin(), instances.end(),
                     [](const Instance& inst) { return inst.embedding.has_value(); });
}

std::size_t Split::num_tokens() const {
  std::size_t total = 0;
  for (const auto& inst : instances) total += inst.sentence.tokens.size();
  return total;
}

void Dataset::add_split(Split split) {
  if (has_split(split.name)) {
    throw Error(ErrorKind::schema, "duplicate split '" + split.name + "'");
  }
  if (!split.instances.empty()) {
    const auto& names = split.instances.front().weak.lf_names;
    if (splits_.empty() || lf_names_.empty()) {
      lf_names_ = names;
    } else if (names != lf_names_) {
      throw Error(ErrorKind::schema,
                  "split '" + split.name + "' uses a different labeling-function set");
    }
  }
  splits_.push_back(std::move(split));
}

bool Dataset::has_split(const std::string& name) const {
  return std::any_of(splits_.begin(), splits_.end(),
                     [&](const Split& s) { return s.name == name; });
}

const Split& Dataset::split(const std::string& name) const {
  for (const auto& s : splits_) {
    if (s.name == name) return s;
  }
  throw Error(ErrorKind::schema, "no split named '" + name + "'");
}

Split& Dataset::split(const std::string& name) {
  return const_cast<Split&>(static_cast<const Dataset&>(*this).split(name));
}

std::vector<BioViolation> validate_bio(const std::vector<LabelId>& seq, const LabelSet& labels,
                                       BioMode mode) {
  std::vector<BioViolation> violations;
  if (mode == BioMode::conll) return violations;
  LabelId prev = LabelSet::kOutside;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const LabelId cur = seq[t];
    if (labels.is_inside(cur)) {
      const bool continues = prev != LabelSet::kOutside &&
                             labels.entity_of(prev) == labels.entity_of(cur);
      if (!continues) {
        violations.push_back({static_cast<int>(t), labels.name(cur) + " does not continue a " +
                                                       labels.entities()[static_cast<std::size_t>(
                                                           labels.entity_of(cur))] +
                                                       " chunk"});
      }
    }
    prev = cur;
  }
  return violations;
}

namespace {

std::vector<LabelId> parse_labels(const ordered_json& array, const LabelSet& labels,
                                  const std::string& id, const std::string& field,
                                  std::size_t expected) {
  if (!array.is_array()) {
    throw Error(ErrorKind::schema, "record '" + id + "': field '" + field + "' must be an array");
  }
  if (array.size() != expected) {
    throw Error(ErrorKind::schema, "record '" + id + "': field '" + field + "' has length " +
                                       std::to_string(array.size()) + " but sentence has " +
                                       std::to_string(expected) + " tokens");
  }
  std::vector<LabelId> out;
  out.reserve(expected);
  for (const auto& item : array) {
    if (!item.is_string()) {
      throw Error(ErrorKind::schema, "record '" + id + "': non-string label in '" + field + "'");
    }
    auto label = labels.find(item.get<std::string>());
    if (!label) {
      throw Error(ErrorKind::schema, "record '" + id + "': unknown label '" +
                                         item.get<std::string>() + "' in '" + field + "'");
    }
    out.push_back(*label);
  }
  return out;
}

Instance parse_record(const ordered_json& record, const LabelSet& labels, std::size_t line_no) {
  if (!record.is_object()) {
    throw Error(ErrorKind::schema, "line " + std::to_string(line_no) + ": record is not an object");
  }
  for (const char* field : {"id", "tokens", "annotations"}) {
    if (!record.contains(field)) {
      throw Error(ErrorKind::schema,
                  "line " + std::to_string(line_no) + ": missing field '" + field + "'");
    }
  }
  Instance inst;
  if (!record["id"].is_string()) {
    throw Error(ErrorKind::schema, "line " + std::to_string(line_no) + ": 'id' must be a string");
  }
  inst.sentence.id = record["id"].get<std::string>();
  const auto& id = inst.sentence.id;

  const auto& tokens = record["tokens"];
  if (!tokens.is_array() || tokens.empty()) {
    throw Error(ErrorKind::schema, "record '" + id + "': 'tokens' must be a non-empty array");
  }
  for (const auto& tok : tokens) {
    if (!tok.is_string()) {
      throw Error(ErrorKind::schema, "record '" + id + "': non-string token");
    }
    inst.sentence.tokens.push_back(tok.get<std::string>());
  }
  const std::size_t length = inst.sentence.tokens.size();

  const auto& annotations = record["annotations"];
  if (!annotations.is_object() || annotations.empty()) {
    throw Error(ErrorKind::schema, "record '" + id + "': 'annotations' must be a non-empty object");
  }
  for (const auto& [lf, seq] : annotations.items()) {
    inst.weak.lf_names.push_back(lf);
    inst.weak.obs.push_back(parse_labels(seq, labels, id, "annotations." + lf, length));
  }

  if (record.contains("labels") && !record["labels"].is_null()) {
    inst.sentence.gold = parse_labels(record["labels"], labels, id, "labels", length);
  }
  return inst;
}

// Reorders an instance's LF rows to match the reference order.
void align_lfs(Instance& inst, const std::vector<std::string>& reference) {
  if (inst.weak.lf_names == reference) return;
  std::set<std::string> a(inst.weak.lf_names.begin(), inst.weak.lf_names.end());
  std::set<std::string> b(reference.begin(), reference.end());
  if (a != b || inst.weak.lf_names.size() != reference.size()) {
    throw Error(ErrorKind::schema, "record '" + inst.sentence.id +
                                       "': labeling-function set differs from earlier records");
  }
  WeakAnnotationMatrix aligned;
  aligned.lf_names = reference;
  for (const auto& name : reference) {
    auto it = std::find(inst.weak.lf_names.begin(), inst.weak.lf_names.end(), name);
    aligned.obs.push_back(inst.weak.obs[static_cast<std::size_t>(it - inst.weak.lf_names.begin())]);
  }
  inst.weak = std::move(aligned);
}

}  // namespace

Split read_split(const std::filesystem::path& path, const LabelSet& labels,
                 const std::string& split_name) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::io, "cannot open dataset file '" + path.string() + "'");
  }
  Split split;
  split.name = split_name;
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ordered_json record;
    try {
      record = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) +
                                        ": malformed JSON (" + e.what() + ")");
    }
    Instance inst = parse_record(record, labels, line_no);
    if (!split.instances.empty()) {
      align_lfs(inst, split.instances.front().weak.lf_names);
    }
    if (!ids.insert(inst.sentence.id).second) {
      throw Error(ErrorKind::schema, "duplicate record id '" + inst.sentence.id + "'");
    }
    split.instances.push_back(std::move(inst));
  }
  if (split.instances.empty()) {
    throw Error(ErrorKind::schema, "dataset file '" + path.string() + "' has no records");
  }
  return split;
}

Dataset load_dataset(const std::filesystem::path& path, const std::vector<std::string>& entities) {
  Dataset dataset{LabelSet(entities)};
  dataset.add_split(read_split(path, dataset.labels(), path.stem().string()));
  return dataset;
}

void write_split(const std::filesystem::path& path, const Split& split, const LabelSet& labels) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorKind::io, "cannot write dataset file '" + path.string() + "'");
  }
  auto names = [&](const std::vector<LabelId>& seq) {
    ordered_json arr = ordered_json::array();
    for (LabelId l : seq) arr.push_back(labels.name(l));
    return arr;
  };
  for (const auto& inst : split.instances) {
    ordered_json record;
    record["id"] = inst.sentence.id;
    record["tokens"] = inst.sentence.tokens;
    ordered_json annotations = ordered_json::object();
    for (int k = 0; k < inst.weak.num_lfs(); ++k) {
      annotations[inst.weak.lf_names[static_cast<std::size_t>(k)]] =
          names(inst.weak.obs[static_cast<std::size_t>(k)]);
    }
    record["annotations"] = std::move(annotations);
    if (inst.sentence.gold) record["labels"] = names(*inst.sentence.gold);
    out << record.dump() << '\n';
  }
}

namespace {

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw Error(ErrorKind::format, "truncated embedding file while reading " + what);
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::array<unsigned char, 4> b{static_cast<unsigned char>(v & 0xff),
                                       static_cast<unsigned char>((v >> 8) & 0xff),
                                       static_cast<unsigned char>((v >> 16) & 0xff),
                                       static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b.data()), 4);
}

}  // namespace

std::vector<EmbeddingSequence> read_embeddings(const std::filesystem::path& path, const Split* expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::io, "cannot open embedding file '" + path.string() + "'");
  }
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kEmbeddingMagic, 4) != 0) {
    throw Error(ErrorKind::format, "bad magic in embedding file '" + path.string() + "'");
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kEmbeddingVersion) {
    throw Error(ErrorKind::format, "unsupported embedding file version " + std::to_string(version));
  }
  const std::uint32_t count = read_u32(in, "sentence count");
  const std::uint32_t dim = read_u32(in, "embedding dim");
  if (expect && count != expect->size()) {
    throw Error(ErrorKind::format, "embedding file holds " + std::to_string(count) +
                                       " sentences but split '" + expect->name + "' has " +
                                       std::to_string(expect->size()));
  }
  if (dim == 0) throw Error(ErrorKind::format, "embedding dim must be positive");

  std::vector<EmbeddingSequence> loaded;
  loaded.reserve(std::min<std::uint32_t>(count, 1u << 20));
  std::vector<float> buffer;
  for (std::uint32_t m = 0; m < count; ++m) {
    const std::string name = expect ? "sentence '" + expect->instances[m].sentence.id + "'"
                                    : "sentence #" + std::to_string(m);
    const std::uint32_t length = read_u32(in, "sentence length");
    if (expect && length != expect->instances[m].sentence.tokens.size()) {
      throw Error(ErrorKind::format, "embedding length mismatch for " + name + ": file has " +
                                         std::to_string(length) + " tokens, dataset has " +
                                         std::to_string(expect->instances[m].sentence.tokens.size()));
    }
    if (length == 0) throw Error(ErrorKind::format, "empty " + name + " in embedding file");
    const std::size_t n = static_cast<std::size_t>(length + 1) * dim;
    buffer.resize(n);
    static_assert(std::endian::native == std::endian::little,
                  "embedding reader assumes a little-endian host");
    if (!in.read(reinterpret_cast<char*>(buffer.data()),
                 static_cast<std::streamsize>(n * sizeof(float)))) {
      throw Error(ErrorKind::format, "truncated embedding payload for " + name);
    }
    EmbeddingSequence seq;
    seq.vectors.resize(length + 1, dim);
    for (std::uint32_t r = 0; r <= length; ++r) {
      for (std::uint32_t c = 0; c < dim; ++c) {
        const float v = buffer[static_cast<std::size_t>(r) * dim + c];
        if (!std::isfinite(v)) {
          throw Error(ErrorKind::numeric, "non-finite embedding value in " + name);
        }
        seq.vectors(r, c) = static_cast<double>(v);
      }
    }
    loaded.push_back(std::move(seq));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::format, "trailing bytes after last sentence in '" + path.string() + "'");
  }
  return loaded;
}

void load_embeddings(const std::filesystem::path& path, Split& split) {
  auto loaded = read_embeddings(path, &split);
  for (std::size_t m = 0; m < loaded.size(); ++m) {
    split.instances[m].embedding = std::move(loaded[m]);
  }
}

void write_embeddings(const std::filesystem::path& path, const Split& split) {
  if (!split.has_embeddings()) {
    throw Error(ErrorKind::schema, "split '" + split.name + "' has no embeddings to write");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::io, "cannot write embedding file '" + path.string() + "'");
  }
  const int dim = split.instances.front().embedding->dim();
  out.write(kEmbeddingMagic, 4);
  write_u32(out, kEmbeddingVersion);
  write_u32(out, static_cast<std::uint32_t>(split.size()));
  write_u32(out, static_cast<std::uint32_t>(dim));
  std::vector<float> row(static_cast<std::size_t>(dim));
  for (const auto& inst : split.instances) {
    const auto& emb = *inst.embedding;
    if (emb.dim() != dim || emb.length() != inst.sentence.length()) {
      throw Error(ErrorKind::dimension, "embedding shape mismatch for '" + inst.sentence.id + "'");
    }
    write_u32(out, static_cast<std::uint32_t>(emb.length()));
    for (int r = 0; r <= emb.length(); ++r) {
      for (int c = 0; c < dim; ++c) row[static_cast<std::size_t>(c)] = static_cast<float>(emb.vectors(r, c));
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
}

}  // namespace scmm
