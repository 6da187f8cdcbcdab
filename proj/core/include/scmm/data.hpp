#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scmm/labels.hpp"
#include "scmm/tensor.hpp"

namespace scmm {

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::vector<LabelId>> gold;

  int length() const { return static_cast<int>(tokens.size()); }
};

/// K x T grid of observed label indices. Abstention is stored as O.
struct WeakAnnotationMatrix {
  std::vector<std::string> lf_names;
  std::vector<std::vector<LabelId>> obs;  // obs[k][t]

  int num_lfs() const { return static_cast<int>(obs.size()); }
  int length() const { return obs.empty() ? 0 : static_cast<int>(obs.front().size()); }
  LabelId at(int lf, int t) const {
    return obs[static_cast<std::size_t>(lf)][static_cast<std::size_t>(t)];
  }
};

/// Row 0 is the sentence embedding, rows 1..T the token embeddings.
struct EmbeddingSequence {
  Matrix vectors;

  int dim() const { return static_cast<int>(vectors.cols()); }
  int length() const { return static_cast<int>(vectors.rows()) - 1; }
  Vector sentence() const { return vectors.row(0).transpose(); }
  Vector token(int t) const { return vectors.row(t).transpose(); }  // t in 1..T
};

struct Instance {
  Sentence sentence;
  WeakAnnotationMatrix weak;
  std::optional<EmbeddingSequence> embedding;
};

struct Split {
  std::string name;
  std::vector<Instance> instances;

  std::size_t size() const { return instances.size(); }
  bool has_gold() const;
  bool has_embeddings() const;
  std::size_t num_tokens() const;
};

/// A set of named splits sharing one label set and one LF list.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(LabelSet labels) : labels_(std::move(labels)) {}

  const LabelSet& labels() const { return labels_; }
  const std::vector<std::string>& lf_names() const { return lf_names_; }
  const std::vector<Split>& splits() const { return splits_; }

  /// Adds a split after checking it shares the LF list of existing splits.
  void add_split(Split split);
  bool has_split(const std::string& name) const;
  const Split& split(const std::string& name) const;
  Split& split(const std::string& name);

 private:
  LabelSet labels_;
  std::vector<std::string> lf_names_;
  std::vector<Split> splits_;
};

enum class BioMode { strict, conll };

struct BioViolation {
  int position;
  std::string message;
};

/// Strict mode flags I-e not preceded by B-e or I-e; conll mode treats such
/// tokens as chunk starts and reports nothing.
std::vector<BioViolation> validate_bio(const std::vector<LabelId>& seq, const LabelSet& labels,
                                       BioMode mode);

Split read_split(const std::filesystem::path& path, const LabelSet& labels,
                 const std::string& split_name);
/// Single-file convenience: a Dataset holding one split named after the file stem.
Dataset load_dataset(const std::filesystem::path& path, const std::vector<std::string>& entities);

void write_split(const std::filesystem::path& path, const Split& split, const LabelSet& labels);

inline constexpr char kEmbeddingMagic[4] = {'S', 'C', 'M', 'M'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

/// Reads an embedding file; with `expect`, counts and lengths must match it.
std::vector<EmbeddingSequence> read_embeddings(const std::filesystem::path& path,
                                               const Split* expect = nullptr);
/// Attaches per-sentence embeddings from the binary format to a loaded split.
void load_embeddings(const std::filesystem::path& path, Split& split);
void write_embeddings(const std::filesystem::path& path, const Split& split);

}  // namespace scmm
