#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scmm {

using LabelId = int;

/// BIO label universe over an ordered entity list. O is always index 0;
/// entity i owns B at 2i+1 and I at 2i+2.
class LabelSet {
 public:
  static constexpr LabelId kOutside = 0;

  LabelSet() = default;
  explicit LabelSet(std::vector<std::string> entities);

  int size() const { return static_cast<int>(labels_.size()); }
  int num_entities() const { return static_cast<int>(entities_.size()); }

  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& labels() const { return labels_; }
  const std::string& name(LabelId id) const { return labels_.at(static_cast<std::size_t>(id)); }

  std::optional<LabelId> find(std::string_view label) const;
  /// Throws a schema error for labels outside the set.
  LabelId index_of(std::string_view label) const;

  LabelId begin_of(int entity) const { return 2 * entity + 1; }
  LabelId inside_of(int entity) const { return 2 * entity + 2; }
  bool is_begin(LabelId id) const { return id > 0 && id % 2 == 1; }
  bool is_inside(LabelId id) const { return id > 0 && id % 2 == 0; }
  /// Entity position for a non-O label.
  int entity_of(LabelId id) const { return (id - 1) / 2; }

  bool operator==(const LabelSet& other) const { return entities_ == other.entities_; }

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, LabelId> index_;
};

}  // namespace scmm
