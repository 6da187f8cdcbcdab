#include "scmm/labels.hpp"

#include <set>

#include "scmm/error.hpp"

namespace scmm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::schema: return "schema";
    case ErrorKind::format: return "format";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::domain: return "domain";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

LabelSet::LabelSet(std::vector<std::string> entities) : entities_(std::move(entities)) {
  if (entities_.empty()) {
    throw Error(ErrorKind::schema, "entity list must not be empty");
  }
  std::set<std::string> seen;
  labels_.reserve(2 * entities_.size() + 1);
  labels_.emplace_back("O");
  for (const auto& entity : entities_) {
    if (entity.empty() || entity == "O") {
      throw Error(ErrorKind::schema, "invalid entity name '" + entity + "'");
    }
    if (!seen.insert(entity).second) {
      throw Error(ErrorKind::schema, "duplicate entity '" + entity + "'");
    }
    labels_.push_back("B-" + entity);
    labels_.push_back("I-" + entity);
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    index_.emplace(labels_[i], static_cast<LabelId>(i));
  }
}

std::optional<LabelId> LabelSet::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

LabelId LabelSet::index_of(std::string_view label) const {
  if (auto id = find(label)) return *id;
  throw Error(ErrorKind::schema, "unknown label '" + std::string(label) + "'");
}

}  // namespace scmm
