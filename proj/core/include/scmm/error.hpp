#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scmm {

enum class ErrorKind {
  parse,      // malformed input text
  schema,     // well-formed input that violates the data model
  format,     // binary file layout problems
  dimension,  // tensor/layer shape mismatch
  domain,     // argument outside a function's domain
  numeric,    // non-finite values
  config,     // configuration errors
  io,         // filesystem errors
  usage,      // command-line misuse
};

std::string_view to_string(ErrorKind kind);

/// Every failure the library reports is an scmm::Error carrying a kind that
/// the command-line tool forwards as a machine-readable field.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace scmm
