#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "scmm/tensor.hpp"

namespace scmm {

inline constexpr char kCheckpointMagic[4] = {'S', 'C', 'M', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named float32 tensors; the on-disk layout of checkpoints.
///
/// File: "SCMP", u32 version, u32 tensor count, then per tensor
/// u32 name length, name bytes, u32 rank, u32 dims[rank], row-major
/// float32 payload. All integers little-endian.
class TensorTable {
 public:
  struct Entry {
    std::vector<std::uint32_t> dims;
    std::vector<float> values;
  };

  void put(const std::string& name, const Matrix& m);
  void put(const std::string& name, const Vector& v);
  void put_scalar(const std::string& name, double value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Matrix matrix(const std::string& name) const;
  Vector vector(const std::string& name) const;
  double scalar(const std::string& name) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }

  void save(const std::filesystem::path& path) const;
  static TensorTable load(const std::filesystem::path& path);

 private:
  const Entry& entry(const std::string& name) const;
  std::map<std::string, Entry> entries_;
};

}  // namespace scmm
