#include "scmm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "scmm/error.hpp"

namespace scmm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

void TensorTable::put(const std::string& name, const Matrix& m) {
  Entry e;
  e.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  e.values.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) e.values.push_back(static_cast<float>(m(r, c)));
  }
  entries_[name] = std::move(e);
}

void TensorTable::put(const std::string& name, const Vector& v) {
  Entry e;
  e.dims = {static_cast<std::uint32_t>(v.size())};
  for (Eigen::Index i = 0; i < v.size(); ++i) e.values.push_back(static_cast<float>(v(i)));
  entries_[name] = std::move(e);
}

void TensorTable::put_scalar(const std::string& name, double value) {
  entries_[name] = Entry{{1}, {static_cast<float>(value)}};
}

const TensorTable::Entry& TensorTable::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) {
    throw Error(ErrorKind::format, "checkpoint has no tensor '" + name + "'");
  }
  return it->second;
}

Matrix TensorTable::matrix(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dims.size() != 2) throw Error(ErrorKind::format, "tensor '" + name + "' is not rank 2");
  Matrix m(e.dims[0], e.dims[1]);
  std::size_t i = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = static_cast<double>(e.values[i++]);
  }
  return m;
}

Vector TensorTable::vector(const std::string& name) const {
  const auto& e = entry(name);
  if (e.dims.size() != 1) throw Error(ErrorKind::format, "tensor '" + name + "' is not rank 1");
  Vector v(e.dims[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = static_cast<double>(e.values[static_cast<std::size_t>(i)]);
  return v;
}

double TensorTable::scalar(const std::string& name) const {
  const auto& e = entry(name);
  if (e.values.size() != 1) throw Error(ErrorKind::format, "tensor '" + name + "' is not a scalar");
  return static_cast<double>(e.values.front());
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  if (!in.read(reinterpret_cast<char*>(&v), 4)) {
    throw Error(ErrorKind::format, "truncated checkpoint");
  }
  return v;
}

}  // namespace

void TensorTable::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write checkpoint '" + path.string() + "'");
  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) put_u32(out, d);
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorKind::io, "failed writing checkpoint '" + path.string() + "'");
}

TensorTable TensorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw Error(ErrorKind::format, "bad magic in checkpoint '" + path.string() + "'");
  }
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::format, "unsupported checkpoint version " + std::to_string(version));
  }
  TensorTable table;
  const auto count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_u32(in);
    if (name_len > 4096) throw Error(ErrorKind::format, "implausible tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw Error(ErrorKind::format, "truncated checkpoint");
    Entry e;
    const auto rank = get_u32(in);
    if (rank > 8) throw Error(ErrorKind::format, "implausible tensor rank in '" + name + "'");
    std::size_t n = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      e.dims.push_back(get_u32(in));
      n *= e.dims.back();
    }
    e.values.resize(n);
    if (!in.read(reinterpret_cast<char*>(e.values.data()), static_cast<std::streamsize>(n * sizeof(float)))) {
      throw Error(ErrorKind::format, "truncated payload for tensor '" + name + "'");
    }
    table.entries_[name] = std::move(e);
  }
  return table;
}

}  // namespace scmm
