#pragma once

// Checkpoint container:
//   "ZSFC" | u32 version | u32 len + config JSON | u64 step | u32 count |
//   count x (u32 len + name | u32 rank | u32 dims[rank] | f32 data[prod(dims)])
// All integers and floats little-endian.

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsflow/io/binary.hpp"
#include "zsflow/nn/layers.hpp"

namespace zsflow::train {

inline constexpr char kCheckpointMagic[4] = {'Z', 'S', 'F', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  nd::Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json config;
  std::uint64_t step = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
};

template <typename Real>
Checkpoint make_checkpoint(const nn::ParamList<Real>& params, nlohmann::json config, std::uint64_t step) {
  Checkpoint c{std::move(config), step, {}};
  std::set<std::string> seen;
  for (const auto* p : params) {
    if (!seen.insert(p->name).second) throw io::FormatError("checkpoint: duplicate parameter " + p->name);
    c.arrays.push_back({p->name, p->array.shape, std::vector<float>(p->array.data.begin(), p->array.data.end())});
  }
  return c;
}

inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  os.write(kCheckpointMagic, 4);
  io::put<std::uint32_t>(os, kCheckpointVersion);
  const std::string cfg = c.config.dump();
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.size()));
  io::put_bytes(os, cfg);
  io::put<std::uint64_t>(os, c.step);
  io::put<std::uint32_t>(os, static_cast<std::uint32_t>(c.arrays.size()));
  for (const auto& a : c.arrays) {
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
    io::put_bytes(os, a.name);
    io::put<std::uint32_t>(os, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) io::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(a.data.data()), static_cast<std::streamsize>(a.data.size() * sizeof(float)));
  }
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  io::write_atomic(path, [&](std::ostream& os) { write_checkpoint(os, c); });
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kCheckpointMagic, 4))
    throw io::FormatError("checkpoint: bad magic");
  const auto version = io::get<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) throw io::FormatError("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint c;
  const auto cfg_len = io::get<std::uint32_t>(is, "config length");
  try {
    c.config = nlohmann::json::parse(io::get_bytes(is, cfg_len, "config"));
  } catch (const nlohmann::json::parse_error& e) {
    throw io::FormatError(std::string("checkpoint: corrupt config: ") + e.what());
  }
  c.step = io::get<std::uint64_t>(is, "step");
  const auto n = io::get<std::uint32_t>(is, "array count");
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedArray a;
    const auto len = io::get<std::uint32_t>(is, "name length");
    if (len > 4096) throw io::FormatError("checkpoint: implausible name length");
    a.name = io::get_bytes(is, len, "name");
    if (!seen.insert(a.name).second) throw io::FormatError("checkpoint: duplicate array " + a.name);
    const auto rank = io::get<std::uint32_t>(is, "rank");
    if (rank > 8) throw io::FormatError("checkpoint: implausible rank for " + a.name);
    std::size_t count = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.shape.push_back(io::get<std::uint32_t>(is, "dim"));
      count *= a.shape.back();
    }
    if (count > (std::size_t{1} << 30)) throw io::FormatError("checkpoint: implausible size for " + a.name);
    a.data = io::get_floats(is, count, "array data");
    c.arrays.push_back(std::move(a));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw io::FormatError("checkpoint: trailing bytes");
  return c;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

struct LoadReport {
  std::vector<std::string> loaded, reinitialized, row_copied;
};

/// Copies every parameter whose name and shape match. Others keep their fresh
/// initialization; with row_copy, a table whose leading dimension changed
/// gets its overlapping rows copied (e.g. a language table grown from 2 to 3
/// rows keeps rows 0 and 1).
template <typename Real>
LoadReport load_partial(const Checkpoint& ckpt, const nn::ParamList<Real>& params, bool row_copy = false) {
  LoadReport r;
  for (auto* p : params) {
    const auto* a = ckpt.find(p->name);
    if (a && a->shape == p->array.shape) {
      for (std::size_t i = 0; i < a->data.size(); ++i) p->array.data[i] = static_cast<Real>(a->data[i]);
      r.loaded.push_back(p->name);
      continue;
    }
    const bool same_rows = a && row_copy && a->shape.size() == p->array.shape.size() && !a->shape.empty() &&
                           std::equal(a->shape.begin() + 1, a->shape.end(), p->array.shape.begin() + 1);
    if (same_rows) {
      const std::size_t row = a->data.size() / a->shape[0];
      const std::size_t rows = std::min(a->shape[0], p->array.shape[0]);
      for (std::size_t i = 0; i < rows * row; ++i) p->array.data[i] = static_cast<Real>(a->data[i]);
      r.row_copied.push_back(p->name);
    } else {
      r.reinitialized.push_back(p->name);
    }
  }
  return r;
}

/// Strict restore: every parameter must be present with its exact shape.
template <typename Real>
void load_exact(const Checkpoint& ckpt, const nn::ParamList<Real>& params) {
  auto r = load_partial(ckpt, params);
  if (!r.reinitialized.empty())
    throw io::FormatError("checkpoint does not match the model: missing or mis-shaped '" + r.reinitialized.front() + "'");
}

}  // namespace zsflow::train
