#pragma once

// Versioned binary grid files.
//
// Layout (little endian): magic "SGRIDGR\0", u32 version, f64 d, f64 t0,
// u64 rows, u64 cols, u64 dropped_events, cols x i64 arrival rows,
// rows x cols i64 counts (row-major), u64 FNV-1a of everything before it.
// The mask is not stored; it follows from the arrival rows.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

#include "socialgrid/checkpoint.hpp"
#include "socialgrid/grid.hpp"

namespace socialgrid {

inline constexpr char kGridMagic[8] = {'S', 'G', 'R', 'I', 'D', 'G', 'R', '\0'};
inline constexpr std::uint32_t kGridFileVersion = 1;

inline std::string encode_grid(const Grid& g) {
  std::string out(kGridMagic, sizeof kGridMagic);
  detail::put_le<std::uint32_t>(out, kGridFileVersion);
  detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(g.spec.d));
  detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(g.spec.t0));
  detail::put_le<std::uint64_t>(out, g.rows());
  detail::put_le<std::uint64_t>(out, g.cols());
  detail::put_le<std::uint64_t>(out, g.dropped_events);
  for (std::int64_t a : g.arrival_rows) detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(a));
  for (std::int64_t c : g.counts.storage()) detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(c));
  detail::put_le<std::uint64_t>(out, fnv1a(out, out.size()));
  return out;
}

inline Grid decode_grid(const std::string& bytes) {
  if (bytes.size() < sizeof kGridMagic + 4 + 8) throw std::runtime_error("grid file truncated");
  if (bytes.compare(0, sizeof kGridMagic, std::string(kGridMagic, sizeof kGridMagic)) != 0)
    throw std::runtime_error("not a grid file (bad magic)");
  const std::size_t body = bytes.size() - 8;
  try {
    detail::Reader in(bytes, body);
    in.take(sizeof kGridMagic, "magic");
    const auto version = in.le<std::uint32_t>("version");
    if (version != kGridFileVersion)
      throw std::runtime_error("grid file version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kGridFileVersion) + ")");
    Grid g;
    g.spec.d = std::bit_cast<double>(in.le<std::uint64_t>("d"));
    g.spec.t0 = std::bit_cast<double>(in.le<std::uint64_t>("t0"));
    g.spec.n_rows = in.le<std::uint64_t>("rows");
    g.spec.n_cols = in.le<std::uint64_t>("cols");
    g.dropped_events = in.le<std::uint64_t>("dropped events");
    if (g.spec.n_cols > body / 8 || (g.spec.n_cols > 0 && g.spec.n_rows > body / 8 / g.spec.n_cols))
      throw std::runtime_error("grid file shape is inconsistent with its size");
    g.arrival_rows.resize(g.cols());
    for (auto& a : g.arrival_rows) a = static_cast<std::int64_t>(in.le<std::uint64_t>("arrival rows"));
    g.counts = Matrix<std::int64_t>(g.rows(), g.cols(), 0);
    for (auto& c : g.counts.storage()) c = static_cast<std::int64_t>(in.le<std::uint64_t>("counts"));
    if (in.pos() != body) throw std::runtime_error("grid file has trailing bytes");
    detail::Reader tail(bytes, bytes.size());
    tail.take(body, "body");
    if (tail.le<std::uint64_t>("checksum") != fnv1a(bytes, body))
      throw std::runtime_error("grid file checksum mismatch (file corrupt)");
    g.mask = mask_from_arrivals(g.arrival_rows, g.rows());
    return g;
  } catch (const CheckpointError& e) {
    throw std::runtime_error(std::string("grid file: ") + e.what());
  }
}

inline void save_grid(const Grid& g, const std::string& path) { write_file_bytes(path, encode_grid(g)); }
inline Grid load_grid(const std::string& path) { return decode_grid(read_file_bytes(path)); }

/// Hex FNV-1a of the encoded grid.
inline std::string grid_digest(const Grid& g) {
  const std::string bytes = encode_grid(g);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(bytes, bytes.size())));
  return buf;
}

}  // namespace socialgrid
