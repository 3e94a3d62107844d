#pragma once

// Event streams -> Grid (per-interval counts with a pre-arrival mask) ->
// stacked feature channels -> padded training windows.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "socialgrid/tensor.hpp"

namespace socialgrid {

// ---------------------------------------------------------------------------
// Event streams
// ---------------------------------------------------------------------------

struct ThreadCascade {
  std::string thread_id;
  double thread_time = 0.0;          // seconds since epoch
  std::vector<double> reply_times;   // sorted, each >= thread_time

  friend bool operator==(const ThreadCascade&, const ThreadCascade&) = default;
};

/// Cascades ordered by (thread_time, thread_id).
struct EventStream {
  std::vector<ThreadCascade> cascades;

  std::size_t size() const noexcept { return cascades.size(); }
  bool empty() const noexcept { return cascades.empty(); }
  friend bool operator==(const EventStream&, const EventStream&) = default;
};

inline bool cascade_precedes(const ThreadCascade& a, const ThreadCascade& b) {
  return std::tie(a.thread_time, a.thread_id) < std::tie(b.thread_time, b.thread_id);
}

/// Sorts replies and cascades into canonical order and checks the stream
/// invariants.
inline EventStream make_event_stream(std::vector<ThreadCascade> cascades) {
  for (auto& c : cascades) {
    if (!std::isfinite(c.thread_time)) throw std::invalid_argument("cascade " + c.thread_id + ": non-finite time");
    std::sort(c.reply_times.begin(), c.reply_times.end());
    if (!c.reply_times.empty() && c.reply_times.front() < c.thread_time)
      throw std::invalid_argument("cascade " + c.thread_id + ": reply earlier than its thread");
  }
  std::sort(cascades.begin(), cascades.end(), cascade_precedes);
  for (std::size_t i = 1; i < cascades.size(); ++i)
    if (cascades[i].thread_id == cascades[i - 1].thread_id &&
        cascades[i].thread_time == cascades[i - 1].thread_time)
      throw std::invalid_argument("duplicate thread " + cascades[i].thread_id);
  return EventStream{std::move(cascades)};
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

struct GridSpec {
  double d = 300.0;  // interval length, seconds
  double t0 = 0.0;   // origin of row 0, seconds
  std::size_t n_rows = 1;
  std::size_t n_cols = 1;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Column j is cascade j, row i is the interval [t0 + i d, t0 + (i+1) d).
/// Cells above a column's arrival row are masked (the 0_s sentinel) and
/// hold zero. The thread post itself counts as one event in its arrival cell.
struct Grid {
  GridSpec spec;
  Matrix<std::int64_t> counts;
  Matrix<std::uint8_t> mask;
  std::vector<std::int64_t> arrival_rows;  // may be >= n_rows for threads past the window
  std::size_t dropped_events = 0;          // events past the last materialized row

  std::size_t rows() const noexcept { return spec.n_rows; }
  std::size_t cols() const noexcept { return spec.n_cols; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Row holding time t under half-open intervals. The boundaries are the
/// floating-point values t0 + i*d, so a time equal to a boundary always
/// lands in the later interval.
inline std::int64_t interval_index(double t, double t0, double d) {
  auto r = static_cast<std::int64_t>(std::floor((t - t0) / d));
  while (r > 0 && t < t0 + static_cast<double>(r) * d) --r;
  while (t >= t0 + static_cast<double>(r + 1) * d) ++r;
  return r;
}

/// Number of rows needed so that every event of the stream is materialized.
inline std::size_t rows_to_cover(const EventStream& stream, double d, double t0) {
  std::int64_t last = 0;
  for (const auto& c : stream.cascades) {
    last = std::max(last, interval_index(c.thread_time, t0, d));
    if (!c.reply_times.empty()) last = std::max(last, interval_index(c.reply_times.back(), t0, d));
  }
  return static_cast<std::size_t>(last + 1);
}

/// Recomputes the mask from arrival rows: mask(i, j) = 1 iff i < arrival_rows[j].
inline Matrix<std::uint8_t> mask_from_arrivals(const std::vector<std::int64_t>& arrival_rows, std::size_t n_rows) {
  Matrix<std::uint8_t> mask(n_rows, arrival_rows.size(), 0);
  for (std::size_t j = 0; j < arrival_rows.size(); ++j)
    for (std::size_t i = 0; i < n_rows; ++i) mask(i, j) = static_cast<std::int64_t>(i) < arrival_rows[j] ? 1 : 0;
  return mask;
}

inline Grid build_grid(const EventStream& stream, double d, double t0, std::size_t n_rows) {
  if (!(d > 0.0) || !std::isfinite(d)) throw std::invalid_argument("build_grid: interval length d must be positive");
  if (!std::isfinite(t0)) throw std::invalid_argument("build_grid: non-finite origin");
  if (stream.empty()) throw std::invalid_argument("build_grid: empty event stream");
  if (n_rows < 1) throw std::invalid_argument("build_grid: need at least one row");

  const std::size_t n_cols = stream.size();
  Grid g;
  g.spec = GridSpec{d, t0, n_rows, n_cols};
  g.counts = Matrix<std::int64_t>(n_rows, n_cols, 0);
  g.arrival_rows.resize(n_cols);

  const auto n = static_cast<std::int64_t>(n_rows);
  for (std::size_t j = 0; j < n_cols; ++j) {
    const ThreadCascade& c = stream.cascades[j];
    if (c.thread_time < t0)
      throw std::invalid_argument("build_grid: thread " + c.thread_id + " is earlier than the grid origin");
    const std::int64_t a = interval_index(c.thread_time, t0, d);
    g.arrival_rows[j] = a;
    if (a < n) {
      g.counts(static_cast<std::size_t>(a), j) += 1;
    } else {
      ++g.dropped_events;
    }
    for (double t : c.reply_times) {
      if (t < t0) throw std::invalid_argument("build_grid: reply of " + c.thread_id + " is earlier than the grid origin");
      const std::int64_t r = interval_index(t, t0, d);
      if (r < n) {
        g.counts(static_cast<std::size_t>(r), j) += 1;
      } else {
        ++g.dropped_events;
      }
    }
  }
  g.mask = mask_from_arrivals(g.arrival_rows, n_rows);
  return g;
}

/// O between thread j and thread j+1: the number of interval steps
/// separating their arrival rows (0 when both fall in one interval).
inline std::int64_t zeros_gap(const Grid& grid, std::size_t j) {
  if (grid.cols() < 2 || j > grid.cols() - 2)
    throw std::out_of_range("zeros_gap: column " + std::to_string(j) + " has no successor");
  return grid.arrival_rows[j + 1] - grid.arrival_rows[j];
}

// ---------------------------------------------------------------------------
// Feature channels
// ---------------------------------------------------------------------------

enum class Channel : std::uint8_t { Counts = 0, RelTime = 1, Mask = 2 };

using ChannelSet = std::vector<Channel>;

inline ChannelSet all_channels() { return {Channel::Counts, Channel::RelTime, Channel::Mask}; }

/// "S" = counts only, "M" = counts + relative time, "full" = all three.
inline ChannelSet parse_channel_set(const std::string& name) {
  if (name == "S") return {Channel::Counts};
  if (name == "M") return {Channel::Counts, Channel::RelTime};
  if (name == "full") return all_channels();
  throw std::invalid_argument("unknown channel set '" + name + "' (expected S, M or full)");
}

inline std::string channel_set_name(const ChannelSet& set) {
  if (set == ChannelSet{Channel::Counts}) return "S";
  if (set == ChannelSet{Channel::Counts, Channel::RelTime}) return "M";
  if (set == all_channels()) return "full";
  std::string s;
  for (Channel c : set) s += std::to_string(static_cast<int>(c));
  return s;
}

inline void validate_channels(const ChannelSet& set) {
  if (set.empty() || set.front() != Channel::Counts)
    throw std::invalid_argument("channel set must start with COUNTS");
  for (std::size_t i = 1; i < set.size(); ++i)
    if (static_cast<int>(set[i]) <= static_cast<int>(set[i - 1]))
      throw std::invalid_argument("channel set must be in canonical order COUNTS, RELTIME, MASK without repeats");
}

/// Elapsed intervals since each column's arrival, divided by the column's
/// largest elapsed value inside the grid. Masked cells and columns whose
/// largest value is zero stay 0.
inline Matrix<double> relative_time_channel(const Grid& grid) {
  Matrix<double> rel(grid.rows(), grid.cols(), 0.0);
  const auto last = static_cast<std::int64_t>(grid.rows()) - 1;
  for (std::size_t j = 0; j < grid.cols(); ++j) {
    const std::int64_t a = grid.arrival_rows[j];
    const std::int64_t max_raw = last - a;
    if (max_raw <= 0) continue;
    for (std::int64_t i = std::max<std::int64_t>(a, 0); i <= last; ++i)
      rel(static_cast<std::size_t>(i), j) = static_cast<double>(i - a) / static_cast<double>(max_raw);
  }
  return rel;
}

struct FeatureTensor {
  ChannelSet channels;
  Tensor<double> data;  // C x n_rows x n_cols
  GridSpec spec;
};

inline FeatureTensor assemble_features(const Grid& grid, const ChannelSet& channels) {
  validate_channels(channels);
  const std::size_t h = grid.rows(), w = grid.cols();
  FeatureTensor f{channels, Tensor<double>({channels.size(), h, w}), grid.spec};
  Matrix<double> rel;
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c] == Channel::RelTime) rel = relative_time_channel(grid);
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double v = 0.0;
        switch (channels[c]) {
          case Channel::Counts: v = static_cast<double>(grid.counts(i, j)); break;
          case Channel::RelTime: v = rel(i, j); break;
          case Channel::Mask: v = grid.mask(i, j); break;
        }
        f.data(c, i, j) = v;
      }
  }
  return f;
}

/// Zero rows on top and zero columns on the left; the input ends up in the
/// bottom-right corner.
template <typename T>
Matrix<T> pad_top_left(const Matrix<T>& m, std::size_t pad_rows, std::size_t pad_cols) {
  Matrix<T> out(m.rows() + pad_rows, m.cols() + pad_cols, T{});
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i + pad_rows, j + pad_cols) = m(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// Windows and training segments
// ---------------------------------------------------------------------------

struct Cell {
  std::int64_t row = 0;
  std::int64_t col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// h x w crop of every channel whose bottom-right cell is `anchor`. Cells
/// outside the grid read as zero, which is the top/left zero padding for
/// windows near the origin.
inline Tensor<double> crop_window(const FeatureTensor& f, Cell anchor, std::size_t h, std::size_t w) {
  const std::size_t c_n = f.data.dim(0);
  const auto rows = static_cast<std::int64_t>(f.data.dim(1));
  const auto cols = static_cast<std::int64_t>(f.data.dim(2));
  Tensor<double> out({c_n, h, w});
  const std::int64_t top = anchor.row - static_cast<std::int64_t>(h) + 1;
  const std::int64_t left = anchor.col - static_cast<std::int64_t>(w) + 1;
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t i = 0; i < h; ++i) {
      const std::int64_t r = top + static_cast<std::int64_t>(i);
      if (r < 0 || r >= rows) continue;
      for (std::size_t j = 0; j < w; ++j) {
        const std::int64_t cc = left + static_cast<std::int64_t>(j);
        if (cc < 0 || cc >= cols) continue;
        out(c, i, j) = f.data(c, static_cast<std::size_t>(r), static_cast<std::size_t>(cc));
      }
    }
  return out;
}

/// Same result as crop_window(assemble_features(grid, channels), ...) but
/// touching only the window's cells.
inline Tensor<double> window_features(const Grid& grid, const ChannelSet& channels, Cell anchor, std::size_t h,
                                      std::size_t w) {
  validate_channels(channels);
  const auto rows = static_cast<std::int64_t>(grid.rows());
  const auto cols = static_cast<std::int64_t>(grid.cols());
  Tensor<double> out({channels.size(), h, w});
  const std::int64_t top = anchor.row - static_cast<std::int64_t>(h) + 1;
  const std::int64_t left = anchor.col - static_cast<std::int64_t>(w) + 1;
  for (std::size_t j = 0; j < w; ++j) {
    const std::int64_t cc = left + static_cast<std::int64_t>(j);
    if (cc < 0 || cc >= cols) continue;
    const auto col = static_cast<std::size_t>(cc);
    const std::int64_t a = grid.arrival_rows[col];
    const std::int64_t max_raw = rows - 1 - a;
    for (std::size_t i = 0; i < h; ++i) {
      const std::int64_t r = top + static_cast<std::int64_t>(i);
      if (r < 0 || r >= rows) continue;
      const auto row = static_cast<std::size_t>(r);
      for (std::size_t c = 0; c < channels.size(); ++c) {
        double v = 0.0;
        switch (channels[c]) {
          case Channel::Counts: v = static_cast<double>(grid.counts(row, col)); break;
          case Channel::RelTime:
            if (max_raw > 0 && r >= a) v = static_cast<double>(r - a) / static_cast<double>(max_raw);
            break;
          case Channel::Mask: v = grid.mask(row, col); break;
        }
        out(c, i, j) = v;
      }
    }
  }
  return out;
}

enum class TargetKind { ThreadGap, NextRow };

struct Segment {
  Tensor<double> features;  // C x h x w, channel 0 is COUNTS
  TargetKind kind = TargetKind::NextRow;
  double gap = 0.0;                          // ThreadGap target
  std::vector<double> next_row;              // NextRow target, one per window column
  std::vector<std::uint8_t> next_row_valid;  // target cell inside the grid and not masked
  std::vector<std::uint8_t> window_valid;    // h*w, window cell inside the grid and not masked
  Cell anchor;                               // bottom-right cell of the window in the source grid
};

namespace detail {

inline std::vector<std::uint8_t> window_validity(const Grid& grid, Cell anchor, std::size_t h, std::size_t w) {
  std::vector<std::uint8_t> valid(h * w, 0);
  const std::int64_t top = anchor.row - static_cast<std::int64_t>(h) + 1;
  const std::int64_t left = anchor.col - static_cast<std::int64_t>(w) + 1;
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      const std::int64_t r = top + static_cast<std::int64_t>(i), c = left + static_cast<std::int64_t>(j);
      if (r < 0 || c < 0 || r >= static_cast<std::int64_t>(grid.rows()) || c >= static_cast<std::int64_t>(grid.cols()))
        continue;
      valid[i * w + j] = grid.mask(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) ? 0 : 1;
    }
  return valid;
}

}  // namespace detail

/// Builds one segment from precomputed window features.
inline Segment make_segment(Tensor<double> features, const Grid& grid, TargetKind kind, Cell anchor) {
  const std::size_t h = features.dim(1), w = features.dim(2);
  Segment s;
  s.features = std::move(features);
  s.kind = kind;
  s.anchor = anchor;
  s.window_valid = detail::window_validity(grid, anchor, h, w);
  if (kind == TargetKind::ThreadGap) {
    s.gap = static_cast<double>(zeros_gap(grid, static_cast<std::size_t>(anchor.col)));
    return s;
  }
  s.next_row.assign(w, 0.0);
  s.next_row_valid.assign(w, 0);
  const std::int64_t r = anchor.row + 1;
  if (r < 0 || r >= static_cast<std::int64_t>(grid.rows())) return s;
  const std::int64_t left = anchor.col - static_cast<std::int64_t>(w) + 1;
  for (std::size_t j = 0; j < w; ++j) {
    const std::int64_t c = left + static_cast<std::int64_t>(j);
    if (c < 0 || c >= static_cast<std::int64_t>(grid.cols())) continue;
    const auto row = static_cast<std::size_t>(r), col = static_cast<std::size_t>(c);
    s.next_row[j] = static_cast<double>(grid.counts(row, col));
    s.next_row_valid[j] = grid.mask(row, col) ? 0 : 1;
  }
  return s;
}

/// Thread-gap segment for column j: window anchored at thread j's arrival
/// cell, target O between threads j and j+1.
inline Segment thread_segment(const FeatureTensor& f, const Grid& grid, std::size_t j, std::size_t h, std::size_t w) {
  const Cell anchor{grid.arrival_rows.at(j), static_cast<std::int64_t>(j)};
  return make_segment(crop_window(f, anchor, h, w), grid, TargetKind::ThreadGap, anchor);
}

/// Reply segment anchored at `anchor`; its target is the row below the window.
inline Segment reply_segment(const FeatureTensor& f, const Grid& grid, Cell anchor, std::size_t h, std::size_t w) {
  return make_segment(crop_window(f, anchor, h, w), grid, TargetKind::NextRow, anchor);
}

/// Slices the whole grid into training segments.
///
/// NextRow: for every anchor row i in [0, n_rows - 2], windows end at
/// column n_cols - 1 and step left by `stride` columns until a window
/// reaches column 0 (one window per row when w >= n_cols).
/// ThreadGap: one segment per column j in [0, n_cols - 2].
inline std::vector<Segment> slice_segments(const FeatureTensor& f, std::size_t h, std::size_t w, std::size_t stride,
                                           TargetKind kind, const Grid& grid) {
  if (h < 1 || w < 1 || stride < 1) throw std::invalid_argument("slice_segments: h, w and stride must be >= 1");
  std::vector<Segment> out;
  if (kind == TargetKind::ThreadGap) {
    for (std::size_t j = 0; j + 1 < grid.cols(); ++j) out.push_back(thread_segment(f, grid, j, h, w));
    return out;
  }
  for (std::size_t i = 0; i + 1 < grid.rows(); ++i) {
    auto col = static_cast<std::int64_t>(grid.cols()) - 1;
    while (true) {
      out.push_back(reply_segment(f, grid, Cell{static_cast<std::int64_t>(i), col}, h, w));
      if (col - static_cast<std::int64_t>(w) + 1 <= 0) break;
      col -= static_cast<std::int64_t>(stride);
      if (col < 0) break;
    }
  }
  return out;
}

/// Anchors of the cells a reply model is asked about for columns in
/// [col_begin, col_end): rows arrival - 1 through arrival + max_lag - 1, so
/// the targets are the arrival cell and the max_lag cells after it.
inline std::vector<Cell> reply_anchors(const Grid& grid, std::size_t col_begin, std::size_t col_end,
                                       std::size_t max_lag) {
  std::vector<Cell> anchors;
  const auto last = static_cast<std::int64_t>(grid.rows()) - 2;
  for (std::size_t j = col_begin; j < std::min(col_end, grid.cols()); ++j) {
    const std::int64_t a = grid.arrival_rows[j];
    for (std::int64_t r = std::max<std::int64_t>(a - 1, 0); r <= std::min(a + static_cast<std::int64_t>(max_lag) - 1, last);
         ++r)
      anchors.push_back(Cell{r, static_cast<std::int64_t>(j)});
  }
  return anchors;
}

}  // namespace socialgrid
