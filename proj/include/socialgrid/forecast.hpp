#pragma once

// Adaptive roll-out of the grid (alternating thread-gap and reply-count
// predictions) and breakout-cascade classification on top of it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "socialgrid/grid.hpp"
#include "socialgrid/models.hpp"
#include "socialgrid/predictor.hpp"

namespace socialgrid {

struct ForecastState {
  Grid grid;
  Matrix<double> values;                  // observed counts, or the real-valued prediction behind a simulated cell
  Matrix<std::uint8_t> simulated_flags;   // 1 where the cell was produced by the models
  std::vector<double> simulated_thread_times;
  double last_thread_time = 0.0;          // most recent thread, observed or simulated
};

/// Wraps an observed grid. Without an explicit time for the last thread,
/// the start of its arrival interval is used.
inline ForecastState make_forecast_state(Grid grid, std::optional<double> last_thread_time = {}) {
  if (grid.cols() == 0) throw std::invalid_argument("forecast: grid has no cascades");
  ForecastState s;
  s.values = Matrix<double>(grid.rows(), grid.cols(), 0.0);
  for (std::size_t i = 0; i < grid.rows(); ++i)
    for (std::size_t j = 0; j < grid.cols(); ++j) s.values(i, j) = static_cast<double>(grid.counts(i, j));
  s.simulated_flags = Matrix<std::uint8_t>(grid.rows(), grid.cols(), 0);
  s.last_thread_time = last_thread_time.value_or(grid.spec.t0 + static_cast<double>(grid.arrival_rows.back()) * grid.spec.d);
  s.grid = std::move(grid);
  return s;
}

/// Sub-grid of rows [0, row_end) and columns [col_begin, col_end). Zero
/// rows is allowed (nothing observed yet).
inline Grid crop_grid(const Grid& g, std::size_t row_end, std::size_t col_begin, std::size_t col_end) {
  if (row_end > g.rows() || col_begin >= col_end || col_end > g.cols())
    throw std::out_of_range("crop_grid: range outside the grid");
  Grid out;
  out.spec = GridSpec{g.spec.d, g.spec.t0, row_end, col_end - col_begin};
  out.counts = Matrix<std::int64_t>(row_end, col_end - col_begin, 0);
  for (std::size_t i = 0; i < row_end; ++i)
    for (std::size_t j = col_begin; j < col_end; ++j) out.counts(i, j - col_begin) = g.counts(i, j);
  out.arrival_rows.assign(g.arrival_rows.begin() + static_cast<std::ptrdiff_t>(col_begin),
                          g.arrival_rows.begin() + static_cast<std::ptrdiff_t>(col_end));
  out.mask = mask_from_arrivals(out.arrival_rows, row_end);
  return out;
}

namespace detail {

inline void check_window(const WindowSpec& w, const char* who) {
  if (w.h < 1 || w.w < 1) throw std::invalid_argument(std::string(who) + ": window must be at least 1 x 1");
  validate_channels(w.channels);
}

/// Count written into the grid for a real-valued prediction.
inline std::int64_t cell_count(double pred, bool arrival_cell) {
  const auto v = static_cast<std::int64_t>(round_half_even(std::max(0.0, pred)));
  return arrival_cell ? std::max<std::int64_t>(1, v) : v;
}

}  // namespace detail

struct RollOptions {
  // Only the most recent `live_columns` cascades keep receiving reply
  // predictions; older ones are treated as died out (0 per new row).
  // Columns whose arrival row is still pending are always live.
  std::size_t live_columns = std::numeric_limits<std::size_t>::max();
};

/// Materializes one more row. Every live column gets its next-row
/// prediction from the window ending one row above.
inline void append_row(ForecastState& s, const ReplyPredictor& reply, const RollOptions& opt = {}) {
  detail::check_window(reply.window(), "append_row");
  Grid& g = s.grid;
  const std::size_t r = g.rows(), cols = g.cols();
  const auto ri = static_cast<std::int64_t>(r);
  const WindowSpec& w = reply.window();
  std::vector<Tensor<double>> feats;
  std::vector<Cell> anchors;
  std::vector<std::size_t> which;
  const std::size_t first_live = opt.live_columns >= cols ? 0 : cols - opt.live_columns;
  for (std::size_t j = 0; j < cols; ++j) {
    if (g.arrival_rows[j] > ri) continue;  // still masked
    if (j < first_live && g.arrival_rows[j] < ri) continue;
    const Cell anchor{ri - 1, static_cast<std::int64_t>(j)};
    feats.push_back(window_features(g, w.channels, anchor, w.h, w.w));
    anchors.push_back(anchor);
    which.push_back(j);
  }
  const auto preds = reply.predict_next_batch(feats, anchors);

  g.spec.n_rows = r + 1;
  g.counts.resize(r + 1, cols, 0);
  g.mask.resize(r + 1, cols, 0);
  s.values.resize(r + 1, cols, 0.0);
  s.simulated_flags.resize(r + 1, cols, 1);
  for (std::size_t j = 0; j < cols; ++j) g.mask(r, j) = ri < g.arrival_rows[j] ? 1 : 0;
  for (std::size_t k = 0; k < which.size(); ++k) {
    const std::size_t j = which[k];
    const double p = std::max(0.0, preds[k]);
    g.counts(r, j) = detail::cell_count(p, g.arrival_rows[j] == ri);
    s.values(r, j) = p;
  }
}

/// Adds a cascade whose thread arrives in row `arrival`. Rows of the new
/// column that already exist are filled top to bottom, each from the
/// window ending one row above.
inline void append_column(ForecastState& s, std::int64_t arrival, const ReplyPredictor& reply) {
  detail::check_window(reply.window(), "append_column");
  Grid& g = s.grid;
  if (!g.arrival_rows.empty() && arrival < g.arrival_rows.back())
    throw std::invalid_argument("append_column: arrival row moves backward");
  const std::size_t rows = g.rows(), c = g.cols();
  g.spec.n_cols = c + 1;
  g.counts.resize(rows, c + 1, 0);
  g.mask.resize(rows, c + 1, 0);
  s.values.resize(rows, c + 1, 0.0);
  s.simulated_flags.resize(rows, c + 1, 1);
  g.arrival_rows.push_back(arrival);
  for (std::size_t i = 0; i < rows; ++i) g.mask(i, c) = static_cast<std::int64_t>(i) < arrival ? 1 : 0;
  const WindowSpec& w = reply.window();
  for (std::int64_t r = std::max<std::int64_t>(arrival, 0); r < static_cast<std::int64_t>(rows); ++r) {
    const Cell anchor{r - 1, static_cast<std::int64_t>(c)};
    const double p = std::max(0.0, reply.predict_next(window_features(g, w.channels, anchor, w.h, w.w), anchor));
    g.counts(static_cast<std::size_t>(r), c) = detail::cell_count(p, r == arrival);
    s.values(static_cast<std::size_t>(r), c) = p;
  }
}

/// Predicted O for the thread after the last column, from the window
/// anchored at that column's arrival cell.
inline double predict_next_gap(const ForecastState& s, const GapPredictor& thread) {
  detail::check_window(thread.window(), "predict_next_gap");
  const Grid& g = s.grid;
  const Cell anchor{g.arrival_rows.back(), static_cast<std::int64_t>(g.cols()) - 1};
  const WindowSpec& w = thread.window();
  const double o = thread.predict_gap(window_features(g, w.channels, anchor, w.h, w.w), anchor);
  if (!(o >= 0.0)) throw std::runtime_error("thread model produced a negative or non-finite gap");
  return o;
}

/// Repeats n_threads times: predict the gap to the next thread, add its
/// column (rolling rows until its arrival row exists), then roll
/// n_intervals further rows.
inline ForecastState adaptive_forecast(ForecastState s, const GapPredictor& thread, const ReplyPredictor& reply,
                                       std::size_t n_threads, std::size_t n_intervals, const RollOptions& opt = {}) {
  if (n_threads == 0) return s;
  detail::check_window(thread.window(), "adaptive_forecast");
  detail::check_window(reply.window(), "adaptive_forecast");
  const double d = s.grid.spec.d;
  for (std::size_t step = 0; step < n_threads; ++step) {
    while (s.grid.arrival_rows.back() >= static_cast<std::int64_t>(s.grid.rows())) append_row(s, reply, opt);
    const double o_hat = predict_next_gap(s, thread);
    const auto gap = static_cast<std::int64_t>(round_half_even(o_hat));
    const std::int64_t arrival = s.grid.arrival_rows.back() + gap;
    s.last_thread_time = arrival_time(s.last_thread_time, o_hat, d, ArrivalMode::Simulation);
    s.simulated_thread_times.push_back(s.last_thread_time);
    append_column(s, arrival, reply);
    while (arrival >= static_cast<std::int64_t>(s.grid.rows())) append_row(s, reply, opt);
    for (std::size_t k = 0; k < n_intervals; ++k) append_row(s, reply, opt);
  }
  return s;
}

/// Rolls the reply model forward n rows without new threads.
inline ForecastState roll_replies(ForecastState s, const ReplyPredictor& reply, std::size_t n, const RollOptions& opt = {}) {
  for (std::size_t k = 0; k < n; ++k) append_row(s, reply, opt);
  return s;
}

// ---------------------------------------------------------------------------
// Breakout cascades
// ---------------------------------------------------------------------------

/// Mean cascade size, counting the thread post itself.
inline double average_cascade_size(const EventStream& stream) {
  if (stream.empty()) throw std::invalid_argument("average_cascade_size: empty stream");
  double total = 0.0;
  for (const auto& c : stream.cascades) total += 1.0 + static_cast<double>(c.reply_times.size());
  return total / static_cast<double>(stream.size());
}

/// Number of intervals from a cascade's arrival interval to its last event's interval, inclusive.
inline std::size_t cascade_lifetime(const ThreadCascade& c, double d) {
  if (c.reply_times.empty()) return 1;
  return static_cast<std::size_t>(interval_index(c.reply_times.back(), c.thread_time, d) + 1);
}

/// q-quantile (nearest rank) of cascade lifetimes, in intervals.
inline std::size_t lifetime_quantile(const EventStream& stream, double d, double q = 0.95) {
  if (stream.empty()) throw std::invalid_argument("lifetime_quantile: empty stream");
  if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("lifetime_quantile: q must lie in (0, 1]");
  std::vector<std::size_t> life;
  for (const auto& c : stream.cascades) life.push_back(cascade_lifetime(c, d));
  std::sort(life.begin(), life.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(life.size())));
  return life[std::max<std::size_t>(rank, 1) - 1];
}

struct BreakoutVerdict {
  std::string cascade_id;
  double prefix_total = 0.0;
  double predicted_total = 0.0;
  double threshold = 0.0;
  bool is_breakout = false;
  double start_duration = 0.0;  // seconds
};

/// Classifies cascade `col` of `grid` after observing its first
/// `start_intervals` intervals (rows a .. a + start_intervals - 1).
/// The observed prefix is extended by rolling the reply model forward
/// until `horizon_intervals` intervals after the arrival are covered; the
/// real-valued predictions of the cascade's column are added to the
/// prefix. The roll-out sees only the last `window.w` columns up to `col`
/// and rows before the end of the prefix.
inline BreakoutVerdict breakout_classify(const Grid& grid, std::size_t col, std::size_t start_intervals,
                                         const ReplyPredictor* reply, double avg_size, std::size_t horizon_intervals,
                                         std::string cascade_id = {}) {
  if (col >= grid.cols()) throw std::out_of_range("breakout_classify: column out of range");
  const std::int64_t a = grid.arrival_rows[col];
  if (a < 0 || a + static_cast<std::int64_t>(start_intervals) > static_cast<std::int64_t>(grid.rows()))
    throw std::invalid_argument("breakout_classify: prefix of " + std::to_string(start_intervals) +
                                " intervals extends past the grid");
  BreakoutVerdict v;
  v.cascade_id = std::move(cascade_id);
  v.threshold = 2.0 * avg_size;
  v.start_duration = static_cast<double>(start_intervals) * grid.spec.d;
  for (std::size_t k = 0; k < start_intervals; ++k)
    v.prefix_total += static_cast<double>(grid.counts(static_cast<std::size_t>(a) + k, col));
  v.predicted_total = v.prefix_total;

  const std::size_t remaining = horizon_intervals > start_intervals ? horizon_intervals - start_intervals : 0;
  if (reply && remaining > 0) {
    const std::size_t w = reply->window().w;
    const std::size_t col_begin = col + 1 >= w ? col + 1 - w : 0;
    const auto row_end = static_cast<std::size_t>(a) + start_intervals;
    ForecastState s = roll_replies(make_forecast_state(crop_grid(grid, row_end, col_begin, col + 1)), *reply, remaining);
    const std::size_t j = col - col_begin;
    for (std::size_t r = row_end; r < s.grid.rows(); ++r) v.predicted_total += s.values(r, j);
  }
  v.is_breakout = v.predicted_total > v.threshold;
  return v;
}

struct BreakoutDataset {
  Grid grid;                         // test grid with every event materialized
  std::vector<std::size_t> columns;  // cascades to classify
  std::vector<double> true_totals;   // full cascade sizes (thread + replies), one per column
  std::vector<std::string> ids;      // optional, one per column
  double avg_size = 0.0;             // L-bar
  std::size_t horizon_intervals = 0;
};

struct BreakoutCurvePoint {
  std::size_t start_intervals = 0;
  double start_duration = 0.0;
  double accuracy = 0.0;
  double precision = 0.0;  // among predicted breakouts, fraction truly breakout (1 if none predicted)
  double recall = 0.0;     // among true breakouts, fraction detected (1 if none exist)
  std::size_t n = 0;
};

/// Classification accuracy per start duration. Passing no reply model
/// gives the prefix-only classifier.
inline std::vector<BreakoutCurvePoint> breakout_precision_curve(const BreakoutDataset& data,
                                                                const ReplyPredictor* reply,
                                                                const std::vector<std::size_t>& start_intervals) {
  if (start_intervals.empty()) throw std::invalid_argument("breakout_precision_curve: no start durations");
  if (data.columns.size() != data.true_totals.size())
    throw std::invalid_argument("breakout_precision_curve: one true total per column required");
  if (data.columns.empty()) throw std::invalid_argument("breakout_precision_curve: empty dataset");
  std::vector<BreakoutCurvePoint> out;
  const double threshold = 2.0 * data.avg_size;
  for (std::size_t s : start_intervals) {
    std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
    for (std::size_t k = 0; k < data.columns.size(); ++k) {
      const std::string id = k < data.ids.size() ? data.ids[k] : std::string{};
      const auto v = breakout_classify(data.grid, data.columns[k], s, reply, data.avg_size, data.horizon_intervals, id);
      const bool truth = data.true_totals[k] > threshold;
      if (v.is_breakout == truth) ++correct;
      if (v.is_breakout && truth) ++tp;
      if (v.is_breakout && !truth) ++fp;
      if (!v.is_breakout && truth) ++fn;
    }
    BreakoutCurvePoint p;
    p.start_intervals = s;
    p.start_duration = static_cast<double>(s) * data.grid.spec.d;
    p.n = data.columns.size();
    p.accuracy = static_cast<double>(correct) / static_cast<double>(p.n);
    p.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.push_back(p);
  }
  return out;
}

}  // namespace socialgrid
