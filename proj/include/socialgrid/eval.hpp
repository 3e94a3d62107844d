#pragma once

// Error metrics and the evaluation protocols: one-step thread arrival,
// one-step reply counts, and the adaptive (multi-step) roll-out.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "socialgrid/checkpoint.hpp"
#include "socialgrid/forecast.hpp"
#include "socialgrid/grid.hpp"
#include "socialgrid/predictor.hpp"
#include "socialgrid/random.hpp"

namespace socialgrid {

namespace detail {
inline void check_pair(std::span<const double> pred, std::span<const double> truth, const char* who) {
  if (pred.size() != truth.size())
    throw std::invalid_argument(std::string(who) + ": length mismatch (" + std::to_string(pred.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  if (pred.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
}

inline double mean_of(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty sample");
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population standard deviation.
inline double stddev_of(std::span<const double> v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size()));
}
}  // namespace detail

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair(pred, truth, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  detail::check_pair(pred, truth, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

enum class EvalTask { ThreadArrival, ReplyCount, AdaptiveThread, AdaptiveReply, Breakout };

inline std::string to_string(EvalTask t) {
  switch (t) {
    case EvalTask::ThreadArrival: return "THREAD_ARRIVAL";
    case EvalTask::ReplyCount: return "REPLY_COUNT";
    case EvalTask::AdaptiveThread: return "ADAPTIVE_THREAD";
    case EvalTask::AdaptiveReply: return "ADAPTIVE_REPLY";
    case EvalTask::Breakout: return "BREAKOUT";
  }
  return "?";
}

struct EvalReport {
  EvalTask task = EvalTask::ThreadArrival;
  double mae = 0.0;
  double rmse = 0.0;
  std::string unit;  // "hours" or "count"
  std::size_t n = 0;
  double stddev = 0.0;
  std::string config_digest;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

inline std::string digest_hex(const std::string& text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text, text.size())));
  return buf;
}

/// Shortest round-trip decimal form, so reports are byte-stable.
inline std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct LabeledReport {
  std::string predictor;  // "model", "HISTORICAL_MEAN", ...
  EvalReport report;
};

inline void write_report_csv(std::ostream& out, const std::vector<LabeledReport>& reports) {
  out << "predictor,task,mae,rmse,unit,n,stddev,config_digest\n";
  for (const auto& [who, r] : reports)
    out << who << ',' << to_string(r.task) << ',' << format_number(r.mae) << ',' << format_number(r.rmse) << ',' << r.unit << ','
        << r.n << ',' << format_number(r.stddev) << ',' << r.config_digest << '\n';
}

/// Report from absolute errors; `scale` converts them to the reported unit.
/// The mean is taken before scaling so integer-valued errors average exactly.
inline EvalReport report_from_errors(EvalTask task, std::span<const double> abs_err, double scale, std::string unit) {
  if (abs_err.empty()) throw std::invalid_argument("evaluation produced no samples");
  EvalReport r;
  r.task = task;
  r.unit = std::move(unit);
  r.n = abs_err.size();
  double s = 0.0, ss = 0.0;
  for (double e : abs_err) {
    s += e;
    ss += e * e;
  }
  const double n = static_cast<double>(abs_err.size());
  r.mae = s / n * scale;
  r.rmse = std::sqrt(ss / n) * scale;
  r.stddev = detail::stddev_of(abs_err) * scale;
  return r;
}

struct PredictionRecord {
  std::size_t column = 0;
  std::int64_t row = 0;  // target row (reply) or predicted arrival row base (thread)
  double predicted = 0.0;
  double truth = 0.0;
};

inline constexpr double kSecondsPerHour = 3600.0;

/// One-step thread arrival. For each column j the model sees the window at
/// thread j's arrival cell; the predicted arrival of thread j+1 is the
/// measurement-mode arrival time from the start of j's interval, compared
/// to the start of j+1's interval. The error is |O_hat - O| d / 3600 hours.
inline EvalReport evaluate_thread_arrival(const GapPredictor& model, const Grid& grid,
                                          const std::vector<std::size_t>& indices,
                                          std::vector<PredictionRecord>* records = nullptr) {
  const WindowSpec& w = model.window();
  detail::check_window(w, "evaluate_thread_arrival");
  const double d = grid.spec.d;
  std::vector<double> err;
  for (std::size_t j : indices) {
    if (j + 1 >= grid.cols())
      throw std::out_of_range("evaluate_thread_arrival: column " + std::to_string(j) + " has no successor");
    const Cell anchor{grid.arrival_rows[j], static_cast<std::int64_t>(j)};
    if (anchor.row >= static_cast<std::int64_t>(grid.rows()))
      throw std::out_of_range("evaluate_thread_arrival: thread " + std::to_string(j) + " lies past the grid");
    const double o_hat = model.predict_gap(window_features(grid, w.channels, anchor, w.h, w.w), anchor);
    const double o = static_cast<double>(zeros_gap(grid, j));
    err.push_back(std::abs(o_hat - o));
    if (records) {
      const double start = grid.spec.t0 + static_cast<double>(anchor.row) * d;
      records->push_back({j, anchor.row, arrival_time(start, o_hat, d, ArrivalMode::Measurement),
                          grid.spec.t0 + static_cast<double>(grid.arrival_rows[j + 1]) * d});
    }
  }
  return report_from_errors(EvalTask::ThreadArrival, err, d / kSecondsPerHour, "hours");
}

/// One-step reply counts: for each column, rows a+1 .. a+n_intervals are
/// predicted from the window ending one row above, and compared to the
/// observed counts.
inline EvalReport evaluate_reply_counts(const ReplyPredictor& model, const Grid& grid,
                                        const std::vector<std::size_t>& columns, std::size_t n_intervals,
                                        std::vector<PredictionRecord>* records = nullptr) {
  const WindowSpec& w = model.window();
  detail::check_window(w, "evaluate_reply_counts");
  if (n_intervals == 0) throw std::invalid_argument("evaluate_reply_counts: n_intervals must be positive");
  std::vector<Tensor<double>> feats;
  std::vector<Cell> anchors;
  std::vector<double> truth;
  for (std::size_t j : columns) {
    if (j >= grid.cols()) throw std::out_of_range("evaluate_reply_counts: column out of range");
    const std::int64_t a = grid.arrival_rows[j];
    if (a + static_cast<std::int64_t>(n_intervals) >= static_cast<std::int64_t>(grid.rows()))
      throw std::invalid_argument("evaluate_reply_counts: horizon of " + std::to_string(n_intervals) +
                                  " intervals for column " + std::to_string(j) + " exceeds the grid");
    for (std::size_t k = 0; k < n_intervals; ++k) {
      const Cell anchor{a + static_cast<std::int64_t>(k), static_cast<std::int64_t>(j)};
      feats.push_back(window_features(grid, w.channels, anchor, w.h, w.w));
      anchors.push_back(anchor);
      truth.push_back(static_cast<double>(grid.counts(static_cast<std::size_t>(anchor.row + 1), j)));
    }
  }
  if (anchors.empty()) throw std::invalid_argument("evaluate_reply_counts: no columns");
  const auto pred = model.predict_next_batch(feats, anchors);
  std::vector<double> err(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    err[i] = std::abs(pred[i] - truth[i]);
    if (records) records->push_back({static_cast<std::size_t>(anchors[i].col), anchors[i].row + 1, pred[i], truth[i]});
  }
  return report_from_errors(EvalTask::ReplyCount, err, 1.0, "count");
}

/// Columns whose next `n_intervals` rows after arrival all lie in the grid.
inline std::vector<std::size_t> reply_eval_columns(const Grid& grid, std::size_t col_begin, std::size_t col_end,
                                                   std::size_t n_intervals) {
  std::vector<std::size_t> out;
  for (std::size_t j = col_begin; j < std::min(col_end, grid.cols()); ++j)
    if (grid.arrival_rows[j] + static_cast<std::int64_t>(n_intervals) < static_cast<std::int64_t>(grid.rows()))
      out.push_back(j);
  return out;
}

/// Columns with a successor whose arrival cell lies in the grid.
inline std::vector<std::size_t> thread_eval_columns(const Grid& grid, std::size_t col_begin, std::size_t col_end) {
  std::vector<std::size_t> out;
  for (std::size_t j = col_begin; j + 1 < std::min(col_end, grid.cols()); ++j)
    if (grid.arrival_rows[j] < static_cast<std::int64_t>(grid.rows())) out.push_back(j);
  return out;
}

// ---------------------------------------------------------------------------
// Adaptive protocol
// ---------------------------------------------------------------------------

struct AdaptiveProtocol {
  std::size_t n_starts = 20;
  std::size_t n_threads = 20;
  std::vector<std::size_t> reply_checkpoints{2, 4, 6, 8, 10};  // in intervals after each thread's arrival
  std::size_t col_begin = 0;  // start points are drawn from columns >= col_begin
  std::size_t live_columns = 16;
  std::uint64_t seed = 0;
};

struct StepError {
  std::size_t step = 0;  // prediction step (threads) or checkpoint in intervals (replies)
  double mae = 0.0;      // mean over start points
  double stddev = 0.0;   // across start points
  std::size_t n = 0;
};

struct AdaptiveReport {
  EvalReport thread;  // all steps pooled, hours
  EvalReport reply;   // all checkpoints pooled, counts
  std::vector<StepError> thread_steps;
  std::vector<StepError> reply_checkpoints;
  std::vector<std::size_t> start_columns;
};

/// Start columns j whose following n_threads threads exist and whose
/// checkpoint rows are inside the grid.
inline std::vector<std::size_t> adaptive_start_candidates(const Grid& grid, const AdaptiveProtocol& p) {
  const std::size_t max_cp =
      p.reply_checkpoints.empty() ? 0 : *std::max_element(p.reply_checkpoints.begin(), p.reply_checkpoints.end());
  std::vector<std::size_t> out;
  for (std::size_t j = p.col_begin; j + p.n_threads < grid.cols(); ++j) {
    if (grid.arrival_rows[j] < 0) continue;
    if (grid.arrival_rows[j + p.n_threads] + static_cast<std::int64_t>(max_cp) >= static_cast<std::int64_t>(grid.rows()))
      break;  // arrivals are sorted, later starts only get worse
    out.push_back(j);
  }
  return out;
}

/// From each sampled start column j, the observed state is the grid up to
/// row a_j and column j. The models then forecast n_threads further threads
/// adaptively. Step k's thread error is |a_hat - a| d / 3600 hours for
/// thread j+k; the reply error at checkpoint c compares the simulated value
/// at row a_hat + c with the observed count at row a + c, averaged over the
/// forecast threads.
inline AdaptiveReport evaluate_adaptive(const GapPredictor& thread, const ReplyPredictor& reply, const Grid& grid,
                                        const AdaptiveProtocol& p) {
  if (p.n_threads == 0) throw std::invalid_argument("evaluate_adaptive: n_threads must be positive");
  if (p.n_starts == 0) throw std::invalid_argument("evaluate_adaptive: n_starts must be positive");
  auto candidates = adaptive_start_candidates(grid, p);
  if (candidates.empty())
    throw std::runtime_error("evaluate_adaptive: insufficient test data for " + std::to_string(p.n_threads) +
                             " threads and the requested reply checkpoints");
  Rng rng(p.seed);
  rng.shuffle(candidates);
  if (candidates.size() > p.n_starts) candidates.resize(p.n_starts);
  std::sort(candidates.begin(), candidates.end());

  const std::size_t max_cp =
      p.reply_checkpoints.empty() ? 0 : *std::max_element(p.reply_checkpoints.begin(), p.reply_checkpoints.end());
  const std::size_t n_starts = candidates.size();
  // per start: thread error (intervals) per step, reply error per checkpoint
  std::vector<std::vector<double>> thread_err(p.n_threads, std::vector<double>(n_starts));
  std::vector<std::vector<double>> reply_err(p.reply_checkpoints.size(), std::vector<double>(n_starts));
  std::vector<double> pooled_thread, pooled_reply;

  for (std::size_t s = 0; s < n_starts; ++s) {
    const std::size_t j = candidates[s];
    const auto a_j = static_cast<std::size_t>(grid.arrival_rows[j]);
    ForecastState state = make_forecast_state(crop_grid(grid, a_j + 1, 0, j + 1));
    state = adaptive_forecast(std::move(state), thread, reply, p.n_threads, max_cp, RollOptions{p.live_columns});
    for (std::size_t k = 1; k <= p.n_threads; ++k) {
      const std::int64_t a_hat = state.grid.arrival_rows[j + k];
      const std::int64_t a_true = grid.arrival_rows[j + k];
      const double e = static_cast<double>(std::llabs(a_hat - a_true));
      thread_err[k - 1][s] = e;
      pooled_thread.push_back(e);
    }
    for (std::size_t c = 0; c < p.reply_checkpoints.size(); ++c) {
      const auto cp = static_cast<std::int64_t>(p.reply_checkpoints[c]);
      double sum = 0.0;
      for (std::size_t k = 1; k <= p.n_threads; ++k) {
        const std::int64_t r_hat = state.grid.arrival_rows[j + k] + cp;
        const std::int64_t r_true = grid.arrival_rows[j + k] + cp;
        const double pred = state.values(static_cast<std::size_t>(r_hat), j + k);
        const double truth = static_cast<double>(grid.counts(static_cast<std::size_t>(r_true), j + k));
        const double e = std::abs(pred - truth);
        sum += e;
        pooled_reply.push_back(e);
      }
      reply_err[c][s] = sum / static_cast<double>(p.n_threads);
    }
  }

  const double d = grid.spec.d;
  auto hours = [d](double intervals) { return intervals * d / kSecondsPerHour; };
  AdaptiveReport out;
  out.start_columns = candidates;
  for (std::size_t k = 0; k < p.n_threads; ++k)
    out.thread_steps.push_back(
        {k + 1, hours(detail::mean_of(thread_err[k])), hours(detail::stddev_of(thread_err[k])), n_starts});
  for (std::size_t c = 0; c < p.reply_checkpoints.size(); ++c)
    out.reply_checkpoints.push_back(
        {p.reply_checkpoints[c], detail::mean_of(reply_err[c]), detail::stddev_of(reply_err[c]), n_starts});
  out.thread = report_from_errors(EvalTask::AdaptiveThread, pooled_thread, d / kSecondsPerHour, "hours");
  if (!pooled_reply.empty()) out.reply = report_from_errors(EvalTask::AdaptiveReply, pooled_reply, 1.0, "count");
  out.reply.task = EvalTask::AdaptiveReply;
  return out;
}

inline void write_adaptive_csv(std::ostream& out, const AdaptiveReport& r) {
  out << "series,step,mae,stddev,n\n";
  for (const auto& s : r.thread_steps)
    out << "thread_hours," << s.step << ',' << format_number(s.mae) << ',' << format_number(s.stddev) << ',' << s.n << '\n';
  for (const auto& s : r.reply_checkpoints)
    out << "reply_count," << s.step << ',' << format_number(s.mae) << ',' << format_number(s.stddev) << ',' << s.n << '\n';
}

}  // namespace socialgrid
