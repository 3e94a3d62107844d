#pragma once

// End-to-end plumbing shared by the CLI and the benchmarks: grid building
// with a chronological column split, segment extraction, training, the
// baselines, and the interval-length sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "socialgrid/baselines.hpp"
#include "socialgrid/eval.hpp"
#include "socialgrid/events.hpp"
#include "socialgrid/forecast.hpp"
#include "socialgrid/grid.hpp"
#include "socialgrid/models.hpp"

namespace socialgrid {

struct PipelineConfig {
  double d = 300.0;
  double t0 = 0.0;
  bool t0_from_data = true;  // use the first thread time as the origin
  ModelConfig thread_model;
  ModelConfig reply_model;
  TrainConfig train;
  double train_fraction = 0.7;   // leading share of columns (chronological) used for training
  std::size_t reply_lags = 10;   // reply training anchors per column: the arrival cell and this many after it
  std::size_t eval_intervals = 10;
  std::uint64_t seed = 0;

  std::string canonical() const {
    std::ostringstream s;
    s << "d=" << format_number(d) << ";t0=" << (t0_from_data ? std::string("data") : format_number(t0))
      << ";window=" << thread_model.window.h << "x" << thread_model.window.w
      << ";channels=" << channel_set_name(thread_model.window.channels) << ";filters=" << thread_model.n_filters
      << ";k=" << thread_model.k << ";blocks=" << thread_model.n_blocks
      << ";shape=" << to_string(thread_model.filter_shape) << ";reply_filters=" << reply_model.n_filters
      << ";reply_k=" << reply_model.k << ";reply_blocks=" << reply_model.n_blocks
      << ";reply_shape=" << to_string(reply_model.filter_shape) << ";loss=" << to_string(reply_model.loss_mode)
      << ";lr=" << format_number(train.lr) << ";wd=" << format_number(train.weight_decay) << ";epochs=" << train.epochs
      << ";batch=" << train.batch_size << ";split=" << format_number(train_fraction) << ";lags=" << reply_lags
      << ";eval=" << eval_intervals << ";seed=" << seed;
    return s.str();
  }
  std::string digest() const { return digest_hex(canonical()); }
};

inline double grid_origin(const EventStream& stream, const PipelineConfig& cfg) {
  if (!cfg.t0_from_data) return cfg.t0;
  if (stream.empty()) throw std::invalid_argument("empty event stream");
  return stream.cascades.front().thread_time;
}

/// Grid covering every event of the stream.
inline Grid grid_for(const EventStream& stream, double d, double t0) {
  if (!(d > 0.0)) throw std::invalid_argument("interval length d must be positive");
  return build_grid(stream, d, t0, rows_to_cover(stream, d, t0));
}

/// First test column under a chronological split.
inline std::size_t split_column(const Grid& g, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw std::invalid_argument("train_fraction must lie in (0, 1)");
  if (g.cols() < 2) throw std::invalid_argument("need at least two cascades to split");
  const auto s = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(g.cols())));
  return std::clamp<std::size_t>(s, 1, g.cols() - 1);
}

/// One thread-gap segment per column in [col_begin, col_end) that has a
/// successor inside the same range and an arrival cell inside the grid.
inline std::vector<Segment> thread_segments(const Grid& g, const WindowSpec& w, std::size_t col_begin,
                                            std::size_t col_end) {
  std::vector<Segment> out;
  col_end = std::min(col_end, g.cols());
  for (std::size_t j = col_begin; j + 1 < col_end; ++j) {
    const Cell anchor{g.arrival_rows[j], static_cast<std::int64_t>(j)};
    if (anchor.row >= static_cast<std::int64_t>(g.rows())) continue;
    out.push_back(make_segment(window_features(g, w.channels, anchor, w.h, w.w), g, TargetKind::ThreadGap, anchor));
  }
  return out;
}

/// Reply segments whose targets are the arrival cell and the `lags` cells after it.
inline std::vector<Segment> reply_segments(const Grid& g, const WindowSpec& w, std::size_t col_begin,
                                           std::size_t col_end, std::size_t lags) {
  std::vector<Segment> out;
  for (const Cell& anchor : reply_anchors(g, col_begin, col_end, lags))
    out.push_back(make_segment(window_features(g, w.channels, anchor, w.h, w.w), g, TargetKind::NextRow, anchor));
  return out;
}

template <typename Model>
struct TrainedModel {
  Model model;
  TrainResult result;
};

template <typename Model>
TrainedModel<Model> fit(const ModelConfig& mc, const std::vector<Segment>& segments, const TrainConfig& tc) {
  TrainedModel<Model> t{Model(mc), {}};
  Rng init(mix_seed(tc.seed, 1));
  t.model.init_weights(init);
  t.result = train(t.model, segments, tc);
  return t;
}

inline TrainedModel<ThreadArrivalModel<float>> fit_thread(const Grid& g, std::size_t col_begin, std::size_t col_end,
                                                           const ModelConfig& mc, const TrainConfig& tc) {
  return fit<ThreadArrivalModel<float>>(mc, thread_segments(g, mc.window, col_begin, col_end), tc);
}

inline TrainedModel<ReplyCountModel<float>> fit_reply(const Grid& g, std::size_t col_begin, std::size_t col_end,
                                                      std::size_t lags, const ModelConfig& mc, const TrainConfig& tc) {
  return fit<ReplyCountModel<float>>(mc, reply_segments(g, mc.window, col_begin, col_end, lags), tc);
}

/// Historical-mean baselines fitted on the training columns: the mean gap,
/// and the mean count over the rows the reply evaluation targets.
inline ConstantGapPredictor mean_gap_baseline(const Grid& g, std::size_t col_end) {
  return ConstantGapPredictor(baseline_predict(BaselineKind::HistoricalMean, observed_gaps(g, 0, col_end), 1)[0]);
}

inline ConstantReplyPredictor mean_reply_baseline(const Grid& g, std::size_t col_end, std::size_t eval_intervals) {
  return ConstantReplyPredictor(
      baseline_predict(BaselineKind::HistoricalMean, observed_counts(g, 0, col_end, 1, eval_intervals), 1)[0]);
}

/// Per-model training configs; the seeds are derived so the two models never share a stream.
inline TrainConfig thread_train_config(const PipelineConfig& cfg) {
  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(cfg.seed, 11);
  return tc;
}

inline TrainConfig reply_train_config(const PipelineConfig& cfg) {
  TrainConfig tc = cfg.train;
  tc.seed = mix_seed(cfg.seed, 12);
  return tc;
}

/// The first `n` cascades of the stream.
inline EventStream leading_cascades(const EventStream& stream, std::size_t n) {
  EventStream out;
  out.cascades.assign(stream.cascades.begin(),
                      stream.cascades.begin() + static_cast<std::ptrdiff_t>(std::min(n, stream.size())));
  return out;
}

/// Breakout evaluation set: test columns (from `col_begin`) with at least
/// `rows_needed` rows from their arrival inside the grid. L-bar and the
/// default roll-out horizon come from the training cascades before
/// `col_begin`.
inline BreakoutDataset breakout_dataset(const EventStream& stream, const Grid& g, std::size_t col_begin,
                                        std::size_t rows_needed, std::size_t horizon_override = 0) {
  if (stream.size() != g.cols()) throw std::invalid_argument("breakout_dataset: stream and grid disagree");
  const EventStream train_part = leading_cascades(stream, col_begin);
  BreakoutDataset data;
  data.grid = g;
  data.avg_size = average_cascade_size(train_part);
  data.horizon_intervals = horizon_override > 0 ? horizon_override : lifetime_quantile(train_part, g.spec.d, 0.95);
  for (std::size_t j = col_begin; j < g.cols(); ++j) {
    if (g.arrival_rows[j] + static_cast<std::int64_t>(rows_needed) > static_cast<std::int64_t>(g.rows())) continue;
    data.columns.push_back(j);
    data.true_totals.push_back(1.0 + static_cast<double>(stream.cascades[j].reply_times.size()));
    data.ids.push_back(stream.cascades[j].thread_id);
  }
  if (data.columns.empty()) throw std::runtime_error("breakout_dataset: no test cascade has enough observed rows");
  return data;
}

struct BenchmarkResult {
  EvalReport thread_model, thread_mean, thread_persistence;
  EvalReport reply_model, reply_mean, reply_persistence;
  TrainResult thread_train, reply_train;
  std::size_t split = 0;
};

/// grid -> chronological split -> train both models -> evaluate against the baselines.
inline BenchmarkResult run_benchmark(const Grid& g, const PipelineConfig& cfg) {
  BenchmarkResult r;
  r.split = split_column(g, cfg.train_fraction);
  auto thread = fit_thread(g, 0, r.split, cfg.thread_model, thread_train_config(cfg));
  auto reply = fit_reply(g, 0, r.split, cfg.reply_lags, cfg.reply_model, reply_train_config(cfg));
  r.thread_train = thread.result;
  r.reply_train = reply.result;

  const auto t_cols = thread_eval_columns(g, r.split, g.cols());
  const auto r_cols = reply_eval_columns(g, r.split, g.cols(), cfg.eval_intervals);
  const std::string digest = cfg.digest();
  auto tag = [&](EvalReport e) {
    e.config_digest = digest;
    return e;
  };
  r.thread_model = tag(evaluate_thread_arrival(thread.model, g, t_cols));
  r.thread_mean = tag(evaluate_thread_arrival(mean_gap_baseline(g, r.split), g, t_cols));
  r.thread_persistence = tag(evaluate_thread_arrival(PersistenceGapPredictor(g), g, t_cols));
  r.reply_model = tag(evaluate_reply_counts(reply.model, g, r_cols, cfg.eval_intervals));
  r.reply_mean = tag(evaluate_reply_counts(mean_reply_baseline(g, r.split, cfg.eval_intervals), g, r_cols,
                                           cfg.eval_intervals));
  r.reply_persistence = tag(evaluate_reply_counts(PersistenceReplyPredictor(), g, r_cols, cfg.eval_intervals));
  return r;
}

// ---------------------------------------------------------------------------
// Interval-length sweep
// ---------------------------------------------------------------------------

inline std::vector<double> default_sweep_candidates() { return {60, 150, 300, 600, 1200}; }
inline std::vector<double> nfl_sweep_candidates() { return {30, 60, 180, 360, 720}; }

struct SweepRow {
  double d = 0.0;
  std::size_t rows = 0;
  double thread_mae = 0.0;     // hours
  double reply_mae = 0.0;      // counts per interval
  double thread_baseline = 0.0;
  double reply_baseline = 0.0;
  double score = 0.0;          // selection criterion, lower is better
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::size_t best = 0;
  double best_d() const { return rows.at(best).d; }
};

/// Relative error of the reply model against the historical mean at the
/// same d. Raw per-interval counts shrink with d, so they cannot be compared
/// across interval lengths; the ratio can.
inline double sweep_score(const SweepRow& r) { return r.reply_baseline > 0.0 ? r.reply_mae / r.reply_baseline : 1.0; }

/// For every d: rebuild the grid, retrain both models, evaluate on the
/// held-out columns.
inline SweepResult sweep_interval_length(const EventStream& stream, const std::vector<double>& d_values,
                                         const PipelineConfig& base) {
  if (d_values.empty()) throw std::invalid_argument("sweep_interval_length: no d values");
  SweepResult out;
  for (double d : d_values) {
    PipelineConfig cfg = base;
    cfg.d = d;
    const Grid g = grid_for(stream, d, grid_origin(stream, cfg));
    if (g.rows() < 2)
      throw std::invalid_argument("sweep_interval_length: d = " + format_number(d) + " leaves fewer than 2 rows");
    const auto b = run_benchmark(g, cfg);
    SweepRow row;
    row.d = d;
    row.rows = g.rows();
    row.thread_mae = b.thread_model.mae;
    row.reply_mae = b.reply_model.mae;
    row.thread_baseline = b.thread_mean.mae;
    row.reply_baseline = b.reply_mean.mae;
    row.score = sweep_score(row);
    out.rows.push_back(row);
  }
  for (std::size_t i = 1; i < out.rows.size(); ++i)
    if (out.rows[i].score < out.rows[out.best].score) out.best = i;
  return out;
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& r) {
  out << "d,rows,thread_mae_hours,reply_mae,thread_baseline_hours,reply_baseline,score,selected\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    const auto& x = r.rows[i];
    out << format_number(x.d) << ',' << x.rows << ',' << format_number(x.thread_mae) << ','
        << format_number(x.reply_mae) << ',' << format_number(x.thread_baseline) << ','
        << format_number(x.reply_baseline) << ',' << format_number(x.score) << ',' << (i == r.best ? 1 : 0) << '\n';
  }
}

}  // namespace socialgrid
