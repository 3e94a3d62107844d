#pragma once

// Naive reference predictors: the training-set mean and "repeat the last
// observation".

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "socialgrid/grid.hpp"
#include "socialgrid/predictor.hpp"

namespace socialgrid {

enum class BaselineKind { HistoricalMean, Persistence };

inline std::string to_string(BaselineKind k) { return k == BaselineKind::HistoricalMean ? "HISTORICAL_MEAN" : "PERSISTENCE"; }

inline BaselineKind parse_baseline_kind(const std::string& s) {
  if (s == "HISTORICAL_MEAN" || s == "mean") return BaselineKind::HistoricalMean;
  if (s == "PERSISTENCE" || s == "persistence") return BaselineKind::Persistence;
  throw std::invalid_argument("unknown baseline '" + s + "'");
}

/// Scalar series (e.g. past gaps): the mean of the history, or its last value, repeated `horizon` times.
inline std::vector<double> baseline_predict(BaselineKind kind, const std::vector<double>& history, std::size_t horizon) {
  if (history.empty()) throw std::invalid_argument("baseline_predict: empty history");
  double v = history.back();
  if (kind == BaselineKind::HistoricalMean) {
    v = 0.0;
    for (double x : history) v += x;
    v /= static_cast<double>(history.size());
  }
  return std::vector<double>(horizon, v);
}

/// Row series (e.g. past grid rows): every cell gets the mean over all
/// history cells, or the last row is echoed.
inline std::vector<std::vector<double>> baseline_predict_rows(BaselineKind kind,
                                                              const std::vector<std::vector<double>>& history,
                                                              std::size_t horizon) {
  if (history.empty()) throw std::invalid_argument("baseline_predict_rows: empty history");
  const std::size_t width = history.back().size();
  std::vector<double> row = history.back();
  if (kind == BaselineKind::HistoricalMean) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : history) {
      if (r.size() != width) throw std::invalid_argument("baseline_predict_rows: ragged history");
      for (double x : r) sum += x;
      n += r.size();
    }
    row.assign(width, n == 0 ? 0.0 : sum / static_cast<double>(n));
  }
  return std::vector<std::vector<double>>(horizon, row);
}

/// Gaps O between consecutive threads for columns [col_begin, col_end - 1).
inline std::vector<double> observed_gaps(const Grid& g, std::size_t col_begin, std::size_t col_end) {
  std::vector<double> out;
  for (std::size_t j = col_begin; j + 1 < std::min(col_end, g.cols()); ++j)
    out.push_back(static_cast<double>(zeros_gap(g, j)));
  return out;
}

/// Counts at rows arrival + first_lag .. arrival + last_lag of every column in [col_begin, col_end),
/// where those rows exist.
inline std::vector<double> observed_counts(const Grid& g, std::size_t col_begin, std::size_t col_end,
                                           std::size_t first_lag, std::size_t last_lag) {
  std::vector<double> out;
  for (std::size_t j = col_begin; j < std::min(col_end, g.cols()); ++j)
    for (std::size_t k = first_lag; k <= last_lag; ++k) {
      const std::int64_t r = g.arrival_rows[j] + static_cast<std::int64_t>(k);
      if (r < 0 || r >= static_cast<std::int64_t>(g.rows())) continue;
      out.push_back(static_cast<double>(g.counts(static_cast<std::size_t>(r), j)));
    }
  return out;
}

namespace detail {
inline const WindowSpec& anchor_only_window() {
  static const WindowSpec w{1, 1, ChannelSet{Channel::Counts}};
  return w;
}
}  // namespace detail

class ConstantGapPredictor : public GapPredictor {
 public:
  explicit ConstantGapPredictor(double value) : value_(value) {}
  const WindowSpec& window() const override { return detail::anchor_only_window(); }
  double predict_gap(const Tensor<double>&, Cell) const override { return value_; }

 private:
  double value_;
};

/// Repeats the previous gap of the anchor column in `grid` (0 for the first column).
class PersistenceGapPredictor : public GapPredictor {
 public:
  explicit PersistenceGapPredictor(const Grid& grid) : grid_(&grid) {}
  const WindowSpec& window() const override { return detail::anchor_only_window(); }
  double predict_gap(const Tensor<double>&, Cell anchor) const override {
    if (anchor.col < 1 || anchor.col >= static_cast<std::int64_t>(grid_->cols())) return 0.0;
    return static_cast<double>(zeros_gap(*grid_, static_cast<std::size_t>(anchor.col) - 1));
  }

 private:
  const Grid* grid_;
};

class ConstantReplyPredictor : public ReplyPredictor {
 public:
  explicit ConstantReplyPredictor(double value) : value_(value) {}
  const WindowSpec& window() const override { return detail::anchor_only_window(); }
  double predict_next(const Tensor<double>&, Cell) const override { return value_; }

 private:
  double value_;
};

/// Next cell = the anchor cell's count.
class PersistenceReplyPredictor : public ReplyPredictor {
 public:
  const WindowSpec& window() const override { return detail::anchor_only_window(); }
  double predict_next(const Tensor<double>& x, Cell) const override { return x(0, 0, 0); }
};

}  // namespace socialgrid
