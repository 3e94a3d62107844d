#pragma once

#include <cstddef>
#include <vector>

#include "socialgrid/grid.hpp"
#include "socialgrid/tensor.hpp"

namespace socialgrid {

/// Window geometry and channels a predictor reads.
struct WindowSpec {
  std::size_t h = 8;
  std::size_t w = 8;
  ChannelSet channels = all_channels();

  friend bool operator==(const WindowSpec&, const WindowSpec&) = default;
};

/// Predicts O, the interval gap from the thread in the anchor column to
/// the next thread. `anchor` is the window's bottom-right cell in the grid
/// the window was cut from.
class GapPredictor {
 public:
  virtual ~GapPredictor() = default;
  virtual const WindowSpec& window() const = 0;
  virtual double predict_gap(const Tensor<double>& features, Cell anchor) const = 0;
};

/// Predicts the event count of the cell directly below the anchor.
class ReplyPredictor {
 public:
  virtual ~ReplyPredictor() = default;
  virtual const WindowSpec& window() const = 0;
  virtual double predict_next(const Tensor<double>& features, Cell anchor) const = 0;

  virtual std::vector<double> predict_next_batch(const std::vector<Tensor<double>>& features,
                                                 const std::vector<Cell>& anchors) const {
    std::vector<double> out;
    out.reserve(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) out.push_back(predict_next(features[i], anchors[i]));
    return out;
  }
};

}  // namespace socialgrid
