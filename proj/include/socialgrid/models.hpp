#pragma once

// The thread-arrival model (gap O to the next thread, read off the anchor
// cell) and the reply-count model (one-step-ahead counts for every window
// cell), their training loop and the hyper-parameter grid search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "socialgrid/grid.hpp"
#include "socialgrid/ops.hpp"
#include "socialgrid/predictor.hpp"
#include "socialgrid/random.hpp"
#include "socialgrid/tcn.hpp"
#include "socialgrid/tensor.hpp"

namespace socialgrid {

enum class ModelKind { Thread, Reply };
enum class LossMode { CornerOnly, FullMatrix };
enum class FilterShape { Square, Column };  // K x K, or K x 1 (rows only)

inline std::string to_string(ModelKind k) { return k == ModelKind::Thread ? "thread" : "reply"; }
inline std::string to_string(LossMode m) { return m == LossMode::CornerOnly ? "corner" : "full"; }
inline std::string to_string(FilterShape f) { return f == FilterShape::Square ? "KxK" : "Kx1"; }

inline LossMode parse_loss_mode(const std::string& s) {
  if (s == "corner") return LossMode::CornerOnly;
  if (s == "full") return LossMode::FullMatrix;
  throw std::invalid_argument("unknown loss mode '" + s + "' (expected corner or full)");
}

inline FilterShape parse_filter_shape(const std::string& s) {
  if (s == "KxK") return FilterShape::Square;
  if (s == "Kx1") return FilterShape::Column;
  throw std::invalid_argument("unknown filter shape '" + s + "' (expected KxK or Kx1)");
}

struct ModelConfig {
  WindowSpec window;
  std::size_t n_filters = 16;
  std::size_t k = 3;
  std::size_t n_blocks = 3;
  FilterShape filter_shape = FilterShape::Square;
  LossMode loss_mode = LossMode::CornerOnly;  // reply model only

  std::size_t k_w() const noexcept { return filter_shape == FilterShape::Square ? k : 1; }
  std::vector<BlockConfig> blocks() const {
    return default_block_configs(window.channels.size(), n_filters, k, k_w(), n_blocks);
  }
  std::size_t feature_channels() const noexcept { return n_blocks == 0 ? window.channels.size() : n_filters; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-2;  // reply-model convolution filters only
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Nearest-integer rounding with ties to even.
inline double round_half_even(double x) {
  const double r = std::round(x);
  if (std::abs(x - std::trunc(x)) == 0.5) return 2.0 * std::round(x / 2.0);
  return r;
}

enum class ArrivalMode { Simulation, Measurement };

/// T_{j+1} = T_j + O d. Simulation rounds O to a whole number of
/// intervals; Measurement keeps the real-valued estimate.
inline double arrival_time(double t_prev, double o_hat, double d, ArrivalMode mode) {
  if (!(d > 0.0)) throw std::invalid_argument("arrival_time: d must be positive");
  if (!(o_hat >= 0.0)) throw std::invalid_argument("arrival_time: negative gap estimate");
  const double gap = mode == ArrivalMode::Simulation ? round_half_even(o_hat) : o_hat;
  return t_prev + gap * d;
}

namespace detail {

template <typename T>
Tensor<T> stack_features(std::span<const Segment* const> batch) {
  const Shape& s = batch.front()->features.shape();
  Tensor<T> x({batch.size(), s[0], s[1], s[2]});
  const std::size_t per = s[0] * s[1] * s[2];
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n]->features.shape() != s) throw std::invalid_argument("batch: segments differ in shape");
    for (std::size_t i = 0; i < per; ++i) x[n * per + i] = static_cast<T>(batch[n]->features[i]);
  }
  return x;
}

template <typename T>
Tensor<T> single_batch(const Tensor<double>& features, const WindowSpec& w) {
  if (features.shape() != Shape{w.channels.size(), w.h, w.w})
    throw std::invalid_argument("model: features " + shape_string(features.shape()) + " do not match window " +
                                shape_string({w.channels.size(), w.h, w.w}));
  Tensor<T> x({1, w.channels.size(), w.h, w.w});
  for (std::size_t i = 0; i < features.size(); ++i) x[i] = static_cast<T>(features[i]);
  return x;
}

template <typename T>
void he_init(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.storage()) v = static_cast<T>(sd * rng.normal());
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace detail

/// How a batch is pushed through the model.
enum class Pass {
  Train,        // batch statistics, running-stat update, backward
  TrainFrozen,  // batch statistics, no update, no backward
  Eval,         // running statistics, no backward
};

// ---------------------------------------------------------------------------
// Thread-arrival model
// ---------------------------------------------------------------------------

template <typename T>
class ThreadArrivalModel : public GapPredictor {
 public:
  static constexpr ModelKind kind = ModelKind::Thread;

  struct Cache {
    typename TCNStack<T>::Cache stack;
    Tensor<T> anchor_features;  // N x F
    Tensor<T> hidden_pre;       // N x F
    Tensor<T> hidden;           // N x F
    Tensor<T> logits;           // N x 1
    Shape stack_out;
  };

  /// All weights zero, so the untrained output is softplus(0) = ln 2.
  explicit ThreadArrivalModel(ModelConfig cfg) : cfg_(std::move(cfg)), stack_(cfg_.blocks()) {
    validate_channels(cfg_.window.channels);
    const std::size_t f = cfg_.feature_channels();
    w1_ = Parameter<T>(Tensor<T>({f, f}));
    b1_ = Parameter<T>(Tensor<T>({f}));
    slope_ = Parameter<T>(Tensor<T>({f}, static_cast<T>(kInitialPreluSlope)));
    w2_ = Parameter<T>(Tensor<T>({1, f}));
    b2_ = Parameter<T>(Tensor<T>({1}));
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const WindowSpec& window() const override { return cfg_.window; }
  TCNStack<T>& stack() noexcept { return stack_; }

  void init_weights(Rng& rng) {
    stack_.init_weights(rng);
    const std::size_t f = cfg_.feature_channels();
    detail::he_init(w1_.value, f, rng);
    detail::he_init(w2_.value, f, rng);
  }

  /// N x C x h x w features -> N gap estimates (non-negative).
  Tensor<T> forward(const Tensor<T>& x, Pass pass, Cache* cache = nullptr) {
    Cache local;
    Cache& c = cache ? *cache : local;
    Tensor<T> u = run_stack(x, pass, cache ? &c.stack : nullptr);
    return head(u, c);
  }

  Tensor<T> forward(const Tensor<T>& x, Pass pass, Cache* cache = nullptr) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    Tensor<T> u = pass == Pass::Eval ? stack_.infer(x) : stack_.forward_frozen(x, Mode::Train, cache ? &c.stack : nullptr);
    return head(u, c);
  }

  void backward(const Cache& c, const Tensor<T>& d_out) {
    const std::size_t n = c.logits.size();
    Tensor<T> d_logit({n, 1});
    for (std::size_t i = 0; i < n; ++i) d_logit[i] = d_out[i] * softplus_grad(c.logits[i]);
    auto g2 = dense_backward(c.hidden, w2_.value, d_logit);
    detail::accumulate(w2_.grad, g2.weight);
    detail::accumulate(b2_.grad, g2.bias);
    auto ga = prelu_backward(c.hidden_pre, slope_.value, g2.input);
    detail::accumulate(slope_.grad, ga.slope);
    auto g1 = dense_backward(c.anchor_features, w1_.value, ga.input);
    detail::accumulate(w1_.grad, g1.weight);
    detail::accumulate(b1_.grad, g1.bias);
    Tensor<T> d_u(c.stack_out);
    const std::size_t f = c.stack_out[1], h = c.stack_out[2], w = c.stack_out[3];
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < f; ++ch) d_u(b, ch, h - 1, w - 1) = g1.input(b, ch);
    if (!stack_.empty()) stack_.backward(c.stack, d_u);
  }

  /// Mean squared error against the O targets of the batch.
  double batch_loss(std::span<const Segment* const> batch, Pass pass) {
    const Tensor<T> x = detail::stack_features<T>(batch);
    Tensor<T> target({batch.size()});
    for (std::size_t i = 0; i < batch.size(); ++i) target[i] = static_cast<T>(batch[i]->gap);
    Cache cache;
    const Tensor<T> pred = forward(x, pass, &cache);
    auto loss = mse_loss(pred, target);
    if (pass == Pass::Train) backward(cache, loss.grad);
    return loss.loss;
  }

  static bool usable(const Segment& s) { return s.kind == TargetKind::ThreadGap; }

  double predict_gap(const Tensor<double>& features, Cell) const override {
    return static_cast<double>(forward(detail::single_batch<T>(features, cfg_.window), Pass::Eval)[0]);
  }

  std::vector<NamedParameter<T>> parameters() {
    auto out = stack_.parameters("stack.");
    out.push_back({"head.dense1.weight", &w1_, false});
    out.push_back({"head.dense1.bias", &b1_, false});
    out.push_back({"head.prelu.slope", &slope_, false});
    out.push_back({"head.dense2.weight", &w2_, false});
    out.push_back({"head.dense2.bias", &b2_, false});
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return stack_.buffers("stack."); }

  /// Weight decay does not apply to the thread model.
  double decay_for(const NamedParameter<T>&, double) const { return 0.0; }

 private:
  Tensor<T> run_stack(const Tensor<T>& x, Pass pass, typename TCNStack<T>::Cache* cache) {
    switch (pass) {
      case Pass::Train: return stack_.forward(x, Mode::Train, cache);
      case Pass::TrainFrozen: return stack_.forward_frozen(x, Mode::Train, cache);
      case Pass::Eval: return stack_.forward_frozen(x, Mode::Eval, cache);
    }
    return {};
  }

  Tensor<T> head(const Tensor<T>& u, Cache& c) const {
    const std::size_t n = u.dim(0), f = u.dim(1), h = u.dim(2), w = u.dim(3);
    c.stack_out = u.shape();
    c.anchor_features = Tensor<T>({n, f});
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < f; ++ch) c.anchor_features(b, ch) = u(b, ch, h - 1, w - 1);
    c.hidden_pre = dense(c.anchor_features, w1_.value, b1_.value);
    c.hidden = prelu(c.hidden_pre, slope_.value);
    c.logits = dense(c.hidden, w2_.value, b2_.value);
    Tensor<T> out({n});
    for (std::size_t b = 0; b < n; ++b) out[b] = softplus(c.logits[b]);
    return out;
  }

  ModelConfig cfg_;
  TCNStack<T> stack_;
  Parameter<T> w1_, b1_, slope_, w2_, b2_;
};

// ---------------------------------------------------------------------------
// Reply-count model
// ---------------------------------------------------------------------------

template <typename T>
class ReplyCountModel : public ReplyPredictor {
 public:
  static constexpr ModelKind kind = ModelKind::Reply;

  struct Cache {
    typename TCNStack<T>::Cache stack;
    Tensor<T> stack_out;  // N x F x h x w
    Tensor<T> logits;     // N x 1 x h x w
  };

  /// All weights zero, so the untrained output is ln 2 everywhere.
  explicit ReplyCountModel(ModelConfig cfg) : cfg_(std::move(cfg)), stack_(cfg_.blocks()) {
    validate_channels(cfg_.window.channels);
    head_w_ = Parameter<T>(Tensor<T>({1, cfg_.feature_channels(), 1, 1}));
    head_b_ = Parameter<T>(Tensor<T>({1}));
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  const WindowSpec& window() const override { return cfg_.window; }
  TCNStack<T>& stack() noexcept { return stack_; }

  void init_weights(Rng& rng) {
    stack_.init_weights(rng);
    detail::he_init(head_w_.value, cfg_.feature_channels(), rng);
  }

  /// N x C x h x w features -> N x h x w predictions, entry (i, j) standing
  /// for the count one row below window cell (i, j).
  Tensor<T> forward(const Tensor<T>& x, Pass pass, Cache* cache = nullptr) {
    Cache local;
    Cache& c = cache ? *cache : local;
    switch (pass) {
      case Pass::Train: c.stack_out = stack_.forward(x, Mode::Train, cache ? &c.stack : nullptr); break;
      case Pass::TrainFrozen: c.stack_out = stack_.forward_frozen(x, Mode::Train, cache ? &c.stack : nullptr); break;
      case Pass::Eval: c.stack_out = stack_.forward_frozen(x, Mode::Eval, cache ? &c.stack : nullptr); break;
    }
    return head(c);
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    Cache c;
    c.stack_out = stack_.infer(x);
    return head(c);
  }

  void backward(const Cache& c, const Tensor<T>& d_out) {
    Tensor<T> d_logit(c.logits.shape());
    for (std::size_t i = 0; i < d_logit.size(); ++i) d_logit[i] = d_out[i] * softplus_grad(c.logits[i]);
    auto g = conv2d_backward(c.stack_out, head_w_.value, 1, d_logit);
    detail::accumulate(head_w_.grad, g.filters);
    detail::accumulate(head_b_.grad, g.bias);
    if (!stack_.empty()) stack_.backward(c.stack, g.input);
  }

  /// Targets and weights for the configured loss support. FullMatrix uses
  /// every window cell whose next-row cell is observed and unmasked;
  /// CornerOnly only the bottom-right cell.
  std::pair<Tensor<T>, std::vector<std::uint8_t>> targets(std::span<const Segment* const> batch) const {
    const std::size_t h = cfg_.window.h, w = cfg_.window.w;
    Tensor<T> target({batch.size(), h, w});
    std::vector<std::uint8_t> weight(batch.size() * h * w, 0);
    for (std::size_t n = 0; n < batch.size(); ++n) {
      const Segment& s = *batch[n];
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          const bool last = i + 1 == h;
          if (cfg_.loss_mode == LossMode::CornerOnly && !(last && j + 1 == w)) continue;
          const std::size_t k = (n * h + i) * w + j;
          if (last) {
            target[k] = static_cast<T>(s.next_row[j]);
            weight[k] = s.next_row_valid[j];
          } else {
            target[k] = static_cast<T>(s.features(0, i + 1, j));
            weight[k] = s.window_valid[(i + 1) * w + j];
          }
        }
    }
    return {std::move(target), std::move(weight)};
  }

  double batch_loss(std::span<const Segment* const> batch, Pass pass) {
    const Tensor<T> x = detail::stack_features<T>(batch);
    auto [target, weight] = targets(batch);
    Cache cache;
    const Tensor<T> pred = forward(x, pass, &cache);
    auto loss = mse_loss(pred, target, &weight);
    if (pass == Pass::Train) backward(cache, loss.grad);
    return loss.loss;
  }

  bool usable(const Segment& s) const {
    if (s.kind != TargetKind::NextRow || s.next_row.size() != cfg_.window.w) return false;
    if (cfg_.loss_mode == LossMode::CornerOnly) return s.next_row_valid.back() != 0;
    for (auto v : s.next_row_valid)
      if (v) return true;
    for (std::size_t k = cfg_.window.w; k < s.window_valid.size(); ++k)
      if (s.window_valid[k]) return true;
    return false;
  }

  /// The full predicted matrix for one window.
  Tensor<double> reply_forward(const Tensor<double>& features) const {
    const Tensor<T> y = infer(detail::single_batch<T>(features, cfg_.window));
    return y.template cast<double>().reshaped({cfg_.window.h, cfg_.window.w});
  }

  double predict_next(const Tensor<double>& features, Cell) const override {
    const Tensor<T> y = infer(detail::single_batch<T>(features, cfg_.window));
    return static_cast<double>(y[y.size() - 1]);
  }

  std::vector<double> predict_next_batch(const std::vector<Tensor<double>>& features,
                                         const std::vector<Cell>&) const override {
    if (features.empty()) return {};
    const std::size_t c = cfg_.window.channels.size(), h = cfg_.window.h, w = cfg_.window.w;
    Tensor<T> x({features.size(), c, h, w});
    const std::size_t per = c * h * w;
    for (std::size_t n = 0; n < features.size(); ++n) {
      if (features[n].size() != per) throw std::invalid_argument("model: window shape mismatch");
      for (std::size_t i = 0; i < per; ++i) x[n * per + i] = static_cast<T>(features[n][i]);
    }
    const Tensor<T> y = infer(x);
    std::vector<double> out(features.size());
    for (std::size_t n = 0; n < features.size(); ++n) out[n] = static_cast<double>(y[(n + 1) * h * w - 1]);
    return out;
  }

  std::vector<NamedParameter<T>> parameters() {
    auto out = stack_.parameters("stack.");
    out.push_back({"head.conv.weight", &head_w_, true});
    out.push_back({"head.conv.bias", &head_b_, false});
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return stack_.buffers("stack."); }

  /// L2 decay on every convolution filter of this model.
  double decay_for(const NamedParameter<T>& p, double weight_decay) const {
    return p.conv_filter ? weight_decay : 0.0;
  }

 private:
  Tensor<T> head(Cache& c) const {
    c.logits = conv2d_causal_dilated(c.stack_out, head_w_.value, head_b_.value, 1);
    const std::size_t n = c.logits.dim(0), h = c.logits.dim(2), w = c.logits.dim(3);
    Tensor<T> out({n, h, w});
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus(c.logits[i]);
    return out;
  }

  ModelConfig cfg_;
  TCNStack<T> stack_;
  Parameter<T> head_w_, head_b_;
};

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  double initial_loss = 0.0;          // mean batch loss before the first update
  std::vector<double> loss_history;   // mean batch loss per epoch
  std::size_t n_segments = 0;
};

namespace detail {

template <typename Model>
std::vector<const Segment*> usable_segments(const Model& model, const std::vector<Segment>& segments) {
  std::vector<const Segment*> out;
  for (const auto& s : segments)
    if (model.usable(s)) out.push_back(&s);
  return out;
}

template <typename Model>
double mean_loss(Model& model, const std::vector<const Segment*>& order, std::size_t batch_size, Pass pass) {
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    total += model.batch_loss(std::span<const Segment* const>(order.data() + start, end - start), pass);
    ++batches;
  }
  return total / static_cast<double>(batches);
}

}  // namespace detail

/// Mini-batch Adam training. Segment order is reshuffled each epoch from
/// `cfg.seed`, so equal seeds give identical trajectories.
template <typename Model>
TrainResult train(Model& model, const std::vector<Segment>& segments, const TrainConfig& cfg) {
  if (segments.empty()) throw std::invalid_argument("train: no segments");
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  std::vector<const Segment*> order = detail::usable_segments(model, segments);
  if (order.empty()) throw std::invalid_argument("train: no segment has a usable target");

  TrainResult result;
  result.n_segments = order.size();
  result.initial_loss = detail::mean_loss(model, order, cfg.batch_size, Pass::TrainFrozen);
  Rng rng(cfg.seed);
  auto params = model.parameters();
  AdamOptions adam;
  adam.lr = cfg.lr;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& p : params) p.param->zero_grad();
      const double loss =
          model.batch_loss(std::span<const Segment* const>(order.data() + start, end - start), Pass::Train);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << ", batch starting at segment " << start;
        throw std::runtime_error(msg.str());
      }
      for (auto& p : params) {
        adam.weight_decay = model.decay_for(p, cfg.weight_decay);
        adam_step(*p.param, adam);
      }
      total += loss;
      ++batches;
    }
    result.loss_history.push_back(total / static_cast<double>(batches));
  }
  return result;
}

/// Eval-mode mean squared error over segments (per-batch losses averaged
/// with segment-count weights).
template <typename Model>
double validation_loss(Model& model, const std::vector<Segment>& segments, std::size_t batch_size = 64) {
  std::vector<const Segment*> order = detail::usable_segments(model, segments);
  if (order.empty()) throw std::invalid_argument("validation_loss: no usable segments");
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    total += model.batch_loss(std::span<const Segment* const>(order.data() + start, end - start), Pass::Eval) *
             static_cast<double>(end - start);
  }
  return total / static_cast<double>(order.size());
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

struct SearchCandidate {
  ModelConfig model;
  TrainConfig train;
};

struct SearchResult {
  std::size_t best_index = 0;
  SearchCandidate best;
  std::vector<double> val_scores;
};

/// Filters {16,32,64,128} x filter size {3,5,7,9} x blocks {3,...,7}.
inline std::vector<SearchCandidate> default_search_space(const ModelConfig& base_model, const TrainConfig& base_train) {
  std::vector<SearchCandidate> out;
  for (std::size_t filters : {16, 32, 64, 128})
    for (std::size_t k : {3, 5, 7, 9})
      for (std::size_t blocks : {3, 4, 5, 6, 7}) {
        SearchCandidate c{base_model, base_train};
        c.model.n_filters = filters;
        c.model.k = k;
        c.model.n_blocks = blocks;
        out.push_back(c);
      }
  return out;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Trains one model per candidate (at most `budget_epochs` epochs each when
/// the budget is non-zero) and keeps the lowest validation error. Cell
/// seeds are derived from `seed` and the candidate index.
template <template <typename> class ModelT>
SearchResult grid_search(const std::vector<SearchCandidate>& space, const std::vector<Segment>& train_set,
                         const std::vector<Segment>& val_set, std::size_t budget_epochs, std::uint64_t seed) {
  if (space.empty()) throw std::invalid_argument("grid_search: empty search space");
  SearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < space.size(); ++i) {
    ModelT<float> model(space[i].model);
    Rng init(mix_seed(seed, i));
    model.init_weights(init);
    TrainConfig tc = space[i].train;
    tc.seed = mix_seed(seed ^ 0x5A5A5A5AULL, i);
    if (budget_epochs > 0) tc.epochs = std::min(tc.epochs, budget_epochs);
    train(model, train_set, tc);
    const double score = validation_loss(model, val_set);
    result.val_scores.push_back(score);
    if (score < best) {
      best = score;
      result.best_index = i;
    }
  }
  result.best = space[result.best_index];
  return result;
}

}  // namespace socialgrid
