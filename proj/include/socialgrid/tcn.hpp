#pragma once

// Temporal convolution blocks:
//   conv (dilated, causal) -> batch norm -> PReLU -> + residual -> PReLU
// stacked with dilation 2^(l-1) at block l.

#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "socialgrid/grid.hpp"
#include "socialgrid/ops.hpp"
#include "socialgrid/random.hpp"
#include "socialgrid/tensor.hpp"

namespace socialgrid {

struct BlockConfig {
  std::size_t c_in = 1;
  std::size_t c_out = 1;
  std::size_t k_h = 3;
  std::size_t k_w = 3;
  std::size_t tau = 1;

  friend bool operator==(const BlockConfig&, const BlockConfig&) = default;
};

inline constexpr double kInitialPreluSlope = 0.25;

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
  bool conv_filter;  // receives weight decay in the reply model
};

template <typename T>
class TemporalBlock {
 public:
  struct Cache {
    Tensor<T> input;
    Tensor<T> normed;  // batch-norm output, PReLU input
    Tensor<T> sum;     // residual sum, final PReLU input
    BatchNormCache<T> bn;
  };

  TemporalBlock() = default;

  /// Zero convolution weights, gamma = 1, beta = 0, PReLU slopes 0.25.
  explicit TemporalBlock(BlockConfig cfg) : cfg_(cfg) {
    if (cfg.c_in < 1 || cfg.c_out < 1 || cfg.k_h < 1 || cfg.k_w < 1 || cfg.tau < 1)
      throw std::invalid_argument("temporal block: channel counts, filter extents and dilation must be >= 1");
    conv_w_ = Parameter<T>(Tensor<T>({cfg.c_out, cfg.c_in, cfg.k_h, cfg.k_w}));
    conv_b_ = Parameter<T>(Tensor<T>({cfg.c_out}));
    gamma_ = Parameter<T>(Tensor<T>({cfg.c_out}, T{1}));
    beta_ = Parameter<T>(Tensor<T>({cfg.c_out}));
    slope1_ = Parameter<T>(Tensor<T>({cfg.c_out}, static_cast<T>(kInitialPreluSlope)));
    slope2_ = Parameter<T>(Tensor<T>({cfg.c_out}, static_cast<T>(kInitialPreluSlope)));
    stats_ = BatchNormStats<T>(cfg.c_out);
    if (has_projection()) {
      proj_w_ = Parameter<T>(Tensor<T>({cfg.c_out, cfg.c_in, 1, 1}));
      proj_b_ = Parameter<T>(Tensor<T>({cfg.c_out}));
    }
  }

  const BlockConfig& config() const noexcept { return cfg_; }
  bool has_projection() const noexcept { return cfg_.c_in != cfg_.c_out; }

  /// He initialization (variance 2 / fan_in) of the convolution filters.
  void init_weights(Rng& rng) {
    const double std_conv = std::sqrt(2.0 / static_cast<double>(cfg_.c_in * cfg_.k_h * cfg_.k_w));
    for (auto& v : conv_w_.value.storage()) v = static_cast<T>(std_conv * rng.normal());
    if (has_projection()) {
      const double std_proj = std::sqrt(2.0 / static_cast<double>(cfg_.c_in));
      for (auto& v : proj_w_.value.storage()) v = static_cast<T>(std_proj * rng.normal());
    }
  }

  /// Train mode uses batch statistics and updates the running ones.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Cache* cache = nullptr) {
    return run(x, mode, cache, mode == Mode::Train ? &stats_ : nullptr);
  }

  /// Eval-mode forward without caching.
  Tensor<T> infer(const Tensor<T>& x) const { return run(x, Mode::Eval, nullptr, nullptr); }

  /// Train-mode forward that leaves the running statistics untouched.
  Tensor<T> forward_frozen(const Tensor<T>& x, Mode mode, Cache* cache = nullptr) const {
    return run(x, mode, cache, nullptr);
  }

  /// Accumulates parameter gradients and returns the input gradient.
  Tensor<T> backward(const Cache& cache, const Tensor<T>& upstream) {
    auto g_out = prelu_backward(cache.sum, slope2_.value, upstream);
    add_into(slope2_.grad, g_out.slope);
    const Tensor<T>& d_sum = g_out.input;

    auto g_act = prelu_backward(cache.normed, slope1_.value, d_sum);
    add_into(slope1_.grad, g_act.slope);
    auto g_bn = batch_norm_backward(cache.bn, gamma_.value, g_act.input);
    add_into(gamma_.grad, g_bn.gamma);
    add_into(beta_.grad, g_bn.beta);
    auto g_conv = conv2d_backward(cache.input, conv_w_.value, cfg_.tau, g_bn.input);
    add_into(conv_w_.grad, g_conv.filters);
    add_into(conv_b_.grad, g_conv.bias);

    Tensor<T> dx = std::move(g_conv.input);
    if (has_projection()) {
      auto g_proj = conv2d_backward(cache.input, proj_w_.value, 1, d_sum);
      add_into(proj_w_.grad, g_proj.filters);
      add_into(proj_b_.grad, g_proj.bias);
      add_into(dx, g_proj.input);
    } else {
      add_into(dx, d_sum);
    }
    return dx;
  }

  std::vector<NamedParameter<T>> parameters(const std::string& prefix) {
    std::vector<NamedParameter<T>> out{{prefix + "conv.weight", &conv_w_, true},
                                       {prefix + "conv.bias", &conv_b_, false},
                                       {prefix + "bn.gamma", &gamma_, false},
                                       {prefix + "bn.beta", &beta_, false},
                                       {prefix + "prelu1.slope", &slope1_, false},
                                       {prefix + "prelu2.slope", &slope2_, false}};
    if (has_projection()) {
      out.push_back({prefix + "proj.weight", &proj_w_, true});
      out.push_back({prefix + "proj.bias", &proj_b_, false});
    }
    return out;
  }

  /// Running batch-norm statistics (persisted with the weights, not trained).
  std::vector<std::pair<std::string, Tensor<T>*>> buffers(const std::string& prefix) {
    return {{prefix + "bn.running_mean", &stats_.running_mean}, {prefix + "bn.running_var", &stats_.running_var}};
  }

  template <typename U>
  TemporalBlock<U> cast() const {
    TemporalBlock<U> b(cfg_);
    auto src = const_cast<TemporalBlock*>(this)->parameters("");
    auto dst = b.parameters("");
    for (std::size_t i = 0; i < src.size(); ++i) dst[i].param->reset(src[i].param->value.template cast<U>());
    auto sb = const_cast<TemporalBlock*>(this)->buffers("");
    auto db = b.buffers("");
    for (std::size_t i = 0; i < sb.size(); ++i) *db[i].second = sb[i].second->template cast<U>();
    return b;
  }

 private:
  Tensor<T> run(const Tensor<T>& x, Mode mode, Cache* cache, BatchNormStats<T>* update) const {
    if (x.rank() != 4 || x.dim(1) != cfg_.c_in)
      throw std::invalid_argument("temporal block: expected N x " + std::to_string(cfg_.c_in) +
                                  " x H x W input, got " + shape_string(x.shape()));
    const Tensor<T> conv = conv2d_causal_dilated(x, conv_w_.value, conv_b_.value, cfg_.tau);
    BatchNormCache<T> bn_cache;
    Tensor<T> normed = batch_norm(conv, gamma_.value, beta_.value, mode, stats_, &bn_cache, update);
    Tensor<T> sum = prelu(normed, slope1_.value);
    if (has_projection()) {
      const Tensor<T> proj = conv2d_causal_dilated(x, proj_w_.value, proj_b_.value, 1);
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += proj[i];
    } else {
      for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += x[i];
    }
    Tensor<T> out = prelu(sum, slope2_.value);
    if (cache) {
      cache->input = x;
      cache->normed = std::move(normed);
      cache->sum = std::move(sum);
      cache->bn = std::move(bn_cache);
    }
    return out;
  }


  static void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  BlockConfig cfg_;
  Parameter<T> conv_w_, conv_b_, gamma_, beta_, slope1_, slope2_, proj_w_, proj_b_;
  BatchNormStats<T> stats_;
};

template <typename T>
class TCNStack {
 public:
  using Cache = std::vector<typename TemporalBlock<T>::Cache>;

  TCNStack() = default;
  explicit TCNStack(const std::vector<BlockConfig>& configs) {
    for (std::size_t l = 0; l < configs.size(); ++l) {
      if (l > 0 && configs[l].c_in != configs[l - 1].c_out)
        throw std::invalid_argument("tcn stack: block " + std::to_string(l) + " input channels do not chain");
      blocks_.emplace_back(configs[l]);
    }
  }

  std::size_t size() const noexcept { return blocks_.size(); }
  bool empty() const noexcept { return blocks_.empty(); }
  TemporalBlock<T>& block(std::size_t l) { return blocks_.at(l); }
  const TemporalBlock<T>& block(std::size_t l) const { return blocks_.at(l); }

  std::vector<BlockConfig> configs() const {
    std::vector<BlockConfig> out;
    for (const auto& b : blocks_) out.push_back(b.config());
    return out;
  }

  std::size_t out_channels(std::size_t in_channels) const {
    return blocks_.empty() ? in_channels : blocks_.back().config().c_out;
  }

  void init_weights(Rng& rng) {
    for (auto& b : blocks_) b.init_weights(rng);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Cache* cache = nullptr) {
    check_input(x);
    if (cache) cache->assign(blocks_.size(), {});
    Tensor<T> h = x;
    for (std::size_t l = 0; l < blocks_.size(); ++l) h = blocks_[l].forward(h, mode, cache ? &(*cache)[l] : nullptr);
    return h;
  }

  Tensor<T> infer(const Tensor<T>& x) const {
    check_input(x);
    Tensor<T> h = x;
    for (const auto& b : blocks_) h = b.infer(h);
    return h;
  }

  Tensor<T> forward_frozen(const Tensor<T>& x, Mode mode, Cache* cache = nullptr) const {
    check_input(x);
    if (cache) cache->assign(blocks_.size(), {});
    Tensor<T> h = x;
    for (std::size_t l = 0; l < blocks_.size(); ++l)
      h = blocks_[l].forward_frozen(h, mode, cache ? &(*cache)[l] : nullptr);
    return h;
  }

  Tensor<T> backward(const Cache& cache, const Tensor<T>& upstream) {
    Tensor<T> g = upstream;
    for (std::size_t l = blocks_.size(); l-- > 0;) g = blocks_[l].backward(cache[l], g);
    return g;
  }

  std::vector<NamedParameter<T>> parameters(const std::string& prefix = "") {
    std::vector<NamedParameter<T>> out;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      auto p = blocks_[l].parameters(prefix + "block" + std::to_string(l) + ".");
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> buffers(const std::string& prefix = "") {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      auto b = blocks_[l].buffers(prefix + "block" + std::to_string(l) + ".");
      out.insert(out.end(), b.begin(), b.end());
    }
    return out;
  }

  template <typename U>
  TCNStack<U> cast() const {
    TCNStack<U> s(configs());
    for (std::size_t l = 0; l < blocks_.size(); ++l) s.block(l) = blocks_[l].template cast<U>();
    return s;
  }

 private:
  void check_input(const Tensor<T>& x) const {
    if (!blocks_.empty() && (x.rank() != 4 || x.dim(1) != blocks_.front().config().c_in))
      throw std::invalid_argument("tcn stack: input " + shape_string(x.shape()) + " does not match the first block");
  }

  std::vector<TemporalBlock<T>> blocks_;
};

/// Block configs with dilation 2^(l-1) at block l (1-based). Block 1 maps
/// c_in to n_filters; the rest keep n_filters channels.
inline std::vector<BlockConfig> default_block_configs(std::size_t c_in, std::size_t n_filters, std::size_t k_h,
                                                      std::size_t k_w, std::size_t n_blocks) {
  std::vector<BlockConfig> out;
  for (std::size_t l = 0; l < n_blocks; ++l)
    out.push_back(BlockConfig{l == 0 ? c_in : n_filters, n_filters, k_h, k_w, std::size_t{1} << l});
  return out;
}

struct ReceptiveField {
  std::size_t per_axis = 1;
  std::size_t area = 1;
};

/// r_0 = 1, r_l = r_{l-1} + (k - 1) tau_l; the area of a square filter stack is r_L^2.
inline ReceptiveField receptive_field(std::size_t k, const std::vector<std::size_t>& dilations) {
  if (k < 1) throw std::invalid_argument("receptive_field: filter extent must be >= 1");
  std::size_t r = 1;
  for (std::size_t tau : dilations) r += (k - 1) * tau;
  return {r, r * r};
}

/// Row and column extents for K_h x K_w filters (a K x 1 stack has column extent 1).
inline std::pair<std::size_t, std::size_t> receptive_extent(std::size_t k_h, std::size_t k_w,
                                                            const std::vector<std::size_t>& dilations) {
  return {receptive_field(k_h, dilations).per_axis, receptive_field(k_w, dilations).per_axis};
}

template <typename T>
std::vector<std::size_t> dilations_of(const TCNStack<T>& stack) {
  std::vector<std::size_t> out;
  for (const auto& c : stack.configs()) out.push_back(c.tau);
  return out;
}

/// Input cells with nonzero influence on output cell `cell`, found from the
/// input gradient of a random channel combination of that output, in
/// 64-bit Eval mode on a random input of shape channels x rows x cols.
template <typename T>
std::vector<Cell> causality_probe(const TCNStack<T>& stack, std::size_t channels, std::size_t rows, std::size_t cols,
                                  Cell cell, std::uint64_t seed = 1) {
  TCNStack<double> probe = stack.template cast<double>();
  Rng rng(seed);
  Tensor<double> x({1, channels, rows, cols});
  for (auto& v : x.storage()) v = rng.normal();
  typename TCNStack<double>::Cache cache;
  const Tensor<double> y = probe.forward(x, Mode::Eval, &cache);
  Tensor<double> up(y.shape());
  for (std::size_t c = 0; c < y.dim(1); ++c)
    up(0, c, static_cast<std::size_t>(cell.row), static_cast<std::size_t>(cell.col)) = 0.5 + rng.uniform();
  const Tensor<double> dx = probe.backward(cache, up);
  std::vector<Cell> influence;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      bool hit = false;
      for (std::size_t c = 0; c < channels; ++c) hit = hit || std::abs(dx(0, c, i, j)) > 0.0;
      if (hit) influence.push_back(Cell{static_cast<std::int64_t>(i), static_cast<std::int64_t>(j)});
    }
  return influence;
}

}  // namespace socialgrid
