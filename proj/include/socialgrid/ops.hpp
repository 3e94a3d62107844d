#pragma once

// Dense kernels with hand-written reverse passes. Activations are laid out
// N x C x H x W (batch, channel, row, column); grid rows are time intervals
// and grid columns are cascades.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "socialgrid/tensor.hpp"

namespace socialgrid {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Rank-3 inputs are treated as a batch of one.
template <typename T>
Tensor<T> as_batch(const Tensor<T>& x) {
  if (x.rank() == 4) return x;
  require(x.rank() == 3, "conv2d: expected C x H x W or N x C x H x W input, got " + shape_string(x.shape()));
  return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
}

// Product of the dimensions after the channel axis.
inline std::size_t inner_size(const Shape& s) {
  std::size_t inner = 1;
  for (std::size_t a = 2; a < s.size(); ++a) inner *= s[a];
  return inner;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dilated causal 2-D convolution
// ---------------------------------------------------------------------------

/// out(n,c,i,j) = bias(c) + sum_{c',a,b} f(c,c',a,b) * x(n,c', i - a*tau, j - b*tau),
/// reading zero outside the input. Taps reach the current cell and the
/// (K-1)*tau cells above and to the left of it, so the output keeps the
/// input's spatial shape.
template <typename T>
Tensor<T> conv2d_causal_dilated(const Tensor<T>& input, const Tensor<T>& filters, const Tensor<T>& bias,
                                std::size_t tau) {
  const Tensor<T> x = detail::as_batch(input);
  detail::require(filters.rank() == 4, "conv2d: filters must be C_out x C_in x K_h x K_w");
  detail::require(tau >= 1, "conv2d: dilation must be >= 1");
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = filters.dim(0), k_h = filters.dim(2), k_w = filters.dim(3);
  detail::require(filters.dim(1) == c_in, "conv2d: input has " + std::to_string(c_in) +
                                              " channels but filters expect " + std::to_string(filters.dim(1)));
  detail::require(k_h >= 1 && k_w >= 1, "conv2d: empty filter");
  detail::require(bias.size() == c_out, "conv2d: bias length does not match output channels");

  Tensor<T> out({n, c_out, h, w});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      T* dst = &out(b, co, 0, 0);
      std::fill(dst, dst + h * w, bias[co]);
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T* src = &x(b, ci, 0, 0);
        for (std::size_t a = 0; a < k_h; ++a) {
          const std::size_t dr = a * tau;
          if (dr >= h) break;
          for (std::size_t kb = 0; kb < k_w; ++kb) {
            const std::size_t dc = kb * tau;
            if (dc >= w) break;
            const T f = filters(co, ci, a, kb);
            if (f == T{0}) continue;
            for (std::size_t i = dr; i < h; ++i) {
              T* drow = dst + i * w + dc;
              const T* srow = src + (i - dr) * w;
              for (std::size_t j = 0; j + dc < w; ++j) drow[j] += f * srow[j];
            }
          }
        }
      }
    }
  }
  if (input.rank() == 3) return out.reshaped({c_out, h, w});
  return out;
}

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> filters;
  Tensor<T> bias;
};

/// Reverse pass of conv2d_causal_dilated for the given upstream gradient.
template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& filters, std::size_t tau,
                               const Tensor<T>& upstream) {
  const Tensor<T> x = detail::as_batch(input);
  const Tensor<T> g = detail::as_batch(upstream);
  detail::require(filters.rank() == 4 && filters.dim(1) == x.dim(1), "conv2d_backward: filter/input mismatch");
  const std::size_t n = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = filters.dim(0), k_h = filters.dim(2), k_w = filters.dim(3);
  detail::require(g.shape() == Shape({n, c_out, h, w}),
                  "conv2d_backward: upstream gradient " + shape_string(upstream.shape()) +
                      " does not match forward output");

  Conv2dGrads<T> grads{Tensor<T>(x.shape()), Tensor<T>(filters.shape()), Tensor<T>({c_out})};
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t co = 0; co < c_out; ++co) {
      const T* up = &g(b, co, 0, 0);
      T bsum{0};
      for (std::size_t p = 0; p < h * w; ++p) bsum += up[p];
      grads.bias[co] += bsum;
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T* src = &x(b, ci, 0, 0);
        T* gsrc = &grads.input(b, ci, 0, 0);
        for (std::size_t a = 0; a < k_h; ++a) {
          const std::size_t dr = a * tau;
          if (dr >= h) break;
          for (std::size_t kb = 0; kb < k_w; ++kb) {
            const std::size_t dc = kb * tau;
            if (dc >= w) break;
            const T f = filters(co, ci, a, kb);
            T acc{0};
            for (std::size_t i = dr; i < h; ++i) {
              const T* urow = up + i * w + dc;
              const T* srow = src + (i - dr) * w;
              T* grow = gsrc + (i - dr) * w;
              for (std::size_t j = 0; j + dc < w; ++j) {
                acc += urow[j] * srow[j];
                grow[j] += f * urow[j];
              }
            }
            grads.filters(co, ci, a, kb) += acc;
          }
        }
      }
    }
  }
  if (input.rank() == 3) grads.input = grads.input.reshaped(input.shape());
  return grads;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

enum class Mode { Train, Eval };

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels)
      : running_mean({channels}, T{0}), running_var({channels}, T{1}) {}
};

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;  // x_hat
  std::vector<T> inv_std;
  Mode mode = Mode::Train;
};

inline constexpr double kBatchNormMomentum = 0.9;
inline constexpr double kBatchNormEps = 1e-5;

/// Per-channel normalization over every axis except axis 1. In Train mode
/// the batch statistics are used and the running statistics are blended
/// as running = momentum * running + (1 - momentum) * batch (biased variance).
/// Running statistics are written to `running_update` when it is non-null
/// (Train mode only); Eval mode reads them from `stats`.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Mode mode,
                     const BatchNormStats<T>& stats, BatchNormCache<T>* cache = nullptr,
                     BatchNormStats<T>* running_update = nullptr, double eps = kBatchNormEps) {
  detail::require(x.rank() >= 2, "batch_norm: input needs a channel axis");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = detail::inner_size(x.shape());
  detail::require(n * inner > 0, "batch_norm: zero-size batch");
  detail::require(gamma.size() == c && beta.size() == c, "batch_norm: gamma/beta length mismatch");
  detail::require(eps > 0.0, "batch_norm: eps must be positive");
  detail::require(stats.running_mean.size() == c && stats.running_var.size() == c,
                  "batch_norm: running statistics length mismatch");

  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> inv_std(c);
  const double count = static_cast<double>(n * inner);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * inner;
        for (std::size_t k = 0; k < inner; ++k) s += p[k];
      }
      mean = s / count;
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = x.data() + (b * c + ch) * inner;
        for (std::size_t k = 0; k < inner; ++k) sq += (p[k] - mean) * (p[k] - mean);
      }
      var = sq / count;
      if (running_update) {
        running_update->running_mean[ch] = static_cast<T>(kBatchNormMomentum * running_update->running_mean[ch] +
                                                          (1.0 - kBatchNormMomentum) * mean);
        running_update->running_var[ch] = static_cast<T>(kBatchNormMomentum * running_update->running_var[ch] +
                                                         (1.0 - kBatchNormMomentum) * var);
      }
    } else {
      mean = stats.running_mean[ch];
      var = stats.running_var[ch];
    }
    const T istd = static_cast<T>(1.0 / std::sqrt(var + eps));
    inv_std[ch] = istd;
    const T m = static_cast<T>(mean);
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) {
        const T xh = (x[off + k] - m) * istd;
        xhat[off + k] = xh;
        y[off + k] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return y;
}

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batch_norm_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                      const Tensor<T>& upstream) {
  const Tensor<T>& xhat = cache.normalized;
  detail::require(upstream.shape() == xhat.shape(), "batch_norm_backward: gradient shape mismatch");
  const std::size_t n = xhat.dim(0), c = xhat.dim(1), inner = detail::inner_size(xhat.shape());
  const T count = static_cast<T>(n * inner);
  BatchNormGrads<T> g{Tensor<T>(xhat.shape()), Tensor<T>({c}), Tensor<T>({c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    T sum_dy{0}, sum_dy_xhat{0};
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) {
        sum_dy += upstream[off + k];
        sum_dy_xhat += upstream[off + k] * xhat[off + k];
      }
    }
    g.beta[ch] = sum_dy;
    g.gamma[ch] = sum_dy_xhat;
    const T scale = gamma[ch] * cache.inv_std[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * inner;
      for (std::size_t k = 0; k < inner; ++k) {
        if (cache.mode == Mode::Train) {
          g.input[off + k] = scale * (upstream[off + k] - sum_dy / count - xhat[off + k] * sum_dy_xhat / count);
        } else {
          g.input[off + k] = scale * upstream[off + k];
        }
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// PReLU
// ---------------------------------------------------------------------------

/// y = x for x > 0, a(c) * x otherwise; one slope per channel (axis 1).
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope) {
  detail::require(x.rank() >= 2, "prelu: input needs a channel axis");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = detail::inner_size(x.shape());
  detail::require(slope.size() == c, "prelu: slope length mismatch");
  Tensor<T> y(x.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * inner;
      const T a = slope[ch];
      for (std::size_t k = 0; k < inner; ++k) {
        const T v = x[off + k];
        y[off + k] = v > T{0} ? v : a * v;
      }
    }
  return y;
}

template <typename T>
struct PreluGrads {
  Tensor<T> input;
  Tensor<T> slope;
};

template <typename T>
PreluGrads<T> prelu_backward(const Tensor<T>& x, const Tensor<T>& slope, const Tensor<T>& upstream) {
  detail::require(upstream.shape() == x.shape(), "prelu_backward: gradient shape mismatch");
  const std::size_t n = x.dim(0), c = x.dim(1), inner = detail::inner_size(x.shape());
  PreluGrads<T> g{Tensor<T>(x.shape()), Tensor<T>({c})};
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * inner;
      T ds{0};
      for (std::size_t k = 0; k < inner; ++k) {
        const T v = x[off + k];
        const T u = upstream[off + k];
        if (v > T{0}) {
          g.input[off + k] = u;
        } else {
          g.input[off + k] = slope[ch] * u;
          ds += u * v;
        }
      }
      g.slope[ch] += ds;
    }
  return g;
}

// ---------------------------------------------------------------------------
// Dense layer
// ---------------------------------------------------------------------------

/// y = W x + b for each row of an N x in batch (a rank-1 x is one row).
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::require(weight.rank() == 2, "dense: weight must be out x in");
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  const bool vector_input = x.rank() == 1;
  const std::size_t n = vector_input ? 1 : x.dim(0);
  const std::size_t x_in = vector_input ? x.dim(0) : (x.rank() == 2 ? x.dim(1) : 0);
  detail::require(x_in == in_dim, "dense: input dimension " + std::to_string(x_in) + " does not match weight " +
                                      shape_string(weight.shape()));
  detail::require(bias.size() == out_dim, "dense: bias length mismatch");
  Tensor<T> y(vector_input ? Shape{out_dim} : Shape{n, out_dim});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out_dim; ++o) {
      T acc = bias[o];
      for (std::size_t i = 0; i < in_dim; ++i) acc += weight(o, i) * x[b * in_dim + i];
      y[b * out_dim + o] = acc;
    }
  return y;
}

template <typename T>
struct DenseGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& upstream) {
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  const std::size_t n = x.size() / in_dim;
  detail::require(upstream.size() == n * out_dim, "dense_backward: gradient shape mismatch");
  DenseGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({out_dim})};
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < out_dim; ++o) {
      const T u = upstream[b * out_dim + o];
      g.bias[o] += u;
      for (std::size_t i = 0; i < in_dim; ++i) {
        g.weight(o, i) += u * x[b * in_dim + i];
        g.input[b * in_dim + i] += u * weight(o, i);
      }
    }
  return g;
}

// ---------------------------------------------------------------------------
// Softplus
// ---------------------------------------------------------------------------

template <typename T>
T softplus(T x) {
  return std::max(x, T{0}) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T softplus_grad(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = softplus(x[i]);
  return y;
}

// ---------------------------------------------------------------------------
// Masked mean squared error
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
  std::size_t count = 0;
};

/// Mean of (pred - target)^2 over cells whose weight is 1. The gradient is
/// 2 (pred - target) / n on those cells and exactly zero elsewhere.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target,
                       const std::vector<std::uint8_t>* weight_mask = nullptr) {
  detail::require(pred.size() == target.size(), "mse_loss: prediction " + shape_string(pred.shape()) +
                                                    " and target " + shape_string(target.shape()) + " differ");
  detail::require(!weight_mask || weight_mask->size() == pred.size(), "mse_loss: weight mask size mismatch");
  LossResult<T> r{0.0, Tensor<T>(pred.shape()), 0};
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (!weight_mask || (*weight_mask)[i]) ++r.count;
  if (r.count == 0) throw std::invalid_argument("mse_loss: every cell is masked");
  const double n = static_cast<double>(r.count);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (weight_mask && !(*weight_mask)[i]) continue;
    const double diff = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += diff * diff;
    r.grad[i] = static_cast<T>(2.0 * diff / n);
  }
  r.loss = acc / n;
  return r;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // added to the gradient as weight_decay * value
};

/// One bias-corrected Adam update. The gradient buffer is read, not cleared.
template <typename T>
void adam_step(Parameter<T>& p, const AdamOptions& opt) {
  if (opt.lr < 0.0) throw std::invalid_argument("adam_step: negative learning rate");
  p.step_count += 1;
  const double t = static_cast<double>(p.step_count);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = static_cast<double>(p.grad[i]) + opt.weight_decay * static_cast<double>(p.value[i]);
    const double m = opt.beta1 * static_cast<double>(p.m[i]) + (1.0 - opt.beta1) * g;
    const double v = opt.beta2 * static_cast<double>(p.v[i]) + (1.0 - opt.beta2) * g * g;
    p.m[i] = static_cast<T>(m);
    p.v[i] = static_cast<T>(v);
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    if (opt.lr != 0.0)
      p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps));
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct GradCheckOptions {
  double eps = 1e-5;
  // Denominator floor for the relative error. Entries whose true gradient
  // is zero (e.g. a conv bias feeding Train-mode batch norm) are judged on
  // absolute error; their central differences carry round-off of order
  // 1e-16 |f| / eps, so the floor must sit well above that.
  double floor = 1e-4;
};

/// Compares analytic gradients with central differences
/// (f(p + eps) - f(p - eps)) / (2 eps), entry by entry, and returns the
/// worst relative error |a - n| / max(|a|, |n|, floor).
template <typename Fn>
double grad_check(Fn&& loss, std::span<Tensor<double>* const> params, std::span<const Tensor<double>> analytic,
                  GradCheckOptions opt = {}) {
  if (params.size() != analytic.size()) throw std::invalid_argument("grad_check: parameter/gradient count mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<double>& p = *params[k];
    if (p.shape() != analytic[k].shape()) throw std::invalid_argument("grad_check: gradient shape mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double saved = p[i];
      p[i] = saved + opt.eps;
      const double f_plus = loss();
      p[i] = saved - opt.eps;
      const double f_minus = loss();
      p[i] = saved;
      const double a = analytic[k][i];
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus) || !std::isfinite(a))
        throw std::runtime_error("grad_check: non-finite value encountered");
      const double numeric = (f_plus - f_minus) / (2.0 * opt.eps);
      const double denom = std::max({std::abs(a), std::abs(numeric), opt.floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace socialgrid
