#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "socialgrid/ops.hpp"
#include "socialgrid/random.hpp"

using namespace socialgrid;

namespace {

BatchNormCache<double>* const no_cache = nullptr;
BatchNormStats<double>* const no_update = nullptr;

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

// Direct transcription of the convolution sum, one output cell at a time.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& f, const Tensor<double>& b, std::size_t tau) {
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t cout = f.dim(0), kh = f.dim(2), kw = f.dim(3);
  Tensor<double> y({cout, h, w});
  for (std::size_t c = 0; c < cout; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double acc = b[c];
        for (std::size_t cc = 0; cc < cin; ++cc)
          for (std::size_t a = 0; a < kh; ++a)
            for (std::size_t bb = 0; bb < kw; ++bb) {
              const long ii = static_cast<long>(i) - static_cast<long>(a * tau);
              const long jj = static_cast<long>(j) - static_cast<long>(bb * tau);
              if (ii < 0 || jj < 0) continue;
              acc += f(c, cc, a, bb) * x(cc, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
            }
        y(c, i, j) = acc;
      }
  return y;
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

}  // namespace

TEST(Conv, IdentityKernel) {
  Rng rng(1);
  auto x = random_tensor({1, 4, 5}, rng);
  Tensor<double> f({1, 1, 1, 1}, 1.0);
  Tensor<double> b({1});
  EXPECT_EQ(conv2d_causal_dilated(x, f, b, 1), x);
}

TEST(Conv, HandExampleWithTopLeftPadding) {
  Tensor<double> x({1, 2, 2}, {1, 2, 3, 4});
  Tensor<double> f({1, 1, 2, 2}, 1.0);
  Tensor<double> b({1});
  auto y = conv2d_causal_dilated(x, f, b, 1);
  EXPECT_EQ(y.values()[0], 1);
  EXPECT_EQ(y.values()[1], 3);
  EXPECT_EQ(y.values()[2], 4);
  EXPECT_EQ(y.values()[3], 10);
}

TEST(Conv, MatchesNaiveLoop) {
  Rng rng(2);
  for (std::size_t tau : {1, 2, 3}) {
    auto x = random_tensor({3, 9, 11}, rng);
    auto f = random_tensor({2, 3, 3, 3}, rng);
    auto b = random_tensor({2}, rng);
    auto fast = conv2d_causal_dilated(x, f, b, tau);
    auto slow = naive_conv(x, f, b, tau);
    for (std::size_t i = 0; i < fast.size(); ++i)
      EXPECT_NEAR(fast[i], slow[i], 1e-6 * std::max(1.0, std::abs(slow[i])));
  }
}

TEST(Conv, Kx1FilterLeavesColumnsIndependent) {
  Rng rng(3);
  auto x = random_tensor({1, 6, 4}, rng);
  auto f = random_tensor({1, 1, 3, 1}, rng);
  Tensor<double> b({1});
  auto y = conv2d_causal_dilated(x, f, b, 1);
  auto x2 = x;
  x2(0, 2, 1) += 5.0;
  auto y2 = conv2d_causal_dilated(x2, f, b, 1);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(y(0, i, 0), y2(0, i, 0));
    EXPECT_EQ(y(0, i, 2), y2(0, i, 2));
  }
}

TEST(Conv, RejectsChannelMismatch) {
  Tensor<double> x({2, 3, 3});
  Tensor<double> f({1, 3, 2, 2});
  Tensor<double> b({1});
  EXPECT_THROW(conv2d_causal_dilated(x, f, b, 1), std::invalid_argument);
}

TEST(Conv, Linearity) {
  Rng rng(4);
  auto x = random_tensor({2, 7, 7}, rng), z = random_tensor({2, 7, 7}, rng);
  auto f = random_tensor({3, 2, 3, 3}, rng);
  Tensor<double> b({3});
  const double alpha = 0.7, beta = -1.3;
  Tensor<double> mix(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = alpha * x[i] + beta * z[i];
  auto ym = conv2d_causal_dilated(mix, f, b, 2);
  auto yx = conv2d_causal_dilated(x, f, b, 2), yz = conv2d_causal_dilated(z, f, b, 2);
  for (std::size_t i = 0; i < ym.size(); ++i) {
    const double expect = alpha * yx[i] + beta * yz[i];
    EXPECT_NEAR(ym[i], expect, 1e-6 * std::max(1.0, std::abs(expect)));
  }
}

TEST(Conv, CausalityIsExact) {
  Rng rng(5);
  auto x = random_tensor({2, 10, 10}, rng);
  auto f = random_tensor({2, 2, 3, 3}, rng);
  auto b = random_tensor({2}, rng);
  auto y = conv2d_causal_dilated(x, f, b, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t i = rng.below(10), j = rng.below(10);
    std::size_t pi = rng.below(10), pj = rng.below(10);
    if (pi <= i && pj <= j) continue;
    auto xp = x;
    xp(rng.below(2), pi, pj) += rng.uniform(-10, 10);
    auto yp = conv2d_causal_dilated(xp, f, b, 2);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(y(c, i, j), yp(c, i, j));
  }
}

TEST(ConvBackward, ZeroUpstream) {
  Rng rng(6);
  auto x = random_tensor({2, 4, 4}, rng);
  auto f = random_tensor({3, 2, 2, 2}, rng);
  auto g = conv2d_backward(x, f, 1, Tensor<double>({3, 4, 4}));
  for (double v : g.input.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.filters.values()) EXPECT_EQ(v, 0.0);
  for (double v : g.bias.values()) EXPECT_EQ(v, 0.0);
}

TEST(ConvBackward, PointwiseKernelClosedForm) {
  Rng rng(7);
  auto x = random_tensor({2, 3, 4}, rng);
  auto f = random_tensor({2, 2, 1, 1}, rng);
  auto up = random_tensor({2, 3, 4}, rng);
  auto g = conv2d_backward(x, f, 1, up);
  for (std::size_t co = 0; co < 2; ++co) {
    double bias = 0.0;
    for (std::size_t k = 0; k < 12; ++k) bias += up[co * 12 + k];
    EXPECT_NEAR(g.bias[co], bias, 1e-12);
    for (std::size_t ci = 0; ci < 2; ++ci) {
      double s = 0.0;
      for (std::size_t k = 0; k < 12; ++k) s += x[ci * 12 + k] * up[co * 12 + k];
      EXPECT_NEAR(g.filters(co, ci, 0, 0), s, 1e-12);
    }
  }
}

TEST(ConvBackward, FiniteDifferences) {
  Rng rng(8);
  for (std::size_t tau : {1, 2}) {
    auto x = random_tensor({2, 2, 6, 5}, rng);
    auto f = random_tensor({3, 2, 3, 2}, rng);
    auto b = random_tensor({3}, rng);
    auto w = random_tensor({2, 3, 6, 5}, rng);
    auto g = conv2d_backward(x, f, tau, w);
    auto fn = [&] { return weighted_sum(conv2d_causal_dilated(x, f, b, tau), w); };
    std::vector<Tensor<double>*> params{&x, &f, &b};
    std::vector<Tensor<double>> analytic{g.input, g.filters, g.bias};
    EXPECT_LT(grad_check(fn, params, analytic), 1e-4);
  }
}

TEST(BatchNorm, ConstantInputGivesZeros) {
  Tensor<double> x({4, 1, 2, 2}, 3.5);
  BatchNormStats<double> stats(1);
  auto y = batch_norm(x, Tensor<double>({1}, 1.0), Tensor<double>({1}), Mode::Train, stats);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(BatchNorm, HandNormalization) {
  Tensor<double> x({2, 1}, {1.0, 3.0});
  BatchNormStats<double> stats(1);
  auto y = batch_norm(x, Tensor<double>({1}, 1.0), Tensor<double>({1}), Mode::Train, stats, no_cache, no_update, 1e-12);
  EXPECT_NEAR(y[0], -1.0, 1e-9);
  EXPECT_NEAR(y[1], 1.0, 1e-9);
}

TEST(BatchNorm, GammaZeroGivesBeta) {
  Rng rng(9);
  auto x = random_tensor({3, 2, 3, 3}, rng);
  BatchNormStats<double> stats(2);
  Tensor<double> beta({2}, {0.5, -2.0});
  auto y = batch_norm(x, Tensor<double>({2}), beta, Mode::Train, stats);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t k = 0; k < 9; ++k) EXPECT_EQ(y[(n * 2 + c) * 9 + k], beta[c]);
}

TEST(BatchNorm, TrainOutputIsStandardized) {
  Rng rng(10);
  auto x = random_tensor({5, 3, 4, 4}, rng, -3.0, 7.0);
  BatchNormStats<double> stats(3);
  auto y = batch_norm(x, Tensor<double>({3}, 1.0), Tensor<double>({3}), Mode::Train, stats);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0, ss = 0.0;
    for (std::size_t n = 0; n < 5; ++n)
      for (std::size_t k = 0; k < 16; ++k) {
        const double v = y[(n * 3 + c) * 16 + k];
        s += v;
        ss += v * v;
      }
    const double mean = s / 80.0;
    EXPECT_LT(std::abs(mean), 1e-6);
    EXPECT_NEAR(ss / 80.0 - mean * mean, 1.0, 1e-4);
  }
}

TEST(BatchNorm, RunningStatsUseMomentum) {
  Tensor<double> x({2, 1}, {1.0, 3.0});
  BatchNormStats<double> stats(1), next(1);
  batch_norm(x, Tensor<double>({1}, 1.0), Tensor<double>({1}), Mode::Train, stats, no_cache, &next);
  EXPECT_NEAR(next.running_mean[0], 0.9 * 0.0 + 0.1 * 2.0, 1e-12);
  EXPECT_NEAR(next.running_var[0], 0.9 * 1.0 + 0.1 * 1.0, 1e-12);
  auto y = batch_norm(x, Tensor<double>({1}, 1.0), Tensor<double>({1}), Mode::Eval, next);
  EXPECT_NEAR(y[0], (1.0 - 0.2) / std::sqrt(1.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, ZeroSizeBatchThrows) {
  Tensor<double> x({0, 2, 2, 2});
  BatchNormStats<double> stats(2);
  EXPECT_THROW(batch_norm(x, Tensor<double>({2}, 1.0), Tensor<double>({2}), Mode::Train, stats),
               std::invalid_argument);
}

TEST(BatchNormBackward, FiniteDifferences) {
  Rng rng(11);
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    auto x = random_tensor({3, 2, 3, 2}, rng);
    auto gamma = random_tensor({2}, rng, 0.5, 1.5);
    auto beta = random_tensor({2}, rng);
    BatchNormStats<double> stats(2);
    stats.running_mean = random_tensor({2}, rng);
    stats.running_var = random_tensor({2}, rng, 0.5, 2.0);
    auto w = random_tensor(x.shape(), rng);
    BatchNormCache<double> cache;
    batch_norm(x, gamma, beta, mode, stats, &cache);
    auto g = batch_norm_backward(cache, gamma, w);
    auto fn = [&] { return weighted_sum(batch_norm(x, gamma, beta, mode, stats), w); };
    std::vector<Tensor<double>*> params{&x, &gamma, &beta};
    std::vector<Tensor<double>> analytic{g.input, g.gamma, g.beta};
    EXPECT_LT(grad_check(fn, params, analytic), 1e-4) << (mode == Mode::Train ? "train" : "eval");
  }
}

TEST(Prelu, Examples) {
  Tensor<double> x({1, 3}, {0.0, 2.0, 5.0});
  EXPECT_EQ(prelu(x, Tensor<double>({3}, 0.25)), x);
  Tensor<double> neg({1, 2}, {-3.0, 4.0});
  EXPECT_EQ(prelu(neg, Tensor<double>({2}, 1.0)), neg);
  Tensor<double> four({1, 1}, {-4.0});
  EXPECT_EQ(prelu(four, Tensor<double>({1}, 0.25))[0], -1.0);
}

TEST(PreluBackward, FiniteDifferences) {
  Rng rng(12);
  auto x = random_tensor({2, 3, 4, 4}, rng);
  for (auto& v : x.storage())
    if (std::abs(v) < 1e-3) v = 0.5;  // keep clear of the kink
  auto a = random_tensor({3}, rng, 0.0, 0.5);
  auto w = random_tensor(x.shape(), rng);
  auto g = prelu_backward(x, a, w);
  auto fn = [&] { return weighted_sum(prelu(x, a), w); };
  std::vector<Tensor<double>*> params{&x, &a};
  std::vector<Tensor<double>> analytic{g.input, g.slope};
  EXPECT_LT(grad_check(fn, params, analytic), 1e-4);
}

TEST(Dense, Examples) {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> x({2}, {3.0, -4.0});
  EXPECT_EQ(dense(x, eye, Tensor<double>({2})), x);
  auto y = dense(Tensor<double>({2}, {3.0, 4.0}), Tensor<double>({1, 2}, {1.0, 2.0}), Tensor<double>({1}, {1.0}));
  EXPECT_EQ(y[0], 12.0);
  EXPECT_THROW(dense(Tensor<double>({3}), eye, Tensor<double>({2})), std::invalid_argument);
}

TEST(DenseBackward, FiniteDifferences) {
  Rng rng(13);
  auto x = random_tensor({4, 5}, rng);
  auto W = random_tensor({3, 5}, rng);
  auto b = random_tensor({3}, rng);
  auto w = random_tensor({4, 3}, rng);
  auto g = dense_backward(x, W, w);
  auto fn = [&] { return weighted_sum(dense(x, W, b), w); };
  std::vector<Tensor<double>*> params{&x, &W, &b};
  std::vector<Tensor<double>> analytic{g.input, g.weight, g.bias};
  EXPECT_LT(grad_check(fn, params, analytic), 1e-4);
}

TEST(Softplus, StableAndDifferentiable) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(softplus(100.0), 100.0, 1e-12);
  EXPECT_GE(softplus(-800.0), 0.0);
  for (double x : {-3.0, -0.2, 0.0, 0.7, 4.0}) {
    const double fd = (softplus(x + 1e-6) - softplus(x - 1e-6)) / 2e-6;
    EXPECT_NEAR(softplus_grad(x), fd, 1e-8);
  }
}

TEST(Mse, Examples) {
  Tensor<double> p({2}, {1.0, 2.0}), t({2}, {2.0, 4.0});
  EXPECT_EQ(mse_loss(p, p).loss, 0.0);
  auto r = mse_loss(p, t);
  EXPECT_DOUBLE_EQ(r.loss, 2.5);
  EXPECT_DOUBLE_EQ(r.grad[0], -1.0);
  EXPECT_DOUBLE_EQ(r.grad[1], -2.0);
}

TEST(Mse, CornerMaskReducesToOneCell) {
  Rng rng(14);
  auto p = random_tensor({3, 3}, rng), t = random_tensor({3, 3}, rng);
  std::vector<std::uint8_t> mask(9, 0);
  mask[8] = 1;
  auto r = mse_loss(p, t, &mask);
  EXPECT_DOUBLE_EQ(r.loss, (p[8] - t[8]) * (p[8] - t[8]));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(r.grad[i], 0.0);
  std::vector<std::uint8_t> none(9, 0);
  EXPECT_THROW(mse_loss(p, t, &none), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesValue) {
  Parameter<double> p(Tensor<double>({3}, 0.5));
  adam_step(p, {});
  for (double v : p.value.values()) EXPECT_EQ(v, 0.5);
  EXPECT_EQ(p.step_count, 1u);
}

TEST(Adam, FirstStepFromZero) {
  Parameter<double> p(Tensor<double>({1}));
  p.grad[0] = 1.0;
  adam_step(p, {});
  EXPECT_NEAR(p.value[0], -1e-3 / (1.0 + 1e-8), 1e-9);
}

TEST(Adam, WeightDecayShrinks) {
  Parameter<double> p(Tensor<double>({1}, 1.0));
  AdamOptions opt;
  opt.weight_decay = 0.01;
  adam_step(p, opt);
  EXPECT_LT(p.value[0], 1.0);
  EXPECT_NEAR(p.m[0], 0.1 * 0.01, 1e-15);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  Rng rng(15);
  Parameter<double> p(random_tensor({5}, rng));
  const auto before = p.value;
  AdamOptions opt;
  opt.lr = 0.0;
  opt.weight_decay = 0.01;
  for (int s = 0; s < 20; ++s) {
    p.grad = random_tensor({5}, rng);
    adam_step(p, opt);
  }
  EXPECT_EQ(p.value, before);
  opt.lr = -1.0;
  EXPECT_THROW(adam_step(p, opt), std::invalid_argument);
}

TEST(GradCheck, LinearMapIsExact) {
  Rng rng(16);
  auto theta = random_tensor({6}, rng);
  auto c = random_tensor({6}, rng);
  auto fn = [&] { return weighted_sum(theta, c); };
  std::vector<Tensor<double>*> params{&theta};
  std::vector<Tensor<double>> analytic{c};
  EXPECT_LT(grad_check(fn, params, analytic), 1e-10);
}

TEST(GradCheck, DetectsWrongGradient) {
  auto theta = Tensor<double>({1}, 2.0);
  auto fn = [&] { return theta[0] * theta[0]; };
  std::vector<Tensor<double>*> params{&theta};
  std::vector<Tensor<double>> wrong{Tensor<double>({1}, 1.0)};
  EXPECT_GT(grad_check(fn, params, wrong), 0.5);
  auto nan_fn = [&] { return std::nan(""); };
  std::vector<Tensor<double>> right{Tensor<double>({1}, 4.0)};
  EXPECT_THROW(grad_check(nan_fn, params, right), std::runtime_error);
}
