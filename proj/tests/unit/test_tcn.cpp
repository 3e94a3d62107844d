#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "socialgrid/tcn.hpp"

using namespace socialgrid;

namespace {

Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.storage()) v = rng.uniform(lo, hi);
  return t;
}

template <typename T>
std::map<std::string, Parameter<T>*> by_name(std::vector<NamedParameter<T>> ps) {
  std::map<std::string, Parameter<T>*> m;
  for (auto& p : ps) m[p.name] = p.param;
  return m;
}

void randomize(TCNStack<double>& s, Rng& rng) {
  s.init_weights(rng);
  for (auto& p : s.parameters()) {
    if (p.name.find("conv.weight") != std::string::npos || p.name.find("proj.weight") != std::string::npos) continue;
    for (auto& v : p.param->value.storage()) v += rng.uniform(-0.2, 0.2);
  }
  for (auto& [name, buf] : s.buffers()) {
    const bool var = name.find("running_var") != std::string::npos;
    for (auto& v : buf->storage()) v = var ? rng.uniform(0.5, 2.0) : rng.uniform(-0.5, 0.5);
  }
}

double weighted_sum(const Tensor<double>& y, const Tensor<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

double stack_grad_error(TCNStack<double>& s, const Tensor<double>& x_in, Mode mode, Rng& rng) {
  Tensor<double> x = x_in;
  typename TCNStack<double>::Cache cache;
  const auto y = s.forward_frozen(x, mode, &cache);
  const auto w = random_tensor(y.shape(), rng);
  auto params = s.parameters();
  for (auto& p : params) p.param->zero_grad();
  const auto dx = s.backward(cache, w);
  std::vector<Tensor<double>*> ptrs{&x};
  std::vector<Tensor<double>> analytic{dx};
  for (auto& p : params) {
    ptrs.push_back(&p.param->value);
    analytic.push_back(p.param->grad);
  }
  auto fn = [&] { return weighted_sum(s.forward_frozen(x, mode), w); };
  return grad_check(fn, ptrs, analytic);
}

}  // namespace

TEST(Block, ZeroWeightIsIdentityOnNonNegatives) {
  TemporalBlock<double> b(BlockConfig{3, 3, 3, 3, 2});
  Rng rng(31);
  auto x = random_tensor({2, 3, 5, 5}, rng, 0.0, 4.0);
  EXPECT_EQ(b.infer(x), x);
  EXPECT_EQ(b.forward(x, Mode::Train), x);
}

TEST(Block, HandTrace) {
  TemporalBlock<double> b(BlockConfig{1, 1, 1, 1, 1});
  auto p = by_name(b.parameters(""));
  p["conv.weight"]->value[0] = 0.5;
  p["conv.bias"]->value[0] = -2.0;
  p["bn.gamma"]->value[0] = 2.0;
  p["bn.beta"]->value[0] = 0.5;
  p["prelu1.slope"]->value[0] = 0.1;
  p["prelu2.slope"]->value[0] = 0.3;
  Tensor<double> x({1, 1, 1, 1}, {2.0});
  // conv: 0.5*2 - 2 = -1; eval norm: 2 * (-1 - 0)/sqrt(1 + 1e-5) + 0.5; prelu1; + x; prelu2
  const double normed = 2.0 * (-1.0) / std::sqrt(1.0 + 1e-5) + 0.5;
  const double act = normed > 0 ? normed : 0.1 * normed;
  const double sum = act + 2.0;
  const double expect = sum > 0 ? sum : 0.3 * sum;
  EXPECT_NEAR(b.infer(x)[0], expect, 1e-12);
  x[0] = -8.0;
  const double normed2 = 2.0 * (0.5 * -8.0 - 2.0) / std::sqrt(1.0 + 1e-5) + 0.5;
  const double sum2 = 0.1 * normed2 - 8.0;
  EXPECT_NEAR(b.infer(x)[0], 0.3 * sum2, 1e-12);
}

TEST(Block, ProjectionOnlyOnChannelChange) {
  TemporalBlock<float> same(BlockConfig{4, 4, 3, 3, 1});
  TemporalBlock<float> diff(BlockConfig{3, 4, 3, 3, 1});
  EXPECT_FALSE(same.has_projection());
  EXPECT_TRUE(diff.has_projection());
  auto names = [](auto ps) {
    std::vector<std::string> n;
    for (auto& p : ps) n.push_back(p.name);
    return n;
  };
  auto dn = names(diff.parameters(""));
  EXPECT_NE(std::find(dn.begin(), dn.end(), "proj.weight"), dn.end());
  auto sn = names(same.parameters(""));
  EXPECT_EQ(std::find(sn.begin(), sn.end(), "proj.weight"), sn.end());
  EXPECT_THROW(TemporalBlock<float>(BlockConfig{1, 1, 3, 3, 0}), std::invalid_argument);
}

TEST(Block, TrainModeUpdatesRunningStats) {
  TCNStack<double> s({BlockConfig{1, 2, 2, 2, 1}});
  Rng rng(32);
  s.init_weights(rng);
  auto before = *s.buffers()[0].second;
  auto x = random_tensor({3, 1, 4, 4}, rng);
  s.forward_frozen(x, Mode::Train);
  EXPECT_EQ(*s.buffers()[0].second, before);
  s.forward(x, Mode::Train);
  EXPECT_NE(*s.buffers()[0].second, before);
}

TEST(Stack, EmptyIsIdentity) {
  TCNStack<double> s;
  Rng rng(33);
  auto x = random_tensor({1, 2, 3, 3}, rng);
  EXPECT_EQ(s.infer(x), x);
}

TEST(Stack, ZeroWeightBlocksComposeToIdentity) {
  TCNStack<double> s({BlockConfig{2, 2, 3, 3, 1}, BlockConfig{2, 2, 3, 3, 2}});
  Rng rng(34);
  auto x = random_tensor({1, 2, 6, 6}, rng, 0.0, 3.0);
  EXPECT_EQ(s.infer(x), x);
}

TEST(Stack, EqualsComposedBlocks) {
  TCNStack<double> s(default_block_configs(3, 4, 3, 3, 3));
  Rng rng(35);
  randomize(s, rng);
  auto x = random_tensor({2, 3, 9, 9}, rng);
  Tensor<double> h = x;
  for (std::size_t l = 0; l < s.size(); ++l) h = s.block(l).infer(h);
  EXPECT_EQ(s.infer(x), h);
}

TEST(Stack, RejectsBadChaining) {
  EXPECT_THROW(TCNStack<float>({BlockConfig{1, 4, 3, 3, 1}, BlockConfig{3, 4, 3, 3, 2}}), std::invalid_argument);
  TCNStack<double> s({BlockConfig{2, 2, 3, 3, 1}});
  EXPECT_THROW(s.infer(Tensor<double>({1, 3, 4, 4})), std::invalid_argument);
}

TEST(Stack, DefaultDilationsDouble) {
  auto cfg = default_block_configs(3, 16, 3, 3, 5);
  for (std::size_t l = 0; l < cfg.size(); ++l) EXPECT_EQ(cfg[l].tau, std::size_t{1} << l);
  EXPECT_EQ(cfg[0].c_in, 3u);
  EXPECT_EQ(cfg[1].c_in, 16u);
}

TEST(StackBackward, BlockFiniteDifferences) {
  Rng rng(36);
  for (Mode mode : {Mode::Train, Mode::Eval}) {
    TCNStack<double> s({BlockConfig{2, 3, 2, 3, 2}});
    randomize(s, rng);
    auto x = random_tensor({2, 2, 5, 5}, rng);
    EXPECT_LT(stack_grad_error(s, x, mode, rng), 1e-4);
  }
}

TEST(StackBackward, ThreeBlockFiniteDifferences) {
  Rng rng(37);
  TCNStack<double> s(default_block_configs(3, 4, 3, 3, 3));
  randomize(s, rng);
  auto x = random_tensor({2, 3, 6, 6}, rng);
  EXPECT_LT(stack_grad_error(s, x, Mode::Train, rng), 1e-4);
}

TEST(ReceptiveField, Formula) {
  EXPECT_EQ(receptive_field(3, {1}).area, 9u);
  EXPECT_EQ(receptive_field(3, {1, 2}).per_axis, 7u);
  EXPECT_EQ(receptive_field(3, {1, 2}).area, 49u);
  EXPECT_EQ(receptive_field(2, {1, 2, 4}).per_axis, 8u);
  EXPECT_EQ(receptive_field(2, {1, 2, 4}).area, 64u);
  EXPECT_EQ(receptive_extent(3, 1, {1, 2}), (std::pair<std::size_t, std::size_t>{7, 1}));
  // r_1 - 1 is linear in the dilation
  for (std::size_t k : {2, 3, 5})
    EXPECT_EQ(receptive_field(k, {2}).per_axis - 1, 2 * (receptive_field(k, {1}).per_axis - 1));
}

TEST(Causality, PointwiseKernel) {
  TCNStack<double> s({BlockConfig{1, 1, 1, 1, 1}});
  Rng rng(38);
  s.init_weights(rng);
  auto inf = causality_probe(s, 1, 6, 6, Cell{3, 4});
  ASSERT_EQ(inf.size(), 1u);
  EXPECT_EQ(inf[0], (Cell{3, 4}));
}

TEST(Causality, OriginCell) {
  TCNStack<double> s(default_block_configs(2, 3, 3, 3, 2));
  Rng rng(39);
  s.init_weights(rng);
  for (auto c : causality_probe(s, 2, 8, 8, Cell{0, 0})) EXPECT_EQ(c, (Cell{0, 0}));
}

TEST(Causality, BoundingBoxMatchesFormula) {
  for (std::size_t k : {2, 3, 5})
    for (std::size_t L : {1, 2, 3}) {
      TCNStack<double> s(default_block_configs(2, 3, k, k, L));
      Rng rng(40 + k * 10 + L);
      s.init_weights(rng);
      const auto r = static_cast<std::int64_t>(receptive_field(k, dilations_of(s)).per_axis);
      const Cell cell{r + 3, r + 2};
      const auto inf = causality_probe(s, 2, static_cast<std::size_t>(r + 6), static_cast<std::size_t>(r + 6), cell);
      std::int64_t min_r = cell.row, min_c = cell.col, max_r = 0, max_c = 0;
      for (auto c : inf) {
        EXPECT_LE(c.row, cell.row);
        EXPECT_LE(c.col, cell.col);
        min_r = std::min(min_r, c.row);
        min_c = std::min(min_c, c.col);
        max_r = std::max(max_r, c.row);
        max_c = std::max(max_c, c.col);
      }
      EXPECT_EQ(max_r, cell.row);
      EXPECT_EQ(max_c, cell.col);
      EXPECT_EQ(cell.row - min_r + 1, r) << "k=" << k << " L=" << L;
      EXPECT_EQ(cell.col - min_c + 1, r) << "k=" << k << " L=" << L;
    }
}

TEST(Causality, Kx1StackStaysInColumn) {
  TCNStack<double> s(default_block_configs(1, 2, 3, 1, 2));
  Rng rng(41);
  s.init_weights(rng);
  for (auto c : causality_probe(s, 1, 12, 5, Cell{10, 3})) EXPECT_EQ(c.col, 3);
}

TEST(Causality, PerturbationsBelowOrRightAreInvisible) {
  TCNStack<double> s(default_block_configs(3, 4, 3, 3, 3));
  Rng rng(42);
  randomize(s, rng);
  auto x = random_tensor({1, 3, 12, 12}, rng);
  const auto y = s.infer(x);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t i = rng.below(12), j = rng.below(12);
    const std::size_t pi = rng.below(12), pj = rng.below(12);
    if (pi <= i && pj <= j) continue;
    auto xp = x;
    xp(0, rng.below(3), pi, pj) += rng.uniform(-5.0, 5.0);
    const auto yp = s.infer(xp);
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(y(0, c, i, j), yp(0, c, i, j));
  }
}

TEST(Stack, CastPreservesOutputs) {
  TCNStack<float> s(default_block_configs(2, 3, 3, 3, 2));
  Rng rng(43);
  s.init_weights(rng);
  Tensor<float> x({1, 2, 5, 5});
  for (auto& v : x.storage()) v = static_cast<float>(rng.uniform());
  auto yf = s.infer(x);
  auto yd = s.cast<double>().infer(x.cast<double>());
  for (std::size_t i = 0; i < yf.size(); ++i) EXPECT_NEAR(yf[i], yd[i], 1e-5);
}
