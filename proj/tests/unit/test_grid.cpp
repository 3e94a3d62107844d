#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "socialgrid/grid.hpp"
#include "socialgrid/random.hpp"

using namespace socialgrid;

namespace {

EventStream random_stream(Rng& rng, std::size_t n_cascades, std::size_t n_events, double t0, double span) {
  std::vector<ThreadCascade> cs;
  for (std::size_t j = 0; j < n_cascades; ++j)
    cs.push_back({"c" + std::to_string(j), t0 + rng.uniform(0.0, span), {}});
  for (std::size_t e = 0; e < n_events; ++e) {
    auto& c = cs[rng.below(n_cascades)];
    c.reply_times.push_back(c.thread_time + rng.uniform(0.0, span));
  }
  return make_event_stream(cs);
}

// Counts, for every (row, column), the events inside [t0 + i d, t0 + (i+1) d)
// by testing each event against each interval.
Matrix<std::int64_t> counting_oracle(const EventStream& s, double d, double t0, std::size_t n_rows) {
  Matrix<std::int64_t> m(n_rows, s.size(), 0);
  for (std::size_t j = 0; j < s.size(); ++j) {
    std::vector<double> events{s.cascades[j].thread_time};
    events.insert(events.end(), s.cascades[j].reply_times.begin(), s.cascades[j].reply_times.end());
    for (std::size_t i = 0; i < n_rows; ++i) {
      const double lo = t0 + static_cast<double>(i) * d, hi = t0 + static_cast<double>(i + 1) * d;
      for (double t : events)
        if (t >= lo && t < hi) ++m(i, j);
    }
  }
  return m;
}

Grid small_grid() {
  // rows of 60 s; threads at rows 0, 2, 2, 5.
  auto s = make_event_stream({{"a", 10, {20, 70, 130, 400}},
                              {"b", 130, {150, 170}},
                              {"c", 170, {}},
                              {"d", 320, {330}}});
  return build_grid(s, 60.0, 0.0, 7);
}

}  // namespace

TEST(EventStream, CanonicalOrder) {
  auto s = make_event_stream({{"z", 5, {9, 6}}, {"b", 1, {}}, {"a", 5, {}}});
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.cascades[0].thread_id, "b");
  EXPECT_EQ(s.cascades[1].thread_id, "a");
  EXPECT_EQ(s.cascades[2].thread_id, "z");
  EXPECT_EQ(s.cascades[2].reply_times, (std::vector<double>{6, 9}));
  EXPECT_THROW(make_event_stream({{"x", 5, {4}}}), std::invalid_argument);
}

TEST(BuildGrid, TwelveEventsInOneInterval) {
  std::vector<double> replies;
  for (int k = 0; k < 11; ++k) replies.push_back(600.0 + 20.0 * k);
  auto g = build_grid(make_event_stream({{"t", 600.0, replies}}), 300.0, 0.0, 4);
  EXPECT_EQ(g.counts(2, 0), 12);
}

TEST(BuildGrid, SingleThread) {
  auto g = build_grid(make_event_stream({{"t", 0.0, {}}}), 300.0, 0.0, 1);
  EXPECT_EQ(g.counts(0, 0), 1);
  EXPECT_EQ(g.mask(0, 0), 0);
}

TEST(BuildGrid, MatchesCountingOracle) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const double d = rng.uniform(1.0, 100.0), t0 = rng.uniform(-1000.0, 1000.0);
    auto s = random_stream(rng, 3, 50, t0, 20.0 * d);
    const std::size_t rows = 1 + rng.below(30);
    auto g = build_grid(s, d, t0, rows);
    EXPECT_EQ(g.counts, counting_oracle(s, d, t0, rows));
  }
}

TEST(BuildGrid, Invariants) {
  Rng rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    auto s = random_stream(rng, 1 + rng.below(6), rng.below(80), 0.0, 2000.0);
    const double d = rng.uniform(10.0, 400.0);
    const std::size_t rows = 1 + rng.below(20);
    auto g = build_grid(s, d, 0.0, rows);
    std::size_t kept = 0, total = 0;
    for (std::size_t j = 0; j < g.cols(); ++j) {
      std::int64_t sum = 0;
      for (std::size_t i = 0; i < rows; ++i) {
        EXPECT_EQ(g.mask(i, j), static_cast<std::int64_t>(i) < g.arrival_rows[j] ? 1 : 0);
        if (g.mask(i, j)) EXPECT_EQ(g.counts(i, j), 0);
        sum += g.counts(i, j);
      }
      if (g.arrival_rows[j] < static_cast<std::int64_t>(rows)) {
        EXPECT_GE(g.counts(static_cast<std::size_t>(g.arrival_rows[j]), j), 1);
      }
      std::int64_t in_window = s.cascades[j].thread_time < static_cast<double>(rows) * d ? 1 : 0;
      for (double t : s.cascades[j].reply_times)
        if (t < static_cast<double>(rows) * d) ++in_window;
      EXPECT_EQ(sum, in_window);
      kept += static_cast<std::size_t>(sum);
      total += 1 + s.cascades[j].reply_times.size();
    }
    EXPECT_EQ(kept + g.dropped_events, total);
  }
}

TEST(BuildGrid, BoundaryEventLandsInLaterInterval) {
  auto g = build_grid(make_event_stream({{"t", 0.0, {300.0, 599.999, 600.0}}}), 300.0, 0.0, 3);
  EXPECT_EQ(g.counts(0, 0), 1);
  EXPECT_EQ(g.counts(1, 0), 2);
  EXPECT_EQ(g.counts(2, 0), 1);
  // non-representable boundaries: t0 + i d computed in floating point
  const double d = 0.1;
  auto g2 = build_grid(make_event_stream({{"t", 0.0, {3 * d}}}), d, 0.0, 5);
  EXPECT_EQ(g2.counts(3, 0), 1);
}

TEST(BuildGrid, Errors) {
  auto s = make_event_stream({{"t", 10.0, {}}});
  EXPECT_THROW(build_grid(s, 0.0, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(build_grid(s, -1.0, 0.0, 1), std::invalid_argument);
  EXPECT_THROW(build_grid(s, 60.0, 11.0, 1), std::invalid_argument);
  EXPECT_THROW(build_grid(EventStream{}, 60.0, 0.0, 1), std::invalid_argument);
}

TEST(BuildGrid, DropsEventsPastWindow) {
  auto g = build_grid(make_event_stream({{"t", 0.0, {10, 700, 900}}}), 300.0, 0.0, 2);
  EXPECT_EQ(g.dropped_events, 2u);
  EXPECT_EQ(g.counts(0, 0), 2);
}

TEST(RelativeTime, Examples) {
  auto g = build_grid(make_event_stream({{"a", 0.0, {}}, {"b", 600.0, {}}, {"c", 1500.0, {}}, {"d", 5000.0, {}}}),
                      300.0, 0.0, 6);
  auto rel = relative_time_channel(g);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_DOUBLE_EQ(rel(i, 1), i < 2 ? 0.0 : (static_cast<double>(i) - 2) / 3);
    EXPECT_EQ(rel(i, 2), 0.0);  // arrival at the last row
    EXPECT_EQ(rel(i, 3), 0.0);  // arrival past the window
  }
}

TEST(RelativeTime, ArrivalAtRowTwoOfSix) {
  auto g = build_grid(make_event_stream({{"b", 600.0, {}}}), 300.0, 0.0, 6);
  auto rel = relative_time_channel(g);
  // rows 0..5 with the arrival at row 2: raw 0,0,0,1,2,3 over max 3
  const std::vector<double> expect{0, 0, 0, 1.0 / 3, 2.0 / 3, 1};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(rel(i, 0), expect[i]);
}

TEST(RelativeTime, BoundedAndMonotone) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = build_grid(random_stream(rng, 5, 40, 0.0, 3000.0), 200.0, 0.0, 1 + rng.below(25));
    auto rel = relative_time_channel(g);
    for (std::size_t j = 0; j < g.cols(); ++j)
      for (std::size_t i = 0; i < g.rows(); ++i) {
        EXPECT_GE(rel(i, j), 0.0);
        EXPECT_LE(rel(i, j), 1.0);
        if (g.mask(i, j)) EXPECT_EQ(rel(i, j), 0.0);
        if (i > 0 && !g.mask(i - 1, j)) EXPECT_GE(rel(i, j), rel(i - 1, j));
      }
  }
}

TEST(Features, ChannelSets) {
  auto g = small_grid();
  auto s = assemble_features(g, {Channel::Counts});
  ASSERT_EQ(s.data.shape(), (Shape{1, 7, 4}));
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(s.data(0, i, j), static_cast<double>(g.counts(i, j)));
  auto full = assemble_features(g, all_channels());
  auto rel = relative_time_channel(g);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(full.data(2, i, j), static_cast<double>(g.mask(i, j)));
      EXPECT_EQ(full.data(1, i, j), rel(i, j));
    }
  EXPECT_THROW(assemble_features(g, {Channel::RelTime}), std::invalid_argument);
  EXPECT_THROW(assemble_features(g, {Channel::Counts, Channel::Mask, Channel::RelTime}), std::invalid_argument);
  EXPECT_EQ(parse_channel_set("M"), (ChannelSet{Channel::Counts, Channel::RelTime}));
  EXPECT_EQ(channel_set_name(all_channels()), "full");
  EXPECT_THROW(parse_channel_set("X"), std::invalid_argument);
}

TEST(Pad, Examples) {
  Matrix<int> one(1, 1, 1);
  EXPECT_EQ(pad_top_left(one, 0, 0), one);
  auto p = pad_top_left(one, 1, 1);
  EXPECT_EQ(p(0, 0), 0);
  EXPECT_EQ(p(0, 1), 0);
  EXPECT_EQ(p(1, 0), 0);
  EXPECT_EQ(p(1, 1), 1);
}

TEST(Pad, PositionalOracleAndComposition) {
  Rng rng(24);
  Matrix<double> m(4, 5, 0.0);
  for (auto& v : m.storage()) v = rng.uniform(1.0, 2.0);
  auto p = pad_top_left(m, 2, 3);
  ASSERT_EQ(p.rows(), 6u);
  ASSERT_EQ(p.cols(), 8u);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      if (i >= 2 && j >= 3) {
        EXPECT_EQ(p(i, j), m(i - 2, j - 3));
      } else {
        EXPECT_EQ(p(i, j), 0.0);
        ++zeros;
      }
    }
  EXPECT_EQ(zeros, 28u);
  EXPECT_EQ(pad_top_left(pad_top_left(m, 1, 2), 3, 1), pad_top_left(m, 4, 3));
}

TEST(ZerosGap, Examples) {
  auto same = build_grid(make_event_stream({{"a", 10, {}}, {"b", 50, {}}}), 60.0, 0.0, 2);
  EXPECT_EQ(zeros_gap(same, 0), 0);
  auto two = build_grid(make_event_stream({{"a", 10, {}}, {"b", 130, {}}}), 60.0, 0.0, 3);
  EXPECT_EQ(zeros_gap(two, 0), 2);
  Grid g;
  g.spec.n_cols = 2;
  g.arrival_rows = {5, 9};
  EXPECT_EQ(zeros_gap(g, 0), 4);
  EXPECT_THROW(zeros_gap(g, 1), std::out_of_range);
}

TEST(ZerosGap, Telescopes) {
  Rng rng(25);
  auto g = build_grid(random_stream(rng, 12, 30, 0.0, 5000.0), 120.0, 0.0, 50);
  std::int64_t sum = 0;
  for (std::size_t j = 0; j + 1 < g.cols(); ++j) sum += zeros_gap(g, j);
  EXPECT_EQ(sum, g.arrival_rows.back() - g.arrival_rows.front());
}

TEST(Window, CropMatchesDirectWindow) {
  Rng rng(26);
  auto g = build_grid(random_stream(rng, 9, 120, 0.0, 3000.0), 150.0, 0.0, 25);
  auto f = assemble_features(g, all_channels());
  for (int trial = 0; trial < 40; ++trial) {
    const Cell anchor{static_cast<std::int64_t>(rng.below(25)), static_cast<std::int64_t>(rng.below(9))};
    EXPECT_EQ(crop_window(f, anchor, 6, 4), window_features(g, all_channels(), anchor, 6, 4));
  }
}

TEST(Slice, Examples) {
  auto one_row = build_grid(make_event_stream({{"a", 0, {}}, {"b", 10, {}}}), 60.0, 0.0, 1);
  auto f1 = assemble_features(one_row, all_channels());
  EXPECT_TRUE(slice_segments(f1, 3, 3, 1, TargetKind::NextRow, one_row).empty());
  auto segs = slice_segments(f1, 3, 3, 1, TargetKind::ThreadGap, one_row);
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].gap, static_cast<double>(zeros_gap(one_row, 0)));
  EXPECT_THROW(slice_segments(f1, 0, 3, 1, TargetKind::NextRow, one_row), std::invalid_argument);
}

TEST(Slice, NextRowTargetsReassembleCounts) {
  Rng rng(27);
  auto g = build_grid(random_stream(rng, 11, 150, 0.0, 2000.0), 100.0, 0.0, 18);
  auto f = assemble_features(g, all_channels());
  for (std::size_t w : {3u, 11u, 15u}) {
    auto segs = slice_segments(f, 4, w, 2, TargetKind::NextRow, g);
    Matrix<std::int64_t> rebuilt(g.rows(), g.cols(), -1);
    for (const auto& s : segs) {
      const std::int64_t left = s.anchor.col - static_cast<std::int64_t>(w) + 1;
      for (std::size_t j = 0; j < w; ++j) {
        const std::int64_t c = left + static_cast<std::int64_t>(j);
        if (c < 0) continue;
        rebuilt(static_cast<std::size_t>(s.anchor.row + 1), static_cast<std::size_t>(c)) =
            static_cast<std::int64_t>(s.next_row[j]);
      }
      // the target row never appears inside the features
      EXPECT_EQ(s.features.dim(1), 4u);
    }
    for (std::size_t i = 1; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) EXPECT_EQ(rebuilt(i, j), g.counts(i, j));
  }
}

TEST(Slice, ThreadSegmentsAnchorAtArrival) {
  auto g = small_grid();
  auto f = assemble_features(g, all_channels());
  auto segs = slice_segments(f, 3, 3, 1, TargetKind::ThreadGap, g);
  ASSERT_EQ(segs.size(), 3u);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(segs[j].anchor, (Cell{g.arrival_rows[j], static_cast<std::int64_t>(j)}));
    EXPECT_EQ(segs[j].gap, static_cast<double>(g.arrival_rows[j + 1] - g.arrival_rows[j]));
    EXPECT_EQ(segs[j].features.shape(), (Shape{3, 3, 3}));
  }
}
