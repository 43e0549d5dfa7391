#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "ssmt/error.hpp"
#include "ssmt/random.hpp"
#include "ssmt/tasks.hpp"

using namespace ssmt;
using namespace ssmt::tasks;

namespace {

template <class F>
Errc error_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::InvalidArgument;
}

std::vector<double> uniform_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform();
  return v;
}

}  // namespace

TEST(BuildBins, EqualWidthUnitRange) {
  const std::vector<double> values{0.0, 0.1, 0.6, 1.0};
  const auto s = build_bins(values, 4, BinStrategy::EqualWidth);
  const std::vector<double> expected{0.0, 0.25, 0.5, 0.75, 1.0};
  ASSERT_EQ(s.count(), 4);
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_DOUBLE_EQ(s.edges()[i], expected[i]);
}

TEST(BuildBins, EqualFrequencySixValues) {
  const std::vector<double> values{4, 1, 6, 3, 5, 2};
  const auto s = build_bins(values, 3, BinStrategy::EqualFrequency);
  ASSERT_EQ(s.count(), 3);
  // Sort-and-slice oracle: bins {1,2},{3,4},{5,6}.
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    EXPECT_EQ(assign_bin(sorted[i], s), static_cast<int>(i / 2)) << "value " << sorted[i];
  }
  EXPECT_DOUBLE_EQ(s.edges().front(), 1.0);
  EXPECT_DOUBLE_EQ(s.edges().back(), 6.0);
}

TEST(BuildBins, Errors) {
  EXPECT_EQ(error_of([] { build_bins(std::vector<double>{}, 3, BinStrategy::EqualWidth); }), Errc::EmptyInput);
  EXPECT_EQ(error_of([] { build_bins(std::vector<double>{2, 2, 2}, 2, BinStrategy::EqualWidth); }),
            Errc::DegenerateRange);
  EXPECT_EQ(error_of([] { build_bins(std::vector<double>{1, 1, 2, 2}, 3, BinStrategy::EqualFrequency); }),
            Errc::TooFewDistinct);
  EXPECT_EQ(error_of([] { build_bins(std::vector<double>{1, 2, 3}, 1, BinStrategy::EqualWidth); }),
            Errc::InvalidArgument);
}

TEST(BuildBins, ManyBinsOnSkewedValuesLeaveSomeEmpty) {
  // A skewed index binned into 50 equal-width buckets leaves gaps.
  Rng rng(3);
  std::vector<double> v(2000);
  for (auto& x : v) x = std::exp(3.0 * rng.normal());
  const auto s = build_bins(v, 50, BinStrategy::EqualWidth);
  const auto occ = bin_occupancy(v, s);
  EXPECT_GT(std::count(occ.begin(), occ.end(), 0), 0);
}

TEST(AssignBin, Examples) {
  const BinningScheme s({0.0, 0.25, 0.5, 0.75, 1.0});
  EXPECT_EQ(assign_bin(0.3, s), 1);
  EXPECT_EQ(assign_bin(1.0, s), 3);
  EXPECT_EQ(assign_bin(-5.0, s), 0);
  EXPECT_EQ(assign_bin(7.0, s), 3);
  EXPECT_EQ(assign_bin(0.25, s), 1);
  EXPECT_EQ(error_of([&] { assign_bin(std::numeric_limits<double>::quiet_NaN(), s); }), Errc::NonFiniteValue);
  EXPECT_EQ(error_of([&] { assign_bin(std::numeric_limits<double>::infinity(), s); }), Errc::NonFiniteValue);
}

TEST(AssignBin, MonotoneProperty) {
  const auto values = uniform_values(500, 11);
  const auto s = build_bins(values, 7, BinStrategy::EqualFrequency);
  auto grid = uniform_values(2000, 12);
  for (auto& g : grid) g = g * 1.4 - 0.2;
  std::sort(grid.begin(), grid.end());
  for (std::size_t i = 1; i < grid.size(); ++i) EXPECT_LE(assign_bin(grid[i - 1], s), assign_bin(grid[i], s));
}

TEST(BinningScheme, RejectsNonIncreasingEdges) {
  EXPECT_EQ(error_of([] { BinningScheme({0.0, 0.5, 0.5}); }), Errc::InvalidArgument);
  EXPECT_EQ(error_of([] { BinningScheme({0.0, 1.0}); }), Errc::InvalidArgument);
}

TEST(BinOccupancy, PointMass) {
  const BinningScheme s({0.0, 1.0, 2.0, 3.0});
  const std::vector<double> v(100, 0.5);
  const auto occ = bin_occupancy(v, s);
  EXPECT_EQ(occ, (std::vector<std::int64_t>{100, 0, 0}));
}

TEST(BinOccupancy, EmptyInputAllZeros) {
  const BinningScheme s({0.0, 1.0, 2.0});
  EXPECT_EQ(bin_occupancy(std::vector<double>{}, s), (std::vector<std::int64_t>{0, 0}));
}

TEST(BinOccupancy, UniformWithinBinomialBound) {
  const auto v = uniform_values(1000, 5);
  const BinningScheme s({0, .1, .2, .3, .4, .5, .6, .7, .8, .9, 1.0});
  const auto occ = bin_occupancy(v, s);
  const double sigma = std::sqrt(1000 * 0.1 * 0.9);
  EXPECT_EQ(std::accumulate(occ.begin(), occ.end(), std::int64_t{0}), 1000);
  for (auto c : occ) EXPECT_LE(std::abs(static_cast<double>(c) - 100.0), 3 * sigma);
}

TEST(BinOccupancy, EqualFrequencyIsBalancedWhenDivisible) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const int count = 2 + static_cast<int>(rng.below(9));
    const auto v = uniform_values(static_cast<std::size_t>(count) * (5 + rng.below(40)), seed + 100);
    const auto s = build_bins(v, count, BinStrategy::EqualFrequency);
    const auto occ = bin_occupancy(v, s);
    const auto [lo, hi] = std::minmax_element(occ.begin(), occ.end());
    EXPECT_LE(*hi - *lo, 1) << "seed " << seed;
  }
}

TEST(ComputeWeights, Examples) {
  const std::vector<TaskSpec> t{{"a", BinningScheme({0, 1, 2, 3}), 1.0}};
  auto w = compute_weights(t, {{"a", {2, 1, 1}}});
  EXPECT_EQ(w.per_task.at("a"), (std::vector<double>{1.0, 2.0, 2.0}));

  w = compute_weights(t, {{"a", {64031, 20050, 14639}}});
  EXPECT_DOUBLE_EQ(w.weight("a", 0), 1.0);
  EXPECT_NEAR(w.weight("a", 1), 3.19356608478803, 1e-12);
  EXPECT_NEAR(w.weight("a", 2), 4.37400095634948, 1e-12);

  const std::vector<TaskSpec> zero{{"a", BinningScheme({0, 1, 2, 3}), 0.0}};
  w = compute_weights(zero, {{"a", {5, 3, 1}}});
  EXPECT_EQ(w.per_task.at("a"), (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(ComputeWeights, ZeroCountClassAndErrors) {
  const std::vector<TaskSpec> t{{"a", BinningScheme({0, 1, 2, 3}), 2.0}};
  const auto w = compute_weights(t, {{"a", {4, 0, 2}}});
  EXPECT_EQ(w.per_task.at("a"), (std::vector<double>{2.0, 0.0, 4.0}));
  EXPECT_EQ(error_of([&] { compute_weights(t, {{"a", {0, 0, 0}}}); }), Errc::AllEmptyTask);
  EXPECT_EQ(error_of([&] { compute_weights(t, {{"a", {1, -1, 0}}}); }), Errc::InvalidArgument);
}

TEST(ComputeWeights, EqualMassAndScalingProperties) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TaskSpec> t;
    std::map<std::string, std::vector<std::int64_t>> counts;
    for (int k = 0; k < 3; ++k) {
      const std::string name = "t" + std::to_string(k);
      const int classes = 2 + static_cast<int>(rng.below(6));
      std::vector<double> edges(static_cast<std::size_t>(classes) + 1);
      std::iota(edges.begin(), edges.end(), 0.0);
      t.push_back({name, BinningScheme(edges), rng.uniform(0.1, 3.0)});
      std::vector<std::int64_t> c(static_cast<std::size_t>(classes));
      for (auto& x : c) x = static_cast<std::int64_t>(rng.below(100000));
      c[0] += 1;
      counts[name] = c;
    }
    const auto w = compute_weights(t, counts);
    for (const auto& spec : t) {
      const auto& c = counts.at(spec.name);
      const double mass0 = w.weight(spec.name, 0) * static_cast<double>(c[0]);
      for (std::size_t k = 0; k < c.size(); ++k) {
        if (c[k] == 0) continue;
        EXPECT_NEAR(w.weight(spec.name, static_cast<int>(k)) * static_cast<double>(c[k]), mass0, 1e-12 * mass0);
      }
    }
    auto scaled = t;
    const double factor = rng.uniform(0.5, 4.0);
    for (auto& s : scaled) s.importance *= factor;
    const auto ws = compute_weights(scaled, counts);
    for (const auto& spec : t) {
      for (std::size_t k = 0; k < counts.at(spec.name).size(); ++k) {
        const double a = w.weight(spec.name, static_cast<int>(k)) * factor;
        EXPECT_NEAR(ws.weight(spec.name, static_cast<int>(k)), a, 1e-12 * std::max(1.0, a));
      }
    }
  }
}

TEST(TaskSet, Validation) {
  const BinningScheme s({0, 1, 2});
  EXPECT_NO_THROW(validate_task_set(std::vector<TaskSpec>{{"a", s, 1.0}, {"b", s, 0.0}}));
  EXPECT_EQ(error_of([&] { validate_task_set(std::vector<TaskSpec>{{"a", s, 1.0}, {"a", s, 1.0}}); }),
            Errc::InvalidArgument);
  EXPECT_EQ(error_of([&] { validate_task_set(std::vector<TaskSpec>{{"a", s, -1.0}}); }), Errc::InvalidArgument);
}

TEST(BinStrategy, ParseRoundTrip) {
  EXPECT_EQ(parse_bin_strategy("equal-width"), BinStrategy::EqualWidth);
  EXPECT_EQ(parse_bin_strategy(to_string(BinStrategy::EqualFrequency)), BinStrategy::EqualFrequency);
  EXPECT_EQ(error_of([] { parse_bin_strategy("quantile"); }), Errc::BadConfigValue);
}
