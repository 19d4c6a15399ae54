#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "mag/partition.hpp"

namespace {

using mag::Method;
using mag::OrderSpec;
using mag::Side;
using mag::StepSpec;

mag::Partition two(StepSpec a, StepSpec b, int q = 1) {
  std::vector<StepSpec> s{std::move(a), std::move(b)};
  std::vector<OrderSpec> o{q, q};
  std::vector<Method> m{Method::mcG, Method::mcG};
  return mag::build_partition(s, o, 1.0, m);
}

TEST(Partition, ConstantStep) {
  std::vector<Method> m{Method::mcG};
  const auto p = mag::uniform_partition(1, 0.1, 1, 1.0, m);
  EXPECT_EQ(p.intervals(0), 10u);
  EXPECT_EQ(p.grid(0).breakpoints.front(), 0.0);
  EXPECT_EQ(p.grid(0).breakpoints.back(), 1.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < p.intervals(0); ++j) {
    EXPECT_GT(p.step(0, j), 0.0);
    sum += p.step(0, j);
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Partition, IncommensurateSteps) {
  const auto p = two(0.5, 1.0 / 3.0);
  EXPECT_EQ(p.intervals(0), 2u);
  EXPECT_EQ(p.intervals(1), 3u);
  const auto levels = mag::synchronized_levels(p);
  EXPECT_EQ(levels, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(mag::build_slabs(p).size(), 1u);
}

TEST(Partition, NestedSteps) {
  const auto p = two(0.5, 0.25);
  EXPECT_EQ(mag::synchronized_levels(p), (std::vector<double>{0.0, 0.5, 1.0}));
  const auto slabs = mag::build_slabs(p);
  ASSERT_EQ(slabs.size(), 2u);
  EXPECT_EQ(slabs[0].t_end, 0.5);
  EXPECT_EQ(slabs[0].ranges[0], (std::pair<std::size_t, std::size_t>{0, 1}));
  EXPECT_EQ(slabs[0].ranges[1], (std::pair<std::size_t, std::size_t>{0, 2}));
  EXPECT_EQ(slabs[1].ranges[1], (std::pair<std::size_t, std::size_t>{2, 4}));
}

TEST(Partition, SingleComponentOneSlabPerInterval) {
  std::vector<Method> m{Method::mdG};
  const auto p = mag::uniform_partition(1, 0.125, 0, 1.0, m);
  const auto slabs = mag::build_slabs(p);
  ASSERT_EQ(slabs.size(), 8u);
  for (std::size_t s = 0; s < slabs.size(); ++s) {
    EXPECT_EQ(slabs[s].ranges[0].first, s);
    EXPECT_EQ(slabs[s].ranges[0].second, s + 1);
  }
}

TEST(Partition, IrrationalRatioGivesOneSlab) {
  const auto p = two(0.1, 0.1 * std::sqrt(2.0));
  EXPECT_EQ(mag::build_slabs(p).size(), 1u);
}

TEST(Partition, SnapsNearlyEqualBreakpoints) {
  // 0.1 * 3 accumulates differently from 0.3; both should land on one level
  std::vector<StepSpec> s{std::vector<double>{0.1, 0.1, 0.1, 0.7}, std::vector<double>{0.3, 0.7}};
  std::vector<OrderSpec> o{1, 1};
  std::vector<Method> m{Method::mcG, Method::mdG};
  const auto p = mag::build_partition(s, o, 1.0, m);
  EXPECT_EQ(p.grid(0).breakpoints[3], p.grid(1).breakpoints[1]);
  EXPECT_EQ(mag::build_slabs(p).size(), 2u);

  mag::ComponentGrid a{{0.0, 0.5, 1.0}, {1, 1}};
  mag::ComponentGrid b{{0.0, 0.5 + 3e-13, 1.0 - 1e-13}, {1, 1}};
  const mag::Partition q(1.0, {a, b}, {});
  EXPECT_EQ(q.grid(1).breakpoints[1], 0.5);
  EXPECT_EQ(q.grid(1).breakpoints[2], 1.0);
}

TEST(Partition, FinalStepAdjustment) {
  std::vector<Method> m{Method::mcG};
  // 1/0.33 = 3.03: the last step stretches to land on T
  auto p = mag::uniform_partition(1, 0.33, 1, 1.0, m);
  EXPECT_EQ(p.intervals(0), 3u);
  EXPECT_EQ(p.grid(0).breakpoints.back(), 1.0);
  // 1/0.3 = 3.33: remainder 0.4 is split in two
  p = mag::uniform_partition(1, 0.3, 1, 1.0, m);
  ASSERT_EQ(p.intervals(0), 4u);
  EXPECT_NEAR(p.step(0, 2), 0.2, 1e-15);
  EXPECT_NEAR(p.step(0, 3), 0.2, 1e-15);
}

TEST(Partition, StepFunction) {
  std::vector<StepSpec> s{std::function<double(double)>([](double t) { return t < 0.5 ? 0.1 : 0.25; })};
  std::vector<OrderSpec> o{2};
  std::vector<Method> m{Method::mcG};
  const auto p = mag::build_partition(s, o, 1.0, m);
  EXPECT_EQ(p.intervals(0), 7u);
  EXPECT_EQ(p.grid(0).breakpoints.back(), 1.0);
}

TEST(Partition, Errors) {
  std::vector<Method> cg{Method::mcG};
  std::vector<Method> dg{Method::mdG};
  EXPECT_THROW(mag::uniform_partition(1, -0.1, 1, 1.0, cg), std::invalid_argument);
  EXPECT_THROW(mag::uniform_partition(1, 0.0, 1, 1.0, cg), std::invalid_argument);
  EXPECT_THROW(mag::uniform_partition(1, 0.1, 0, 1.0, cg), std::invalid_argument);
  EXPECT_NO_THROW(mag::uniform_partition(1, 0.1, 0, 1.0, dg));
  EXPECT_THROW(mag::uniform_partition(1, 0.1, 13, 1.0, dg), std::invalid_argument);
  EXPECT_THROW(mag::uniform_partition(1, 0.1, 1, -1.0, dg), std::invalid_argument);
  std::vector<StepSpec> s{std::vector<double>{0.5, -0.1, 0.6}};
  std::vector<OrderSpec> o{1};
  EXPECT_THROW(mag::build_partition(s, o, 1.0, cg), std::invalid_argument);
  std::vector<OrderSpec> wrong{std::vector<int>{1, 1}};
  std::vector<StepSpec> s2{0.25};
  EXPECT_THROW(mag::build_partition(s2, wrong, 1.0, cg), std::invalid_argument);
}

TEST(Partition, IntervalLookup) {
  std::vector<Method> m{Method::mcG};
  const auto p = mag::uniform_partition(1, 0.25, 1, 1.0, m);
  EXPECT_EQ(p.interval_at(0, 0.5, Side::left), 1u);
  EXPECT_EQ(p.interval_at(0, 0.5, Side::right), 2u);
  EXPECT_EQ(p.interval_at(0, 0.6, Side::left), 2u);
  EXPECT_EQ(p.interval_at(0, 0.6, Side::right), 2u);
  EXPECT_EQ(p.interval_at(0, 0.0, Side::right), 0u);
  EXPECT_EQ(p.interval_at(0, 0.0, Side::left), 0u);
  EXPECT_EQ(p.interval_at(0, 1.0, Side::left), 3u);
  EXPECT_THROW((void)p.interval_at(0, 1.0, Side::right), std::out_of_range);
  EXPECT_THROW((void)p.interval_at(0, 1.5, Side::left), std::out_of_range);
  EXPECT_THROW((void)p.interval_at(0, -1e-3, Side::left), std::out_of_range);
}

TEST(Partition, SlabMembershipIsBijective) {
  std::vector<StepSpec> s{0.05, 0.1, 0.2, std::vector<double>{0.15, 0.25, 0.1, 0.5}};
  std::vector<OrderSpec> o{1, 2, 3, 1};
  std::vector<Method> m(4, Method::mcG);
  const auto p = mag::build_partition(s, o, 1.0, m);
  const auto slabs = mag::build_slabs(p);
  EXPECT_EQ(slabs.front().t_begin, 0.0);
  EXPECT_EQ(slabs.back().t_end, 1.0);
  for (std::size_t i = 0; i < p.components(); ++i) {
    std::vector<int> seen(p.intervals(i), 0);
    for (std::size_t k = 0; k < slabs.size(); ++k) {
      if (k > 0) {
        EXPECT_EQ(slabs[k].t_begin, slabs[k - 1].t_end);
      }
      const auto [a, b] = slabs[k].ranges[i];
      for (std::size_t j = a; j < b; ++j) {
        ++seen[j];
        EXPECT_GE(p.start(i, j), slabs[k].t_begin);
        EXPECT_LE(p.end(i, j), slabs[k].t_end);
      }
    }
    for (int c : seen) {
      EXPECT_EQ(c, 1);
    }
  }
}

}  // namespace
