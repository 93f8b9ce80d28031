#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ol4el/edge.hpp"

using namespace ol4el;

namespace {

Dataset column(std::vector<double> xs) {
  Dataset ds;
  ds.dim = 1;
  ds.points = std::move(xs);
  return ds;
}

EdgeServer simple_edge(double budget, double c_comp, double c_comm) {
  EdgeServer e;
  e.budget = budget;
  e.c_comp_mean = c_comp;
  e.c_comm_mean = c_comm;
  e.shard = column({1.0, 2.0, 3.0, 4.0});
  e.batch_size = 1;
  e.rng = Rng(1);
  return e;
}

}  // namespace

TEST(BuildFleet, SpeedsEvenlySpaced) {
  FleetSpec spec;
  spec.edges = 3;
  spec.heterogeneity = 1.0;
  auto fleet = build_fleet(spec, 1);
  for (const auto& e : fleet.edges) EXPECT_DOUBLE_EQ(e.speed, 1.0);
  spec.heterogeneity = 5.0;
  fleet = build_fleet(spec, 1);
  EXPECT_DOUBLE_EQ(fleet.edges[0].speed, 1.0);
  EXPECT_DOUBLE_EQ(fleet.edges[1].speed, 3.0);
  EXPECT_DOUBLE_EQ(fleet.edges[2].speed, 5.0);
  spec.edges = 1;
  EXPECT_DOUBLE_EQ(build_fleet(spec, 1).edges[0].speed, 1.0);
}

TEST(BuildFleet, ComputeCostDividedBySpeed) {
  FleetSpec spec;
  spec.edges = 2;
  spec.heterogeneity = 4.0;
  spec.base_comp = 8.0;
  spec.budget = 123.0;
  const auto fleet = build_fleet(spec, 1);
  EXPECT_DOUBLE_EQ(fleet.edges[0].c_comp_mean, 8.0);
  EXPECT_DOUBLE_EQ(fleet.edges[1].c_comp_mean, 2.0);
  for (const auto& e : fleet.edges) {
    EXPECT_DOUBLE_EQ(e.budget, 123.0);
    EXPECT_DOUBLE_EQ(e.c_comm_mean, spec.comm_cost);
  }
}

TEST(BuildFleet, RejectsBadSpecs) {
  FleetSpec spec;
  spec.heterogeneity = 0.5;
  EXPECT_THROW(build_fleet(spec, 1), ConfigError);
  spec = FleetSpec{};
  spec.edges = 0;
  EXPECT_THROW(build_fleet(spec, 1), ConfigError);
  spec = FleetSpec{};
  spec.budget = -1;
  EXPECT_THROW(build_fleet(spec, 1), ConfigError);
  spec = FleetSpec{};
  spec.cost_model.jitter = 1.0;
  EXPECT_THROW(build_fleet(spec, 1), ConfigError);
  spec = FleetSpec{};
  EXPECT_THROW(build_fleet(spec, std::vector<Dataset>(2), 1), ConfigError);
}

TEST(DrawCosts, FixedIsExact) {
  auto e = simple_edge(100, 2, 5);
  const auto c = draw_costs(e, ArmIndex{3});
  EXPECT_DOUBLE_EQ(c.comp_total, 6.0);
  EXPECT_DOUBLE_EQ(c.comm, 5.0);
}

TEST(DrawCosts, ZeroJitterMatchesFixed) {
  auto e = simple_edge(100, 2, 5);
  e.cost_model = {CostMode::Variable, 0.0};
  const auto c = draw_costs(e, ArmIndex{3});
  EXPECT_DOUBLE_EQ(c.comp_total, 6.0);
  EXPECT_DOUBLE_EQ(c.comm, 5.0);
}

TEST(DrawCosts, VariableWithinJitterAndMeanCorrect) {
  auto e = simple_edge(100, 2, 5);
  e.cost_model = {CostMode::Variable, 0.2};
  double comp_sum = 0, comm_sum = 0;
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    const auto c = draw_costs(e, ArmIndex{3});
    ASSERT_GE(c.comp_total, 3 * 1.6);
    ASSERT_LE(c.comp_total, 3 * 2.4);
    ASSERT_GE(c.comm, 4.0);
    ASSERT_LE(c.comm, 6.0);
    comp_sum += c.comp_total;
    comm_sum += c.comm;
  }
  EXPECT_NEAR(comp_sum / draws, 6.0, 0.02);
  EXPECT_NEAR(comm_sum / draws, 5.0, 0.02);
}

TEST(RunInterval, DurationFromSpeedAndComm) {
  auto e = simple_edge(1000, 1, 1);
  e.base_time = 10;
  e.speed = 2;
  e.comm_time = 5;
  const auto r = run_interval(e, ModelParams::kmeans(1, 1), ArmIndex{3});
  ASSERT_TRUE(r);
  EXPECT_DOUBLE_EQ(r->duration, 3 * 10.0 / 2 + 5);
  EXPECT_DOUBLE_EQ(r->cost, 4.0);
  EXPECT_DOUBLE_EQ(e.budget, 996.0);
  EXPECT_EQ(r->samples, 3u);
}

TEST(RunInterval, UnaffordableLeavesEdgeUntouched) {
  auto e = simple_edge(10, 10, 1);
  e.cost_model = {CostMode::Variable, 0.0};
  const auto rng_before = e.rng;
  EXPECT_FALSE(run_interval(e, ModelParams::kmeans(1, 1), ArmIndex{1}));
  EXPECT_EQ(e.budget, 10.0);
  EXPECT_EQ(e.batch_cursor, 0u);
  EXPECT_EQ(e.rng, rng_before);
}

TEST(RunInterval, CursorWrapsCyclically) {
  auto e = simple_edge(1000, 1, 1);
  e.shard = column({10, 20, 30, 40});
  ASSERT_EQ(e.num_batches(), 4u);
  const auto r = run_interval(e, ModelParams::kmeans(1, 1), ArmIndex{6});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->samples, 6u);
  EXPECT_EQ(e.batch_cursor, 2u);
  // Batches 1..4,1,2: the single center is their running mean.
  EXPECT_NEAR(r->local.center(0)[0], (10 + 20 + 30 + 40 + 10 + 20) / 6.0, 1e-12);
  EXPECT_DOUBLE_EQ(r->local.count(0), 6.0);
}

TEST(RunInterval, LastBatchMayBeShort) {
  auto e = simple_edge(1000, 1, 1);
  e.shard = column({1, 2, 3, 4, 5});
  e.batch_size = 2;
  ASSERT_EQ(e.num_batches(), 3u);
  const auto r = run_interval(e, ModelParams::kmeans(1, 1), ArmIndex{4});
  EXPECT_EQ(r->samples, 2u + 2u + 1u + 2u);
  EXPECT_EQ(e.batch_cursor, 1u);
}

TEST(RunInterval, EmptyShardIsLogicError) {
  auto e = simple_edge(1000, 1, 1);
  e.shard = Dataset{};
  e.shard.dim = 1;
  e.batch_size = 1;
  EXPECT_THROW(run_interval(e, ModelParams::kmeans(1, 1), ArmIndex{1}), std::logic_error);
}

TEST(EdgeProperties, HeterogeneityIdentity) {
  std::mt19937_64 g(1);
  std::uniform_real_distribution<double> h(1.0, 100.0);
  for (int c = 0; c < 1000; ++c) {
    FleetSpec spec;
    spec.edges = 2 + g() % 99;
    spec.heterogeneity = h(g);
    const auto fleet = build_fleet(spec, c);
    double lo = 1e300, hi = 0;
    for (const auto& e : fleet.edges) {
      lo = std::min(lo, e.speed);
      hi = std::max(hi, e.speed);
      ASSERT_NEAR(e.c_comp_mean * e.speed, spec.base_comp, 1e-9);
    }
    ASSERT_NEAR(hi / lo, spec.heterogeneity, 1e-9);
  }
}

TEST(EdgeProperties, NoOverdraftAtomicityAndCostAccounting) {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 1000; ++c) {
    auto e = simple_edge(10 + 500 * u(g), 0.5 + 10 * u(g), 0.5 + 20 * u(g));
    e.cost_model = {g() % 2 ? CostMode::Variable : CostMode::Fixed, 0.9 * u(g)};
    e.rng = Rng(g());
    const double b0 = e.budget;
    long double charged = 0.0L;
    int ops = 0;
    const auto model = ModelParams::kmeans(1, 1);
    int failures = 0;
    while (failures < 3 && ops < 10000) {
      const ArmIndex arm{static_cast<std::uint32_t>(1 + g() % 6)};
      const double budget_before = e.budget;
      const auto cursor_before = e.batch_cursor;
      const auto rng_before = e.rng;
      const auto r = run_interval(e, model, arm);
      ASSERT_GE(e.budget, 0.0);
      if (!r) {
        ASSERT_EQ(e.budget, budget_before);
        ASSERT_EQ(e.batch_cursor, cursor_before);
        ASSERT_EQ(e.rng, rng_before);
        ++failures;
        continue;
      }
      ASSERT_LE(r->cost, budget_before);
      charged += r->cost;
      ++ops;
    }
    ASSERT_NEAR(static_cast<double>(charged), b0 - e.budget, 1e-9 * (ops + 1)) << "case " << c;
  }
}

TEST(EdgeProperties, SeedDeterminism) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    FleetSpec spec;
    spec.edges = 3;
    spec.heterogeneity = 3;
    spec.cost_model = {CostMode::Variable, 0.3};
    auto a = build_fleet(spec, seed);
    auto b = build_fleet(spec, seed);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::uint32_t k = 1; k <= 4; ++k) {
        const auto ca = draw_costs(a.edges[i], ArmIndex{k});
        const auto cb = draw_costs(b.edges[i], ArmIndex{k});
        ASSERT_EQ(ca.comp_total, cb.comp_total);
        ASSERT_EQ(ca.comm, cb.comm);
      }
  }
}
