#pragma once

// Simulated heterogeneous edge servers. Resource is metered in one unit (time,
// in ms by default): each local iteration and each upload consume from a
// finite per-edge budget.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ol4el/bandit.hpp"
#include "ol4el/data.hpp"
#include "ol4el/errors.hpp"
#include "ol4el/learners.hpp"
#include "ol4el/random.hpp"

namespace ol4el {

struct CostModel {
  CostMode mode = CostMode::Fixed;
  double jitter = 0.2;  // Variable only: draws are uniform on [(1-j)m, (1+j)m]
};

struct EdgeServer {
  std::size_t id = 0;
  double speed = 1.0;
  double budget = 0.0;
  double c_comp_mean = 1.0;  // per local iteration
  double c_comm_mean = 1.0;  // per upload
  double base_time = 1.0;    // simulated time of one iteration at speed 1
  double comm_time = 1.0;    // simulated time of one upload
  CostModel cost_model;
  Dataset shard;
  std::size_t batch_size = 32;
  std::size_t batch_cursor = 0;
  Rng rng;

  std::size_t num_batches() const { return (shard.size() + batch_size - 1) / batch_size; }

  Batch batch(std::size_t index) const {
    const std::size_t begin = index * batch_size;
    return shard.rows(begin, std::min(begin + batch_size, shard.size()));
  }

  // Expected cost of one interval, used as the arm's nominal cost.
  double nominal_cost(ArmIndex interval) const { return fixed_arm_cost(interval, c_comp_mean, c_comm_mean); }
};

struct Fleet {
  std::vector<EdgeServer> edges;
  double heterogeneity = 1.0;
};

struct FleetSpec {
  std::size_t edges = 3;
  double heterogeneity = 1.0;
  double budget = 5000.0;
  double base_comp = 10.0;  // per-iteration cost at speed 1
  double comm_cost = 20.0;
  double base_time = 10.0;
  double comm_time = 20.0;
  CostModel cost_model;
  std::size_t batch_size = 32;
};

inline void validate(const FleetSpec& spec) {
  if (spec.edges < 1) throw ConfigError("fleet needs at least one edge", "fleet.n");
  if (!(spec.heterogeneity >= 1.0)) throw ConfigError("heterogeneity H must be >= 1", "fleet.h");
  if (!(spec.budget >= 0.0)) throw ConfigError("budget must be >= 0", "fleet.budget");
  if (!(spec.base_comp > 0.0)) throw ConfigError("computation cost must be > 0", "fleet.comp_cost");
  if (!(spec.comm_cost > 0.0)) throw ConfigError("communication cost must be > 0", "fleet.comm_cost");
  if (!(spec.base_time >= 0.0) || !(spec.comm_time >= 0.0))
    throw ConfigError("durations must be >= 0", "fleet.iter_time");
  if (!(spec.cost_model.jitter >= 0.0 && spec.cost_model.jitter < 1.0))
    throw ConfigError("jitter must lie in [0,1)", "fleet.jitter");
  if (spec.batch_size < 1) throw ConfigError("batch size must be >= 1", "fleet.batch_size");
}

// Speeds evenly spaced on [1, H]; an edge of speed s pays base_comp / s per
// iteration. Shards are assigned in order; every edge gets its own cost stream.
inline Fleet build_fleet(const FleetSpec& spec, std::vector<Dataset> shards, std::uint64_t seed) {
  validate(spec);
  if (shards.size() != spec.edges) throw ConfigError("one shard per edge is required", "fleet.n");
  Fleet fleet;
  fleet.heterogeneity = spec.heterogeneity;
  fleet.edges.resize(spec.edges);
  for (std::size_t i = 0; i < spec.edges; ++i) {
    auto& e = fleet.edges[i];
    e.id = i;
    e.speed = spec.edges == 1 ? 1.0
                              : 1.0 + (spec.heterogeneity - 1.0) * static_cast<double>(i) /
                                          static_cast<double>(spec.edges - 1);
    e.budget = spec.budget;
    e.c_comp_mean = spec.base_comp / e.speed;
    e.c_comm_mean = spec.comm_cost;
    e.base_time = spec.base_time;
    e.comm_time = spec.comm_time;
    e.cost_model = spec.cost_model;
    e.shard = std::move(shards[i]);
    e.batch_size = spec.batch_size;
    e.rng = make_rng(seed, Stream::EdgeCost, i);
  }
  return fleet;
}

inline Fleet build_fleet(const FleetSpec& spec, std::uint64_t seed) {
  return build_fleet(spec, std::vector<Dataset>(spec.edges), seed);
}

struct IntervalCosts {
  double comp_total = 0.0;
  double comm = 0.0;
  double total() const { return comp_total + comm; }
};

inline IntervalCosts draw_costs(EdgeServer& edge, ArmIndex interval) {
  if (interval.interval < 1) throw std::invalid_argument("interval must be >= 1");
  const double j = edge.cost_model.jitter;
  if (edge.cost_model.mode == CostMode::Fixed || j == 0.0)
    return {static_cast<double>(interval.interval) * edge.c_comp_mean, edge.c_comm_mean};
  std::uniform_real_distribution<double> comp((1.0 - j) * edge.c_comp_mean, (1.0 + j) * edge.c_comp_mean);
  std::uniform_real_distribution<double> comm((1.0 - j) * edge.c_comm_mean, (1.0 + j) * edge.c_comm_mean);
  IntervalCosts out;
  for (std::uint32_t k = 0; k < interval.interval; ++k) out.comp_total += comp(edge.rng);
  out.comm = comm(edge.rng);
  return out;
}

// Costs for an interval that the edge can afford, drawn but not yet charged.
struct IntervalPlan {
  ArmIndex interval;
  IntervalCosts costs;
  double duration = 0.0;
};

struct IntervalResult {
  ModelParams local;
  double cost = 0.0;
  double duration = 0.0;
  std::size_t samples = 0;
};

inline double interval_duration(const EdgeServer& edge, ArmIndex interval) {
  return static_cast<double>(interval.interval) * edge.base_time / edge.speed + edge.comm_time;
}

// Draws the interval's costs. nullopt if they exceed the budget; in that case
// the edge (budget, cursor and cost stream) is left exactly as it was.
inline std::optional<IntervalPlan> plan_interval(EdgeServer& edge, ArmIndex interval) {
  const Rng saved = edge.rng;
  IntervalPlan plan{interval, draw_costs(edge, interval), interval_duration(edge, interval)};
  if (plan.costs.total() > edge.budget) {
    edge.rng = saved;
    return std::nullopt;
  }
  return plan;
}

// Charges a plan and trains `interval` consecutive batches from a copy of global.
inline IntervalResult execute_interval(EdgeServer& edge, const ModelParams& global, const IntervalPlan& plan) {
  if (edge.shard.size() == 0) throw std::logic_error("edge " + std::to_string(edge.id) + " has an empty shard");
  IntervalResult out{global, plan.costs.total(), plan.duration, 0};
  edge.budget = std::max(edge.budget - out.cost, 0.0);
  const std::size_t batches = edge.num_batches();
  for (std::uint32_t k = 0; k < plan.interval.interval; ++k) {
    const Batch b = edge.batch(edge.batch_cursor);
    local_iterate_inplace(out.local, b);
    out.samples += b.size();
    edge.batch_cursor = (edge.batch_cursor + 1) % batches;
  }
  return out;
}

// nullopt = exhausted; the edge retires.
inline std::optional<IntervalResult> run_interval(EdgeServer& edge, const ModelParams& global, ArmIndex interval) {
  auto plan = plan_interval(edge, interval);
  if (!plan) return std::nullopt;
  return execute_interval(edge, global, *plan);
}

}  // namespace ol4el
