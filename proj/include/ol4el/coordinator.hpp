#pragma once

// Cloud-side control loop.
//
// Sync: one shared bandit picks an interval for the whole fleet; every edge
// runs it, the cloud averages the locals and the round takes as long as the
// slowest edge. Async: each edge has its own bandit and is merged into the
// global model the moment it finishes, discounted by how stale its base is.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ol4el/bandit.hpp"
#include "ol4el/data.hpp"
#include "ol4el/edge.hpp"
#include "ol4el/learners.hpp"
#include "ol4el/random.hpp"

namespace ol4el {

enum class CoordinationMode { Sync, Async };
enum class PolicyKind { OL4EL, FixedI };
// How the shared sync bandit is charged for a round of N per-edge costs.
enum class SyncCostRule { Max, Mean };

inline std::string_view to_string(CoordinationMode m) { return m == CoordinationMode::Sync ? "sync" : "async"; }
inline std::string_view to_string(PolicyKind p) { return p == PolicyKind::OL4EL ? "ol4el" : "fixed"; }

struct CoordinatorConfig {
  CoordinationMode mode = CoordinationMode::Async;
  double alpha0 = 0.5;
  SyncCostRule sync_cost = SyncCostRule::Max;
  PolicyKind policy = PolicyKind::OL4EL;
  BanditConfig bandit;
  std::uint32_t fixed_interval = 4;
  UtilityMode utility = UtilityMode::ParamDelta;
  std::size_t eval_every = 1;
  std::uint64_t seed = 0;
};

// Chooses intervals for one bandit's worth of budget: OL4EL asks the bandit,
// FixedI always answers the same interval while it is affordable.
struct IntervalPolicy {
  PolicyKind kind = PolicyKind::OL4EL;
  std::uint32_t fixed_interval = 4;
  BanditState bandit;

  std::optional<ArmIndex> select() {
    if (kind == PolicyKind::OL4EL) return select_arm(bandit);
    const ArmIndex arm{fixed_interval};
    const auto& stats = bandit.arm(arm);
    if (planning_cost(stats, bandit.total_pulls, bandit.cost_mode, bandit.c_floor) > bandit.remaining_budget)
      return std::nullopt;
    return arm;
  }

  void observe(ArmIndex arm, double reward, double cost) { update_stats(bandit, arm, reward, cost); }
};

// Cost-per-arm table for a bandit covering `edges` (max or mean across them).
inline std::vector<double> nominal_arm_costs(std::span<const EdgeServer* const> edges, std::uint32_t arms,
                                             SyncCostRule rule) {
  std::vector<double> costs(arms, 0.0);
  for (std::uint32_t i = 0; i < arms; ++i) {
    const ArmIndex arm{i + 1};
    double agg = 0.0;
    for (const auto* e : edges) {
      const double c = e->nominal_cost(arm);
      agg = rule == SyncCostRule::Max ? std::max(agg, c) : agg + c / static_cast<double>(edges.size());
    }
    costs[i] = agg;
  }
  return costs;
}

inline constexpr int kAllEdges = -1;

struct MetricsRecord {
  enum class Event { Init, Update, Final };
  Event event = Event::Update;
  double clock = 0.0;
  std::uint64_t global_version = 0;
  int edge = kAllEdges;
  std::uint32_t arm = 0;  // 0: no arm (init/final rows)
  double reward = std::numeric_limits<double>::quiet_NaN();
  double cost = 0.0;
  double min_budget = 0.0;
  double metric = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated

  bool evaluated() const { return !std::isnan(metric); }
};

inline std::string_view to_string(MetricsRecord::Event e) {
  switch (e) {
    case MetricsRecord::Event::Init: return "init";
    case MetricsRecord::Event::Update: return "update";
    case MetricsRecord::Event::Final: return "final";
  }
  return "update";
}

struct PendingUpload {
  IntervalResult result;
  ArmIndex arm;
  std::uint64_t base_version = 0;
};

struct QueuedCompletion {
  double time = 0.0;
  std::size_t edge = 0;
  // Min-heap order: earliest time first, lower edge id on ties.
  bool operator>(const QueuedCompletion& o) const { return time != o.time ? time > o.time : edge > o.edge; }
};

struct CoordinatorState {
  CoordinatorConfig config;
  ModelParams global;
  std::uint64_t global_version = 0;
  std::vector<IntervalPolicy> policies;  // one (sync) or one per edge (async)
  std::priority_queue<QueuedCompletion, std::vector<QueuedCompletion>, std::greater<>> event_queue;
  std::vector<std::optional<PendingUpload>> pending;
  std::vector<bool> active;
  std::vector<double> charged;       // per edge
  std::vector<std::uint64_t> updates;  // per edge (async) global updates contributed
  double clock = 0.0;
  bool bootstrapped = false;
  bool terminated = false;
  Dataset testset;
  std::vector<MetricsRecord> metrics_log;
};

namespace detail {

inline double min_budget(const Fleet& fleet) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& e : fleet.edges) m = std::min(m, e.budget);
  return fleet.edges.empty() ? 0.0 : m;
}

inline bool due_for_eval(const CoordinatorState& s) {
  return s.config.eval_every > 0 && s.global_version % s.config.eval_every == 0;
}

inline double evaluate_global(const CoordinatorState& s) {
  if (s.testset.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  return evaluate(s.global, s.testset.all());
}

inline double measure_utility(const CoordinatorState& s, const ModelParams& prev) {
  if (s.config.utility == UtilityMode::TestSet) {
    const Batch test = s.testset.all();
    return utility(prev, s.global, UtilityMode::TestSet, &test);
  }
  return utility(prev, s.global, UtilityMode::ParamDelta);
}

inline IntervalPolicy make_policy(const CoordinatorConfig& cfg, std::span<const EdgeServer* const> edges,
                                  double budget, std::uint64_t index) {
  BanditConfig bc = cfg.bandit;
  if (cfg.policy == PolicyKind::FixedI) {
    if (cfg.fixed_interval < 1) throw ConfigError("fixed interval must be >= 1", "policy.interval");
    bc.max_interval = std::max(bc.max_interval, cfg.fixed_interval);
  }
  const auto costs = nominal_arm_costs(edges, bc.max_interval, cfg.sync_cost);
  IntervalPolicy p;
  p.kind = cfg.policy;
  p.fixed_interval = cfg.fixed_interval;
  p.bandit = make_bandit(costs, budget, bc, make_rng(cfg.seed, Stream::Bandit, index)());
  return p;
}

}  // namespace detail

inline CoordinatorState make_coordinator(const CoordinatorConfig& config, const Fleet& fleet, ModelParams initial_global,
                                         Dataset testset) {
  if (fleet.edges.empty()) throw ConfigError("fleet is empty", "fleet.n");
  if (config.mode == CoordinationMode::Async && !(config.alpha0 > 0.0 && config.alpha0 <= 1.0))
    throw ConfigError("alpha0 must lie in (0,1]", "mode.alpha0");
  if (config.eval_every < 1) throw ConfigError("eval_every must be >= 1", "run.eval_every");

  CoordinatorState s;
  s.config = config;
  s.global = std::move(initial_global);
  s.testset = std::move(testset);
  const std::size_t n = fleet.edges.size();
  s.pending.resize(n);
  s.active.assign(n, true);
  s.charged.assign(n, 0.0);
  s.updates.assign(n, 0);

  if (config.mode == CoordinationMode::Sync) {
    std::vector<const EdgeServer*> all;
    for (const auto& e : fleet.edges) all.push_back(&e);
    s.policies.push_back(detail::make_policy(config, all, detail::min_budget(fleet), 0));
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const EdgeServer* one[] = {&fleet.edges[i]};
      s.policies.push_back(detail::make_policy(config, one, fleet.edges[i].budget, i));
    }
  }

  MetricsRecord init;
  init.event = MetricsRecord::Event::Init;
  init.min_budget = detail::min_budget(fleet);
  init.metric = detail::evaluate_global(s);
  s.metrics_log.push_back(init);
  return s;
}

struct RoundReport {
  ArmIndex arm;
  double reward = 0.0;
  double charged = 0.0;
  double duration = 0.0;
};

// nullopt = terminated: the bandit has no affordable arm, or some edge cannot
// pay for the chosen interval. Nothing is charged for a terminated round.
inline std::optional<RoundReport> run_sync_round(CoordinatorState& s, Fleet& fleet) {
  if (s.config.mode != CoordinationMode::Sync) throw std::logic_error("run_sync_round needs sync mode");
  if (s.terminated) return std::nullopt;
  auto& policy = s.policies.front();
  const auto arm = policy.select();
  if (!arm) {
    s.terminated = true;
    return std::nullopt;
  }

  std::vector<Rng> saved;
  saved.reserve(fleet.edges.size());
  for (const auto& e : fleet.edges) saved.push_back(e.rng);
  auto roll_back = [&] {
    for (std::size_t i = 0; i < fleet.edges.size(); ++i) fleet.edges[i].rng = saved[i];
    s.terminated = true;
  };

  std::vector<IntervalPlan> plans;
  plans.reserve(fleet.edges.size());
  for (auto& e : fleet.edges) {
    auto plan = plan_interval(e, *arm);
    if (!plan) {
      roll_back();
      return std::nullopt;
    }
    plans.push_back(*plan);
  }
  double charge = 0.0;
  for (const auto& p : plans)
    charge = s.config.sync_cost == SyncCostRule::Max
                 ? std::max(charge, p.costs.total())
                 : charge + p.costs.total() / static_cast<double>(plans.size());
  if (charge > policy.bandit.remaining_budget + kBudgetTolerance) {
    roll_back();
    return std::nullopt;
  }

  std::vector<ModelParams> locals;
  std::vector<double> weights;
  locals.reserve(plans.size());
  double duration = 0.0;
  for (std::size_t i = 0; i < fleet.edges.size(); ++i) {
    auto result = execute_interval(fleet.edges[i], s.global, plans[i]);
    s.charged[i] += result.cost;
    duration = std::max(duration, result.duration);
    weights.push_back(static_cast<double>(result.samples));
    locals.push_back(std::move(result.local));
  }

  ModelParams prev = std::move(s.global);
  s.global = aggregate_weighted(locals, weights);
  rebase_counts(s.global, prev, locals);
  s.global_version += 1;
  const double reward = detail::measure_utility(s, prev);
  policy.observe(*arm, reward, std::min(charge, policy.bandit.remaining_budget));
  s.clock += duration;

  MetricsRecord rec;
  rec.clock = s.clock;
  rec.global_version = s.global_version;
  rec.edge = kAllEdges;
  rec.arm = arm->interval;
  rec.reward = reward;
  rec.cost = charge;
  rec.min_budget = detail::min_budget(fleet);
  if (detail::due_for_eval(s)) rec.metric = detail::evaluate_global(s);
  s.metrics_log.push_back(rec);
  return RoundReport{*arm, reward, charge, duration};
}

namespace detail {

// Picks the edge's next interval and starts it at the current clock; retires
// the edge when nothing is affordable.
inline void dispatch(CoordinatorState& s, Fleet& fleet, std::size_t id) {
  auto& edge = fleet.edges[id];
  auto& policy = s.policies[id];
  const auto arm = policy.select();
  std::optional<IntervalPlan> plan;
  if (arm) plan = plan_interval(edge, *arm);
  if (!plan) {
    s.active[id] = false;
    return;
  }
  auto result = execute_interval(edge, s.global, *plan);
  s.charged[id] += result.cost;
  s.event_queue.push({s.clock + result.duration, id});
  s.pending[id] = PendingUpload{std::move(result), *arm, s.global_version};
}

inline void bootstrap(CoordinatorState& s, Fleet& fleet) {
  s.bootstrapped = true;
  for (std::size_t i = 0; i < fleet.edges.size(); ++i) dispatch(s, fleet, i);
}

}  // namespace detail

struct AsyncEvent {
  std::size_t edge = 0;
  ArmIndex arm;
  std::uint64_t staleness = 0;
  double reward = 0.0;
  double cost = 0.0;
};

// Processes the earliest completion. nullopt = terminated (every edge retired).
inline std::optional<AsyncEvent> step_async(CoordinatorState& s, Fleet& fleet) {
  if (s.config.mode != CoordinationMode::Async) throw std::logic_error("step_async needs async mode");
  if (!s.bootstrapped) detail::bootstrap(s, fleet);
  if (s.event_queue.empty()) {
    s.terminated = true;
    return std::nullopt;
  }
  const auto next = s.event_queue.top();
  s.event_queue.pop();
  s.clock = std::max(s.clock, next.time);
  PendingUpload upload = std::move(*s.pending[next.edge]);
  s.pending[next.edge].reset();

  const std::uint64_t staleness = s.global_version - upload.base_version;
  ModelParams prev = s.global;
  s.global = async_merge(prev, upload.result.local, staleness, s.config.alpha0);
  s.global_version += 1;
  s.updates[next.edge] += 1;
  const double reward = detail::measure_utility(s, prev);
  auto& policy = s.policies[next.edge];
  policy.observe(upload.arm, reward, std::min(upload.result.cost, policy.bandit.remaining_budget));

  MetricsRecord rec;
  rec.clock = s.clock;
  rec.global_version = s.global_version;
  rec.edge = static_cast<int>(next.edge);
  rec.arm = upload.arm.interval;
  rec.reward = reward;
  rec.cost = upload.result.cost;
  rec.min_budget = detail::min_budget(fleet);
  if (detail::due_for_eval(s)) rec.metric = detail::evaluate_global(s);
  s.metrics_log.push_back(rec);

  detail::dispatch(s, fleet, next.edge);
  return AsyncEvent{next.edge, upload.arm, staleness, reward, upload.result.cost};
}

// Runs until termination and appends a final, always-evaluated row.
inline const std::vector<MetricsRecord>& run_to_completion(CoordinatorState& s, Fleet& fleet) {
  if (s.config.mode == CoordinationMode::Sync) {
    while (run_sync_round(s, fleet)) {
    }
  } else {
    while (step_async(s, fleet)) {
    }
  }
  MetricsRecord fin;
  fin.event = MetricsRecord::Event::Final;
  fin.clock = s.clock;
  fin.global_version = s.global_version;
  fin.min_budget = detail::min_budget(fleet);
  fin.metric = detail::evaluate_global(s);
  s.metrics_log.push_back(fin);
  return s.metrics_log;
}

}  // namespace ol4el
