#pragma once

// Budget-limited multi-armed bandit over global update intervals.
//
// Arm i (1-based) means "run i local iterations, then upload once". Each pull
// returns a reward in [0,1] and consumes resource from a finite budget; play
// ends when no arm is affordable.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ol4el/errors.hpp"
#include "ol4el/random.hpp"

namespace ol4el {

struct ArmIndex {
  std::uint32_t interval = 1;

  friend constexpr auto operator<=>(ArmIndex, ArmIndex) = default;
};

enum class CostMode { Fixed, Variable };
enum class Phase { Init, Dynamic };

// How the ordered densities and per-arm frequencies become sampling weights.
//   GreedyKnapsack  - walk arms by descending density; each takes the largest
//                     frequency the residual budget allows, the rest is left to
//                     the next arm. Weight = frequency.
//   DensityWeighted - weight = density * frequency (each arm alone on budget).
//   FrequencyOnly   - weight = frequency (each arm alone on budget).
enum class SelectionRule { GreedyKnapsack, DensityWeighted, FrequencyOnly };

inline std::string_view to_string(SelectionRule rule) {
  switch (rule) {
    case SelectionRule::GreedyKnapsack: return "greedy";
    case SelectionRule::DensityWeighted: return "density";
    case SelectionRule::FrequencyOnly: return "frequency-only";
  }
  return "greedy";
}

inline SelectionRule selection_rule_from_string(std::string_view name) {
  if (name == "greedy") return SelectionRule::GreedyKnapsack;
  if (name == "density") return SelectionRule::DensityWeighted;
  if (name == "frequency-only") return SelectionRule::FrequencyOnly;
  throw ConfigError("unknown selection rule '" + std::string(name) + "'", "policy.selection");
}

// Returned by density() and ucb_reward_index() for arms that were never pulled.
inline constexpr double kUnpulledSentinel = std::numeric_limits<double>::infinity();

struct ArmStats {
  std::uint64_t pulls = 0;
  double mean_reward = 0.0;
  double mean_cost = 0.0;
  // Known cost in Fixed mode; nominal (prior) cost in Variable mode, used
  // only to decide whether an unpulled arm is affordable.
  double fixed_cost = 0.0;
};

struct BanditConfig {
  std::uint32_t max_interval = 8;
  CostMode cost_mode = CostMode::Fixed;
  double c_floor = 0.01;
  SelectionRule selection = SelectionRule::GreedyKnapsack;
};

struct BanditState {
  std::vector<ArmStats> arms;  // arms[i] <-> interval i + 1
  std::uint64_t total_pulls = 0;
  double remaining_budget = 0.0;
  CostMode cost_mode = CostMode::Fixed;
  double c_floor = 0.01;
  SelectionRule selection = SelectionRule::GreedyKnapsack;
  Phase phase = Phase::Init;
  Rng rng;

  ArmStats& arm(ArmIndex a) { return arms.at(a.interval - 1); }
  const ArmStats& arm(ArmIndex a) const { return arms.at(a.interval - 1); }
};

inline double fixed_arm_cost(ArmIndex interval, double c_comp, double c_comm) {
  return static_cast<double>(interval.interval) * c_comp + c_comm;
}

inline double ucb_reward_index(const ArmStats& stats, std::uint64_t t) {
  if (stats.pulls == 0) return kUnpulledSentinel;
  const double n = static_cast<double>(stats.pulls);
  const double lt = std::log(static_cast<double>(std::max<std::uint64_t>(t, 1)));
  return stats.mean_reward + std::sqrt(2.0 * lt / n);
}

inline void check_cost_floor(double c_floor) {
  if (!(c_floor > 0.0)) throw ConfigError("c_floor must be > 0", "policy.c_floor");
}

// Half-width of the cost/reward confidence interval in Variable mode.
inline double variable_radius(const ArmStats& stats, std::uint64_t t) {
  const double lt = std::log(static_cast<double>(std::max<std::uint64_t>(t, 1)));
  return std::sqrt(lt / static_cast<double>(stats.pulls));
}

inline double density(const ArmStats& stats, std::uint64_t t, CostMode mode, double c_floor = 0.01) {
  if (mode == CostMode::Fixed) {
    const double index = ucb_reward_index(stats, t);
    if (std::isinf(index)) return kUnpulledSentinel;
    return index / stats.fixed_cost;
  }
  check_cost_floor(c_floor);
  if (stats.pulls == 0) return kUnpulledSentinel;
  const double eps = variable_radius(stats, t);
  const double optimistic_reward = std::min(stats.mean_reward + eps, 1.0);
  const double pessimistic_cost = std::max(stats.mean_cost - eps, c_floor);
  return optimistic_reward / pessimistic_cost;
}

// The cost the policy plans with: the known cost in Fixed mode, the clamped
// lower estimate in Variable mode (nominal cost before the first pull).
inline double planning_cost(const ArmStats& stats, std::uint64_t t, CostMode mode, double c_floor) {
  if (mode == CostMode::Fixed) return stats.fixed_cost;
  if (stats.pulls == 0) return std::max(stats.fixed_cost, c_floor);
  return std::max(stats.mean_cost - variable_radius(stats, t), c_floor);
}

inline std::uint64_t max_frequency(double cost, double budget) {
  if (!(budget > 0.0) || !(cost > 0.0)) return 0;
  return static_cast<std::uint64_t>(std::floor(budget / cost));
}

// Samples index i with probability weights[i] / sum(weights). With an all-zero
// weight vector, falls back to a uniform draw over arms with frequency >= 1.
// nullopt means nothing is affordable.
inline std::optional<std::size_t> probabilistic_select(std::span<const double> weights,
                                                       std::span<const std::uint64_t> frequencies,
                                                       Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += std::max(w, 0.0);
  if (total > 0.0) {
    std::uniform_real_distribution<double> draw(0.0, total);
    const double u = draw(rng);
    double acc = 0.0;
    std::optional<std::size_t> last_positive;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (!(weights[i] > 0.0)) continue;
      acc += weights[i];
      last_positive = i;
      if (u < acc) return i;
    }
    return last_positive;
  }
  std::vector<std::size_t> feasible;
  for (std::size_t i = 0; i < frequencies.size(); ++i)
    if (frequencies[i] >= 1) feasible.push_back(i);
  if (feasible.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, feasible.size() - 1);
  return feasible[pick(rng)];
}

inline Phase compute_phase(const BanditState& state) {
  for (const auto& arm : state.arms) {
    if (arm.pulls != 0) continue;
    if (planning_cost(arm, state.total_pulls, state.cost_mode, state.c_floor) <= state.remaining_budget)
      return Phase::Init;
  }
  return Phase::Dynamic;
}

// nominal_costs[i] is the (known or expected) cost of interval i + 1.
inline BanditState make_bandit(std::span<const double> nominal_costs, double budget,
                               const BanditConfig& config, std::uint64_t seed) {
  if (config.max_interval < 1) throw ConfigError("max interval must be >= 1", "policy.i_max");
  if (nominal_costs.size() != config.max_interval)
    throw ConfigError("one nominal cost per arm is required", "policy.i_max");
  if (budget < 0.0) throw ConfigError("budget must be >= 0", "fleet.budget");
  if (config.cost_mode == CostMode::Variable) check_cost_floor(config.c_floor);

  BanditState state;
  state.arms.resize(config.max_interval);
  for (std::size_t i = 0; i < nominal_costs.size(); ++i) {
    if (!(nominal_costs[i] >= 0.0)) throw ConfigError("arm costs must be >= 0", "fleet");
    state.arms[i].fixed_cost = nominal_costs[i];
  }
  state.remaining_budget = budget;
  state.cost_mode = config.cost_mode;
  state.c_floor = config.c_floor;
  state.selection = config.selection;
  state.rng = Rng(seed);
  state.phase = compute_phase(state);
  return state;
}

struct ArmScore {
  std::size_t arm = 0;  // zero-based
  double density = 0.0;
  double cost = 0.0;
  std::uint64_t frequency = 0;
  double weight = 0.0;
};

// Dynamic-phase scoring: arms ordered by descending density (smaller interval
// first on ties), with per-arm frequency and sampling weight filled in.
inline std::vector<ArmScore> score_arms(const BanditState& state) {
  const std::uint64_t t = std::max<std::uint64_t>(state.total_pulls, 1);
  std::vector<ArmScore> scores(state.arms.size());
  double best_finite = -1.0;
  for (std::size_t i = 0; i < state.arms.size(); ++i) {
    scores[i].arm = i;
    scores[i].density = density(state.arms[i], t, state.cost_mode, state.c_floor);
    scores[i].cost = planning_cost(state.arms[i], t, state.cost_mode, state.c_floor);
    if (std::isfinite(scores[i].density)) best_finite = std::max(best_finite, scores[i].density);
  }
  // Arms skipped during init (unaffordable then) get the best observed density.
  const double optimistic = best_finite >= 0.0 ? best_finite : 1.0;
  for (auto& s : scores)
    if (!std::isfinite(s.density)) s.density = optimistic;

  std::stable_sort(scores.begin(), scores.end(),
                   [](const ArmScore& a, const ArmScore& b) { return a.density > b.density; });

  double residual = state.remaining_budget;
  for (auto& s : scores) {
    s.frequency = max_frequency(s.cost, state.remaining_budget);
    switch (state.selection) {
      case SelectionRule::GreedyKnapsack: {
        const std::uint64_t take = s.density > 0.0 ? max_frequency(s.cost, residual) : 0;
        residual -= static_cast<double>(take) * s.cost;
        s.weight = static_cast<double>(take);
        break;
      }
      case SelectionRule::DensityWeighted:
        s.weight = std::max(s.density, 0.0) * static_cast<double>(s.frequency);
        break;
      case SelectionRule::FrequencyOnly:
        s.weight = static_cast<double>(s.frequency);
        break;
    }
  }
  return scores;
}

// nullopt = exhausted: no arm fits in the remaining budget.
inline std::optional<ArmIndex> select_arm(BanditState& state) {
  state.phase = compute_phase(state);
  if (state.phase == Phase::Init) {
    for (std::size_t i = 0; i < state.arms.size(); ++i) {
      const auto& arm = state.arms[i];
      if (arm.pulls == 0 &&
          planning_cost(arm, state.total_pulls, state.cost_mode, state.c_floor) <= state.remaining_budget)
        return ArmIndex{static_cast<std::uint32_t>(i + 1)};
    }
  }
  const auto scores = score_arms(state);
  std::vector<double> weights(scores.size());
  std::vector<std::uint64_t> freqs(scores.size());
  for (std::size_t k = 0; k < scores.size(); ++k) {
    weights[k] = scores[k].weight;
    freqs[k] = scores[k].frequency;
  }
  const auto pick = probabilistic_select(weights, freqs, state.rng);
  if (!pick) return std::nullopt;
  return ArmIndex{static_cast<std::uint32_t>(scores[*pick].arm + 1)};
}

inline constexpr double kBudgetTolerance = 1e-9;

inline void update_stats(BanditState& state, ArmIndex arm, double reward, double cost) {
  if (!(reward >= 0.0 && reward <= 1.0)) throw std::invalid_argument("reward must lie in [0,1]");
  if (!(cost >= 0.0)) throw std::invalid_argument("cost must be >= 0");
  if (cost > state.remaining_budget + kBudgetTolerance)
    throw BudgetViolation("charged cost " + std::to_string(cost) + " exceeds remaining budget " +
                          std::to_string(state.remaining_budget));
  auto& stats = state.arm(arm);
  stats.pulls += 1;
  const double n = static_cast<double>(stats.pulls);
  stats.mean_reward += (reward - stats.mean_reward) / n;
  stats.mean_cost += (cost - stats.mean_cost) / n;
  stats.mean_reward = std::clamp(stats.mean_reward, 0.0, 1.0);
  state.total_pulls += 1;
  state.remaining_budget = std::max(state.remaining_budget - cost, 0.0);
  state.phase = compute_phase(state);
}

}  // namespace ol4el
