#pragma once

// Experiment harness: builds a world (data, fleet, initial model) from a
// config and a seed, runs it to completion, and writes metrics.csv,
// summary.json and sweep.csv.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ol4el/config.hpp"
#include "ol4el/coordinator.hpp"
#include "ol4el/data.hpp"
#include "ol4el/edge.hpp"
#include "ol4el/learners.hpp"

namespace ol4el {

struct World {
  Fleet fleet;
  Dataset testset;
  ModelParams initial_global;
  CoordinatorConfig coordinator;
};

inline Dataset make_dataset(const ExperimentConfig& c, std::uint64_t seed) {
  const std::uint64_t data_seed = c.data.seed.value_or(seed);
  switch (c.data.source) {
    case DataSource::Blobs:
      return gen_blobs(c.task.k, c.data.dim, c.data.n, c.data.separation, c.data.sigma, data_seed);
    case DataSource::Linear:
      return gen_linear_multiclass(c.task.classes, c.data.dim, c.data.n, c.data.margin, data_seed,
                                   c.data.label_noise)
          .data;
    case DataSource::Csv:
      return load_csv(c.data.path, c.data.labeled);
  }
  throw ConfigError("unknown data source", "data.source");
}

inline FleetSpec fleet_spec(const ExperimentConfig& c) {
  const double scale = c.fleet.anchor == CostAnchor::Fastest ? c.fleet.h : 1.0;
  FleetSpec spec;
  spec.edges = c.fleet.n;
  spec.heterogeneity = c.fleet.h;
  spec.budget = c.fleet.budget;
  spec.base_comp = c.fleet.comp_cost * scale;
  spec.comm_cost = c.fleet.comm_cost;
  spec.base_time = c.fleet.iter_time.value_or(c.fleet.comp_cost) * scale;
  spec.comm_time = c.fleet.comm_time.value_or(c.fleet.comm_cost);
  spec.cost_model = {c.fleet.cost_mode, c.fleet.jitter};
  spec.batch_size = c.fleet.batch_size;
  return spec;
}

inline CoordinatorConfig coordinator_config(const ExperimentConfig& c, std::uint64_t seed) {
  CoordinatorConfig cc;
  cc.mode = c.mode.kind;
  cc.alpha0 = c.mode.alpha0;
  cc.sync_cost = c.mode.sync_cost;
  cc.policy = c.policy.kind;
  cc.bandit.max_interval = c.policy.i_max;
  cc.bandit.cost_mode = c.fleet.cost_mode;
  cc.bandit.c_floor = c.policy.c_floor;
  cc.bandit.selection = c.policy.selection;
  cc.fixed_interval = c.policy.interval;
  cc.utility = c.policy.utility;
  cc.eval_every = c.run.eval_every;
  cc.seed = seed;
  return cc;
}

inline World build_world(const ExperimentConfig& c, std::uint64_t seed) {
  validate(c);
  Dataset full = make_dataset(c, seed);
  if (full.size() < c.fleet.n) throw ConfigError("fewer data points than edges", "data.n");
  if (c.task.kind == ModelKind::Svm) {
    if (!full.labeled()) throw ConfigError("SVM needs labeled data", "data.source");
    if (static_cast<std::size_t>(full.num_classes()) > c.task.classes)
      throw ConfigError("data has more classes than task.classes", "task.classes");
  }

  PartitionSpec ps;
  ps.scheme = c.data.partition;
  ps.beta = c.data.beta;
  ps.edges = c.fleet.n;
  ps.seed = c.data.seed.value_or(seed);
  auto shards = partition(full, ps);

  World w;
  w.testset.name = "cloud-test";
  w.testset.dim = full.dim;
  std::vector<Dataset> train;
  train.reserve(shards.size());
  for (std::size_t e = 0; e < shards.size(); ++e) {
    auto split = split_test(shards[e], c.data.test_fraction, ps.seed, e);
    w.testset.append(split.test);
    train.push_back(std::move(split.train));
  }

  w.fleet = build_fleet(fleet_spec(c), std::move(train), seed);
  if (c.task.kind == ModelKind::KMeans) {
    Rng init_rng = make_rng(seed, Stream::Init);
    w.initial_global = kmeans_plus_plus(w.testset.all(), c.task.k, init_rng);
  } else {
    w.initial_global = ModelParams::svm(c.task.classes, full.dim, c.task.lambda);
  }
  w.coordinator = coordinator_config(c, seed);
  return w;
}

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> log;
  double final_metric = 0.0;
  std::uint64_t global_updates = 0;
  double clock = 0.0;
  std::vector<std::uint64_t> updates_per_edge;
  std::vector<double> charged_per_edge;
  std::vector<double> initial_budgets;
  std::vector<double> final_budgets;
};

inline RunResult run_single(const ExperimentConfig& c, std::uint64_t seed) {
  World w = build_world(c, seed);
  RunResult r;
  r.seed = seed;
  for (const auto& e : w.fleet.edges) r.initial_budgets.push_back(e.budget);
  auto state = make_coordinator(w.coordinator, w.fleet, std::move(w.initial_global), std::move(w.testset));
  run_to_completion(state, w.fleet);
  r.log = std::move(state.metrics_log);
  r.final_metric = r.log.back().metric;
  r.global_updates = state.global_version;
  r.clock = state.clock;
  r.updates_per_edge = state.updates;
  r.charged_per_edge = state.charged;
  for (const auto& e : w.fleet.edges) r.final_budgets.push_back(e.budget);
  return r;
}

// Runs jobs(i) for i in [0, count) on up to `threads` workers. Results are
// indexed, so output order never depends on scheduling.
template <class Result, class Job>
std::vector<Result> parallel_map(std::size_t count, Job&& job, unsigned threads = 0) {
  std::vector<Result> out(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = job(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            out[i] = job(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline std::vector<RunResult> run_seeds(const ExperimentConfig& c, unsigned threads = 0) {
  return parallel_map<RunResult>(
      c.run.seeds.size(), [&](std::size_t i) { return run_single(c, c.run.seeds[i]); }, threads);
}

inline const char* metric_name(const ExperimentConfig& c) {
  return c.task.kind == ModelKind::KMeans ? "f1" : "accuracy";
}

namespace detail {

inline void append_number(std::string& out, double v) {
  if (std::isnan(v)) return;
  out += format_double(v);
}

}  // namespace detail

// metrics.csv columns:
//   seed,event,clock,global_version,edge,arm,reward,cost,min_budget,metric
// event is init|update|final; edge is "all" for sync rounds and empty on
// init/final rows; arm is empty when no interval was run; reward and metric
// are empty when not measured on that row.
inline constexpr const char* kMetricsHeader = "seed,event,clock,global_version,edge,arm,reward,cost,min_budget,metric";

inline std::string metrics_csv(std::span<const RunResult> runs) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : runs) {
    for (const auto& m : r.log) {
      out += std::to_string(r.seed);
      out += ',';
      out += to_string(m.event);
      out += ',';
      detail::append_number(out, m.clock);
      out += ',';
      out += std::to_string(m.global_version);
      out += ',';
      if (m.event == MetricsRecord::Event::Update) out += m.edge == kAllEdges ? "all" : std::to_string(m.edge);
      out += ',';
      if (m.arm) out += std::to_string(m.arm);
      out += ',';
      detail::append_number(out, m.reward);
      out += ',';
      detail::append_number(out, m.cost);
      out += ',';
      detail::append_number(out, m.min_budget);
      out += ',';
      detail::append_number(out, m.metric);
      out += '\n';
    }
  }
  return out;
}

inline double mean_of(std::span<const double> xs) {
  return xs.empty() ? 0.0 : std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Sample standard deviation (n - 1); zero for fewer than two values.
inline double stddev_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline nlohmann::ordered_json summary_json(const ExperimentConfig& c, std::span<const RunResult> runs) {
  nlohmann::ordered_json j;
  j["task"] = c.task.kind == ModelKind::KMeans ? "kmeans" : "svm";
  j["mode"] = std::string(to_string(c.mode.kind));
  j["policy"] = std::string(to_string(c.policy.kind));
  j["metric"] = metric_name(c);
  std::vector<double> finals;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : runs) {
    finals.push_back(r.final_metric);
    nlohmann::ordered_json item;
    item["seed"] = r.seed;
    item["final_metric"] = r.final_metric;
    item["global_updates"] = r.global_updates;
    item["clock"] = r.clock;
    arr.push_back(item);
  }
  j["runs"] = arr;
  j["mean"] = mean_of(finals);
  j["std"] = stddev_of(finals);
  return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// Runs every configured seed and writes metrics.csv and summary.json into `out_dir`.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                             unsigned threads = 0) {
  auto runs = run_seeds(c, threads);
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "metrics.csv", metrics_csv(runs));
  write_text(out_dir / "summary.json", summary_json(c, runs).dump(2) + "\n");
  return runs;
}

enum class SweepAxis { Heterogeneity, Budget, Edges };

inline SweepAxis sweep_axis_from_string(std::string_view s) {
  if (s == "H" || s == "h") return SweepAxis::Heterogeneity;
  if (s == "budget") return SweepAxis::Budget;
  if (s == "N" || s == "n") return SweepAxis::Edges;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "' (expected H, budget or N)", "axis");
}

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Heterogeneity: return "H";
    case SweepAxis::Budget: return "budget";
    case SweepAxis::Edges: return "N";
  }
  return "H";
}

inline ExperimentConfig with_axis_value(ExperimentConfig c, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::Heterogeneity: c.fleet.h = value; break;
    case SweepAxis::Budget: c.fleet.budget = value; break;
    case SweepAxis::Edges:
      if (value < 1 || value != std::floor(value)) throw ConfigError("N values must be positive integers", "values");
      c.fleet.n = static_cast<std::size_t>(value);
      break;
  }
  validate(c);
  return c;
}

// A (policy, mode) combination compared in a sweep.
struct Variant {
  PolicyKind policy = PolicyKind::OL4EL;
  CoordinationMode mode = CoordinationMode::Async;

  ExperimentConfig apply(ExperimentConfig c) const {
    c.policy.kind = policy;
    c.mode.kind = mode;
    return c;
  }
};

inline std::string policy_label(const ExperimentConfig& c) {
  return c.policy.kind == PolicyKind::OL4EL ? "ol4el" : "fixed-" + std::to_string(c.policy.interval);
}

struct SweepRow {
  double value = 0.0;
  std::string policy;
  std::string mode;
  std::uint64_t seed = 0;
  double final_metric = 0.0;
};

// One row per (axis value, variant, seed), in that nesting order.
inline std::vector<SweepRow> sweep(const ExperimentConfig& base, SweepAxis axis, std::span<const double> values,
                                   std::span<const Variant> variants, unsigned threads = 0) {
  struct Job {
    ExperimentConfig config;
    double value;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double v : values)
    for (const auto& var : variants) {
      const auto cfg = var.apply(with_axis_value(base, axis, v));
      for (auto seed : base.run.seeds) jobs.push_back({cfg, v, seed});
    }
  return parallel_map<SweepRow>(
      jobs.size(),
      [&](std::size_t i) {
        const auto& job = jobs[i];
        const auto r = run_single(job.config, job.seed);
        return SweepRow{job.value, policy_label(job.config), std::string(to_string(job.config.mode.kind)), job.seed,
                        r.final_metric};
      },
      threads);
}

inline std::string sweep_csv(SweepAxis axis, std::span<const SweepRow> rows) {
  std::string out = "axis,value,policy,mode,seed,final_metric\n";
  for (const auto& r : rows) {
    out += to_string(axis);
    out += ',';
    out += detail::format_double(r.value);
    out += ',' + r.policy + ',' + r.mode + ',' + std::to_string(r.seed) + ',';
    out += detail::format_double(r.final_metric);
    out += '\n';
  }
  return out;
}

}  // namespace ol4el
