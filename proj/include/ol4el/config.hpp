#pragma once

// Experiment configuration: one file fully determines a run.

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ol4el/bandit.hpp"
#include "ol4el/coordinator.hpp"
#include "ol4el/data.hpp"
#include "ol4el/edge.hpp"
#include "ol4el/errors.hpp"
#include "ol4el/learners.hpp"
#include "ol4el/toml_lite.hpp"

namespace ol4el {

enum class DataSource { Blobs, Linear, Csv };

// Which edge the configured per-iteration cost and time describe. With
// Fastest, slower edges pay H / speed times as much, so raising H slows the
// fleet down; with Slowest, raising H speeds the fast edges up.
enum class CostAnchor { Slowest, Fastest };

struct TaskConfig {
  ModelKind kind = ModelKind::Svm;
  std::size_t k = 3;
  std::size_t classes = 8;
  double lambda = 1e-3;
  bool operator==(const TaskConfig&) const = default;
};

struct ModeConfig {
  CoordinationMode kind = CoordinationMode::Async;
  double alpha0 = 0.5;
  SyncCostRule sync_cost = SyncCostRule::Max;
  bool operator==(const ModeConfig&) const = default;
};

struct PolicyConfig {
  PolicyKind kind = PolicyKind::OL4EL;
  std::uint32_t i_max = 8;
  double c_floor = 0.01;
  SelectionRule selection = SelectionRule::GreedyKnapsack;
  std::uint32_t interval = 4;  // FixedI
  UtilityMode utility = UtilityMode::ParamDelta;
  bool operator==(const PolicyConfig&) const = default;
};

struct FleetConfig {
  std::size_t n = 3;
  double h = 1.0;
  double budget = 5000.0;
  double comp_cost = 10.0;
  double comm_cost = 20.0;
  std::optional<double> iter_time;  // defaults to comp_cost (resource = time)
  std::optional<double> comm_time;  // defaults to comm_cost
  CostMode cost_mode = CostMode::Fixed;
  double jitter = 0.2;
  CostAnchor anchor = CostAnchor::Fastest;
  std::size_t batch_size = 32;
  bool operator==(const FleetConfig&) const = default;
};

struct DataConfig {
  DataSource source = DataSource::Linear;
  std::string path;                   // Csv
  std::optional<bool> labeled;        // Csv; auto-detect when unset
  std::size_t n = 20000;
  std::size_t dim = 59;
  double margin = 0.0;                // Linear
  double label_noise = 0.0;           // Linear
  double separation = 10.0;           // Blobs
  double sigma = 1.0;                 // Blobs
  PartitionScheme partition = PartitionScheme::IID;
  double beta = 0.5;
  double test_fraction = 0.05;
  std::optional<std::uint64_t> seed;  // fixed data seed; defaults to the run seed
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  std::vector<std::uint64_t> seeds{1};
  std::size_t eval_every = 1;
  std::string out = "out";
  bool operator==(const RunConfig&) const = default;
};

struct ExperimentConfig {
  TaskConfig task;
  ModeConfig mode;
  PolicyConfig policy;
  FleetConfig fleet;
  DataConfig data;
  RunConfig run;
  bool operator==(const ExperimentConfig&) const = default;
};

inline void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const char* key, const std::string& msg) {
    if (!ok) throw ConfigError(std::string(key) + ": " + msg, key);
  };
  require(c.task.k >= 1, "task.k", "must be >= 1");
  require(c.task.classes >= 2, "task.classes", "must be >= 2");
  require(c.task.lambda > 0.0, "task.lambda", "must be > 0");
  require(c.mode.alpha0 > 0.0 && c.mode.alpha0 <= 1.0, "mode.alpha0", "must lie in (0,1]");
  require(c.policy.i_max >= 1, "policy.i_max", "must be >= 1");
  require(c.policy.c_floor > 0.0, "policy.c_floor", "must be > 0");
  require(c.policy.interval >= 1, "policy.interval", "must be >= 1");
  require(c.fleet.n >= 1, "fleet.n", "must be >= 1");
  require(c.fleet.h >= 1.0, "fleet.h", "must be >= 1");
  require(c.fleet.budget >= 0.0, "fleet.budget", "must be >= 0");
  require(c.fleet.comp_cost > 0.0, "fleet.comp_cost", "must be > 0");
  require(c.fleet.comm_cost > 0.0, "fleet.comm_cost", "must be > 0");
  require(!c.fleet.iter_time || *c.fleet.iter_time >= 0.0, "fleet.iter_time", "must be >= 0");
  require(!c.fleet.comm_time || *c.fleet.comm_time >= 0.0, "fleet.comm_time", "must be >= 0");
  require(c.fleet.jitter >= 0.0 && c.fleet.jitter < 1.0, "fleet.jitter", "must lie in [0,1)");
  require(c.fleet.batch_size >= 1, "fleet.batch_size", "must be >= 1");
  require(c.data.source != DataSource::Csv || !c.data.path.empty(), "data.path", "required for csv source");
  require(c.data.n >= 1, "data.n", "must be >= 1");
  require(c.data.dim >= 1, "data.dim", "must be >= 1");
  require(c.data.margin >= 0.0, "data.margin", "must be >= 0");
  require(c.data.label_noise >= 0.0 && c.data.label_noise < 1.0, "data.label_noise", "must lie in [0,1)");
  require(c.data.separation >= 0.0, "data.separation", "must be >= 0");
  require(c.data.sigma >= 0.0, "data.sigma", "must be >= 0");
  require(c.data.beta > 0.0, "data.beta", "must be > 0");
  require(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0, "data.test_fraction", "must lie in (0,1)");
  require(!c.run.seeds.empty(), "run.seeds", "needs at least one seed");
  require(c.run.eval_every >= 1, "run.eval_every", "must be >= 1");
}

namespace detail {

// Pulls typed values out of a parsed document, remembering which keys were
// consumed so leftovers can be reported as unknown.
class ConfigReader {
 public:
  explicit ConfigReader(toml::Document doc) : doc_(std::move(doc)) {}

  template <class F>
  void with(const std::string& key, F&& apply) {
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    used_.insert(key);
    try {
      apply(it->second);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception&) {
      throw ConfigError(key + ": wrong value type", key);
    }
  }

  void number(const std::string& key, double& out) {
    with(key, [&](const toml::Value& v) {
      if (!v.is_number()) throw ConfigError(key + ": expected a number", key);
      out = v.as_number();
    });
  }

  void number(const std::string& key, std::optional<double>& out) {
    with(key, [&](const toml::Value& v) {
      if (!v.is_number()) throw ConfigError(key + ": expected a number", key);
      out = v.as_number();
    });
  }

  template <class Int>
  void count(const std::string& key, Int& out) {
    with(key, [&](const toml::Value& v) {
      if (!v.is_int() || v.as_int() < 0) throw ConfigError(key + ": expected a non-negative integer", key);
      out = static_cast<Int>(v.as_int());
    });
  }

  void text(const std::string& key, std::string& out) {
    with(key, [&](const toml::Value& v) {
      if (!v.is_string()) throw ConfigError(key + ": expected a string", key);
      out = v.as_string();
    });
  }

  void flag(const std::string& key, std::optional<bool>& out) {
    with(key, [&](const toml::Value& v) {
      if (!v.is_bool()) throw ConfigError(key + ": expected true or false", key);
      out = v.as_bool();
    });
  }

  template <class Enum>
  void choice(const std::string& key, Enum& out, std::initializer_list<std::pair<const char*, Enum>> options) {
    with(key, [&](const toml::Value& v) {
      if (!v.is_string()) throw ConfigError(key + ": expected a string", key);
      for (const auto& [name, value] : options)
        if (v.as_string() == name) {
          out = value;
          return;
        }
      throw ConfigError(key + ": unknown value '" + v.as_string() + "'", key);
    });
  }

  void seeds(const std::string& key, std::vector<std::uint64_t>& out) {
    with(key, [&](const toml::Value& v) {
      out.clear();
      if (v.is_int()) {
        if (v.as_int() < 0) throw ConfigError(key + ": seeds must be >= 0", key);
        out.push_back(static_cast<std::uint64_t>(v.as_int()));
        return;
      }
      if (!v.is_array()) throw ConfigError(key + ": expected an integer array", key);
      for (const auto& item : v.as_array()) {
        if (!item.is_int() || item.as_int() < 0) throw ConfigError(key + ": seeds must be non-negative integers", key);
        out.push_back(static_cast<std::uint64_t>(item.as_int()));
      }
    });
  }

  void reject_unknown() const {
    for (const auto& [key, value] : doc_)
      if (!used_.count(key)) throw ConfigError("unknown key '" + key + "'", key);
  }

 private:
  toml::Document doc_;
  std::set<std::string> used_;
};

}  // namespace detail

inline ExperimentConfig parse_config(std::string_view text) {
  toml::Document doc;
  try {
    doc = toml::parse(text);
  } catch (const toml::SyntaxError& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  detail::ConfigReader r(std::move(doc));
  ExperimentConfig c;

  r.choice("task.kind", c.task.kind, {{"kmeans", ModelKind::KMeans}, {"svm", ModelKind::Svm}});
  r.count("task.k", c.task.k);
  r.count("task.classes", c.task.classes);
  r.number("task.lambda", c.task.lambda);

  r.choice("mode.kind", c.mode.kind, {{"sync", CoordinationMode::Sync}, {"async", CoordinationMode::Async}});
  r.number("mode.alpha0", c.mode.alpha0);
  r.choice("mode.sync_cost", c.mode.sync_cost, {{"max", SyncCostRule::Max}, {"mean", SyncCostRule::Mean}});

  r.choice("policy.kind", c.policy.kind, {{"ol4el", PolicyKind::OL4EL}, {"fixed", PolicyKind::FixedI}});
  r.count("policy.i_max", c.policy.i_max);
  r.number("policy.c_floor", c.policy.c_floor);
  r.choice("policy.selection", c.policy.selection,
           {{"greedy", SelectionRule::GreedyKnapsack},
            {"density", SelectionRule::DensityWeighted},
            {"frequency-only", SelectionRule::FrequencyOnly}});
  r.count("policy.interval", c.policy.interval);
  r.choice("policy.utility", c.policy.utility,
           {{"param-delta", UtilityMode::ParamDelta}, {"test-set", UtilityMode::TestSet}});

  r.count("fleet.n", c.fleet.n);
  r.number("fleet.h", c.fleet.h);
  r.number("fleet.budget", c.fleet.budget);
  r.number("fleet.comp_cost", c.fleet.comp_cost);
  r.number("fleet.comm_cost", c.fleet.comm_cost);
  r.number("fleet.iter_time", c.fleet.iter_time);
  r.number("fleet.comm_time", c.fleet.comm_time);
  r.choice("fleet.cost_mode", c.fleet.cost_mode, {{"fixed", CostMode::Fixed}, {"variable", CostMode::Variable}});
  r.number("fleet.jitter", c.fleet.jitter);
  r.choice("fleet.anchor", c.fleet.anchor, {{"slowest", CostAnchor::Slowest}, {"fastest", CostAnchor::Fastest}});
  r.count("fleet.batch_size", c.fleet.batch_size);

  r.choice("data.source", c.data.source,
           {{"blobs", DataSource::Blobs}, {"linear", DataSource::Linear}, {"csv", DataSource::Csv}});
  r.text("data.path", c.data.path);
  r.flag("data.labeled", c.data.labeled);
  r.count("data.n", c.data.n);
  r.count("data.dim", c.data.dim);
  r.number("data.margin", c.data.margin);
  r.number("data.label_noise", c.data.label_noise);
  r.number("data.separation", c.data.separation);
  r.number("data.sigma", c.data.sigma);
  r.choice("data.partition", c.data.partition,
           {{"iid", PartitionScheme::IID}, {"label-skew", PartitionScheme::LabelSkew}});
  r.number("data.beta", c.data.beta);
  r.number("data.test_fraction", c.data.test_fraction);
  r.with("data.seed", [&](const toml::Value& v) {
    if (!v.is_int() || v.as_int() < 0) throw ConfigError("data.seed: expected a non-negative integer", "data.seed");
    c.data.seed = static_cast<std::uint64_t>(v.as_int());
  });

  r.seeds("run.seeds", c.run.seeds);
  r.count("run.eval_every", c.run.eval_every);
  r.text("run.out", c.run.out);

  r.reject_unknown();
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config '" + path + "'", "--config");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// Writes every setting explicitly; parse_config(to_toml(c)) == c.
inline std::string to_toml(const ExperimentConfig& c) {
  using toml::format_number;
  using toml::quote;
  std::ostringstream o;
  auto num = [&](const char* key, double v) { o << key << " = " << format_number(v) << "\n"; };
  auto cnt = [&](const char* key, std::uint64_t v) { o << key << " = " << v << "\n"; };
  auto str = [&](const char* key, std::string_view v) { o << key << " = " << quote(v) << "\n"; };

  o << "[task]\n";
  str("kind", c.task.kind == ModelKind::KMeans ? "kmeans" : "svm");
  cnt("k", c.task.k);
  cnt("classes", c.task.classes);
  num("lambda", c.task.lambda);

  o << "\n[mode]\n";
  str("kind", to_string(c.mode.kind));
  num("alpha0", c.mode.alpha0);
  str("sync_cost", c.mode.sync_cost == SyncCostRule::Max ? "max" : "mean");

  o << "\n[policy]\n";
  str("kind", to_string(c.policy.kind));
  cnt("i_max", c.policy.i_max);
  num("c_floor", c.policy.c_floor);
  str("selection", to_string(c.policy.selection));
  cnt("interval", c.policy.interval);
  str("utility", c.policy.utility == UtilityMode::ParamDelta ? "param-delta" : "test-set");

  o << "\n[fleet]\n";
  cnt("n", c.fleet.n);
  num("h", c.fleet.h);
  num("budget", c.fleet.budget);
  num("comp_cost", c.fleet.comp_cost);
  num("comm_cost", c.fleet.comm_cost);
  if (c.fleet.iter_time) num("iter_time", *c.fleet.iter_time);
  if (c.fleet.comm_time) num("comm_time", *c.fleet.comm_time);
  str("cost_mode", c.fleet.cost_mode == CostMode::Fixed ? "fixed" : "variable");
  num("jitter", c.fleet.jitter);
  str("anchor", c.fleet.anchor == CostAnchor::Fastest ? "fastest" : "slowest");
  cnt("batch_size", c.fleet.batch_size);

  o << "\n[data]\n";
  str("source", c.data.source == DataSource::Blobs ? "blobs" : c.data.source == DataSource::Linear ? "linear" : "csv");
  if (!c.data.path.empty()) str("path", c.data.path);
  if (c.data.labeled) o << "labeled = " << (*c.data.labeled ? "true" : "false") << "\n";
  cnt("n", c.data.n);
  cnt("dim", c.data.dim);
  num("margin", c.data.margin);
  num("label_noise", c.data.label_noise);
  num("separation", c.data.separation);
  num("sigma", c.data.sigma);
  str("partition", c.data.partition == PartitionScheme::IID ? "iid" : "label-skew");
  num("beta", c.data.beta);
  num("test_fraction", c.data.test_fraction);
  if (c.data.seed) cnt("seed", *c.data.seed);

  o << "\n[run]\nseeds = [";
  for (std::size_t i = 0; i < c.run.seeds.size(); ++i) o << (i ? ", " : "") << c.run.seeds[i];
  o << "]\n";
  cnt("eval_every", c.run.eval_every);
  str("out", c.run.out);
  return o.str();
}

}  // namespace ol4el
