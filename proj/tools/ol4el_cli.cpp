// ol4el: run single experiments or parameter sweeps from a config file.
//
//   ol4el run   --config exp.toml [--seed k] [--out dir]
//   ol4el sweep --config exp.toml --axis H|budget|N --values 1,3,6,9
//               [--variants ol4el:async,fixed:sync] [--out dir]
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration error.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ol4el/ol4el.hpp"

namespace {

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("ol4el");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("OL4EL_LOG")) {
    const std::string level(env);
    if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
  }
}

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto end = csv.find(',', start);
    if (end == std::string::npos) end = csv.size();
    const std::string tok = csv.substr(start, end - start);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (tok.empty() || used != tok.size()) throw ol4el::ConfigError("invalid sweep value '" + tok + "'", "values");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

std::vector<ol4el::Variant> parse_variants(const std::string& csv, const ol4el::ExperimentConfig& base) {
  if (csv.empty()) return {{base.policy.kind, base.mode.kind}};
  std::vector<ol4el::Variant> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    auto end = csv.find(',', start);
    if (end == std::string::npos) end = csv.size();
    const std::string tok = csv.substr(start, end - start);
    const auto colon = tok.find(':');
    if (colon == std::string::npos) throw ol4el::ConfigError("variant '" + tok + "' is not policy:mode", "variants");
    const std::string policy = tok.substr(0, colon), mode = tok.substr(colon + 1);
    ol4el::Variant v;
    if (policy == "ol4el") v.policy = ol4el::PolicyKind::OL4EL;
    else if (policy == "fixed") v.policy = ol4el::PolicyKind::FixedI;
    else throw ol4el::ConfigError("unknown policy '" + policy + "'", "variants");
    if (mode == "sync") v.mode = ol4el::CoordinationMode::Sync;
    else if (mode == "async") v.mode = ol4el::CoordinationMode::Async;
    else throw ol4el::ConfigError("unknown mode '" + mode + "'", "variants");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Budget-limited bandit coordination of edge-cloud learning"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis, values, variants;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;

  auto* run = app.add_subcommand("run", "Run one experiment for every configured seed");
  run->add_option("--config", config_path, "Experiment file")->required();
  run->add_option("--seed", seed, "Run only this seed");
  run->add_option("--out", out_dir, "Output directory (default: run.out from the config)");
  run->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

  auto* sw = app.add_subcommand("sweep", "Sweep one axis and collect final metrics");
  sw->add_option("--config", config_path, "Experiment file")->required();
  sw->add_option("--axis", axis, "H, budget or N")->required();
  sw->add_option("--values", values, "Comma-separated axis values")->required();
  sw->add_option("--variants", variants, "Comma-separated policy:mode pairs (default: the config's)");
  sw->add_option("--out", out_dir, "Output directory (default: run.out from the config)");
  sw->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto config = ol4el::load_config(config_path);
    if (seed) config.run.seeds = {*seed};
    const std::filesystem::path out = out_dir.empty() ? config.run.out : out_dir;

    if (run->parsed()) {
      spdlog::info("running {} seed(s), {} {} on {} edges, H={}", config.run.seeds.size(),
                   std::string(ol4el::to_string(config.policy.kind)), std::string(ol4el::to_string(config.mode.kind)),
                   config.fleet.n, config.fleet.h);
      const auto runs = ol4el::run_experiment(config, out, threads);
      for (const auto& r : runs)
        spdlog::info("seed {}: {} global updates, final {} = {}", r.seed, r.global_updates,
                     ol4el::metric_name(config), r.final_metric);
      spdlog::info("wrote {}", (out / "metrics.csv").string());
      return 0;
    }

    const auto ax = ol4el::sweep_axis_from_string(axis);
    const auto vals = parse_values(values);
    const auto vars = parse_variants(variants, config);
    spdlog::info("sweeping {} over {} value(s), {} variant(s), {} seed(s)", std::string(ol4el::to_string(ax)),
                 vals.size(), vars.size(), config.run.seeds.size());
    const auto rows = ol4el::sweep(config, ax, vals, vars, threads);
    std::filesystem::create_directories(out);
    ol4el::write_text(out / "sweep.csv", ol4el::sweep_csv(ax, rows));
    spdlog::info("wrote {}", (out / "sweep.csv").string());
    return 0;
  } catch (const ol4el::ConfigError& e) {
    std::cerr << "config error";
    if (!e.key().empty()) std::cerr << " [" << e.key() << "]";
    std::cerr << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
