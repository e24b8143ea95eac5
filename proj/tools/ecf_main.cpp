// ecf: simulate faulty sensor networks, train virtual sensors, detect faults
// and localize them with ensemble-consistent counterfactual explanations.

#include "ecf/config.hpp"
#include "ecf/pipeline.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>

#include <chrono>
#include <iostream>

namespace {

struct Common {
  std::string config_path;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

ecf::RunConfig resolve(const Common& c) {
  ecf::RunConfig config = c.config_path.empty() ? ecf::RunConfig{} : ecf::load_config(c.config_path);
  ecf::apply_environment(config);
  if (c.seed) config.grid.seeds = {*c.seed};
  config.validate();
  return config;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensor fault localization with ensemble-consistent counterfactuals"};
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--config", common.config_path, "INI run configuration (defaults if omitted)")
      ->check(CLI::ExistingFile);
  app.add_option("--jobs", common.jobs, "Worker threads for scenario-level parallelism")
      ->check(CLI::PositiveNumber);
  app.add_option("--seed", common.seed, "Restrict the grid to this single seed");

  auto* simulate = app.add_subcommand("simulate", "Generate clean and faulty panels");
  auto* train = app.add_subcommand("train", "Fit virtual sensors and calibrate the threshold");
  auto* detect = app.add_subcommand("detect", "Per-scenario detection report");
  auto* explain = app.add_subcommand("explain", "Fingerprint of one alarm step");
  auto* evaluate = app.add_subcommand("evaluate", "Localization accuracy of both methods");

  int scenario_id = 0;
  std::optional<long> step;
  bool baseline = false;
  explain->add_option("--scenario", scenario_id, "Scenario id from scenarios.csv")->required();
  explain->add_option("--step", step, "Time step to explain (default: first alarm after onset)");
  explain->add_flag("--baseline", baseline, "Also write the per-model counterfactuals");

  CLI11_PARSE(app, argc, argv);

  try {
    const ecf::RunConfig config = resolve(common);
    const ecf::RunOptions options{common.jobs};
    const auto start = std::chrono::steady_clock::now();
    const ecf::Layout layout(config.output_dir);

    if (simulate->parsed()) {
      ecf::cmd_simulate(config, options);
      fmt::print("simulated {} scenarios into {} ({:.1f}s)\n", ecf::expand_grid(config).size(),
                 layout.root().string(), seconds_since(start));
    } else if (train->parsed()) {
      ecf::cmd_train(config, options);
      fmt::print("trained {} ensembles ({:.1f}s)\n", config.grid.seeds.size(),
                 seconds_since(start));
    } else if (detect->parsed()) {
      const auto s = ecf::cmd_detect(config, options);
      fmt::print("detection: success {:.4f}, max pre-onset FP rate {:.4f}, median delay {} ({:.1f}s)\n",
                 s.scenario_success, s.max_false_positive_rate,
                 s.median_delay ? fmt::format("{:g}", *s.median_delay) : "none",
                 seconds_since(start));
      fmt::print("wrote {}\n", layout.detection().string());
    } else if (explain->parsed()) {
      const auto r = ecf::cmd_explain(config, scenario_id, step, baseline);
      fmt::print("scenario {} step {}{}: predicted sensor {}, objective {:.6g}, slack-free {}\n",
                 scenario_id, r.step, r.alarm ? "" : " (no alarm)",
                 r.prediction ? fmt::format("{}", *r.prediction) : "none", r.ensemble.objective,
                 r.ensemble.feasible_without_slack ? "yes" : "no");
      for (const auto& f : r.files) fmt::print("wrote {}\n", f.string());
    } else if (evaluate->parsed()) {
      const auto r = ecf::cmd_evaluate(config, options);
      fmt::print("localization: ensemble {:.4f}, baseline {:.4f} over {} scenarios ({:.1f}s)\n",
                 r.report.ensemble.mean, r.report.baseline.mean, r.report.scenarios.size(),
                 seconds_since(start));
      fmt::print("wrote {} and {}\n", layout.localization().string(), layout.summary().string());
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "ecf: error: {}\n", e.what());
    return 1;
  }
  return 0;
}
