#pragma once

// Batch pipeline behind the command-line subcommands. Every stage reads its
// inputs from the output directory and writes its results there, so stages
// can be re-run independently. Outputs depend only on the config and the
// files on disk; --jobs changes wall time, not bytes.
//
//   <dir>/config.ini                 resolved configuration (simulate)
//   <dir>/scenarios.csv              scenario manifest (simulate)
//   <dir>/seed_<s>/clean.csv         fault-free panel (simulate)
//   <dir>/faulty/scenario_<id>.csv   faulty panel (simulate)
//   <dir>/seed_<s>/models.txt        virtual-sensor ensemble (train)
//   <dir>/seed_<s>/threshold.txt     calibrated alarm threshold (train)
//   <dir>/detection.csv              per-scenario detection report (detect)
//   <dir>/explain/...                fingerprints and charts (explain)
//   <dir>/localization.csv           per-scenario localization (evaluate)
//   <dir>/summary.md                 aggregate tables (evaluate)

#include "ecf/config.hpp"
#include "ecf/detector.hpp"
#include "ecf/explain.hpp"
#include "ecf/localize.hpp"
#include "ecf/netgen.hpp"
#include "ecf/sensors.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ecf {

struct ScenarioEntry {
  int id = 0;
  std::uint64_t seed = 0;
  std::string kind;
  double magnitude = 0.0;
  Index sensor = 0;
  Index onset = 0;

  bool operator==(const ScenarioEntry&) const = default;
};

/// Seeds outermost, then kinds and magnitudes in config order. The faulty
/// sensor is drawn from the pressure channels with an RNG keyed on the seed
/// and the scenario's position within its seed block.
std::vector<ScenarioEntry> expand_grid(const RunConfig& config);
FaultSpec to_fault_spec(const ScenarioEntry& entry, const RunConfig& config);
/// Seed for the fault's own random draws (GaussianNoise).
std::uint64_t fault_noise_seed(const ScenarioEntry& entry);

void write_manifest(const std::vector<ScenarioEntry>& entries, std::ostream& out);
std::vector<ScenarioEntry> read_manifest(std::istream& in);

class Layout {
 public:
  explicit Layout(std::filesystem::path root) : root_(std::move(root)) {}
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path config() const { return root_ / "config.ini"; }
  std::filesystem::path manifest() const { return root_ / "scenarios.csv"; }
  std::filesystem::path seed_dir(std::uint64_t seed) const;
  std::filesystem::path clean(std::uint64_t seed) const { return seed_dir(seed) / "clean.csv"; }
  std::filesystem::path models(std::uint64_t seed) const { return seed_dir(seed) / "models.txt"; }
  std::filesystem::path threshold(std::uint64_t seed) const {
    return seed_dir(seed) / "threshold.txt";
  }
  std::filesystem::path faulty(int scenario_id) const;
  std::filesystem::path detection() const { return root_ / "detection.csv"; }
  std::filesystem::path localization() const { return root_ / "localization.csv"; }
  std::filesystem::path summary() const { return root_ / "summary.md"; }
  std::filesystem::path explain_dir() const { return root_ / "explain"; }

 private:
  std::filesystem::path root_;
};

struct RunOptions {
  int jobs = 1;
};

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

// Tallies over every counterfactual solve of a run.
struct SolveStats {
  std::size_t solves = 0;
  std::size_t certified = 0;        // independent KKT recheck within 10x tolerance
  std::size_t slack_free = 0;
  std::size_t solver_failures = 0;  // MaxIters or Infeasible
  double worst_kkt_ratio = 0.0;     // max residual / tolerance over all solves
  double max_excess_slack_free = -optim::kInf;

  void record(const Counterfactual& cf, const optim::Settings& settings);
  void merge(const SolveStats& other);
};

struct DetectionOutcome {
  ScenarioEntry scenario;
  DetectionReport report;
};

struct DetectionSummary {
  std::vector<DetectionOutcome> rows;
  double scenario_success = 0.0;          // fraction with any alarm at t >= onset
  double max_false_positive_rate = 0.0;   // step level, pre-onset
  double mean_true_positive_rate = 0.0;
  std::optional<double> median_delay;     // over detected scenarios
};

DetectionSummary summarize_detection(std::vector<DetectionOutcome> rows);

struct ScenarioExplanation {
  ScenarioOutcome outcome;
  std::vector<Index> steps;  // alarm steps explained, ascending
  SolveStats stats;
};

/// Explains the first K alarm steps at or after train_end with both methods
/// and aggregates them into per-scenario predictions.
ScenarioExplanation localize_scenario(const Ensemble& ensemble, double threshold,
                                      const ReadingsPanel& faulty, const ScenarioEntry& entry,
                                      const RunConfig& config);

/// Explanation settings for one seed: tolerances default to the threshold.
CfConfig explain_config(const RunConfig& config, double threshold);

Ensemble load_ensemble(const Layout& layout, std::uint64_t seed);
double load_threshold(const Layout& layout, std::uint64_t seed);
std::vector<ScenarioEntry> load_manifest(const Layout& layout);

// Fingerprint CSV: sensor, label, delta, normalized delta, slack of the model
// whose target is that sensor (empty for unmodelled channels).
void write_fingerprint_csv(const Counterfactual& cf, const Ensemble& ensemble,
                           const std::vector<std::string>& labels, std::ostream& out);

void cmd_simulate(const RunConfig& config, const RunOptions& options);
void cmd_train(const RunConfig& config, const RunOptions& options);
DetectionSummary cmd_detect(const RunConfig& config, const RunOptions& options);

struct ExplainResult {
  Index step = 0;
  bool alarm = false;
  Counterfactual ensemble;
  std::optional<Index> prediction;
  std::vector<Counterfactual> baseline;  // filled only when requested
  std::vector<std::filesystem::path> files;
};

/// Without `step`, explains the first alarm at or after the fault onset.
ExplainResult cmd_explain(const RunConfig& config, int scenario_id, std::optional<Index> step,
                          bool with_baseline);

struct EvaluationResult {
  LocalizationReport report;
  DetectionSummary detection;
  SolveStats stats;
};

EvaluationResult cmd_evaluate(const RunConfig& config, const RunOptions& options);

void write_summary(const RunConfig& config, const EvaluationResult& result, std::ostream& out);

}  // namespace ecf
