#pragma once

// Run configuration: an INI-style file with sections. Unknown sections and
// keys are rejected so that typos fail loudly.
//
//   [scenario]  n_pressure n_flow n_steps train_end latent_dim noise_std
//   [grid]      kinds seeds constant_offset gaussian_noise proportional_offset
//               drift drift_cap power_failure_replicates onset_gap
//   [sensors]   window
//   [detector]  margin
//   [explain]   lambda complexity distance tolerances classification_margin
//               tol_abs tol_rel max_iters rho
//   [localize]  k pressure_only
//   [output]    dir
//
// Lists are comma separated. ECF_OUTPUT_DIR, when set, replaces [output] dir.

#include "ecf/detector.hpp"
#include "ecf/explain.hpp"
#include "ecf/localize.hpp"
#include "ecf/netgen.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecf {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  std::vector<std::string> kinds = {"constant_offset", "gaussian_noise", "power_failure",
                                    "proportional_offset", "drift"};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::vector<double> constant_offset = {0.3, 0.5, 1.0};
  std::vector<double> gaussian_noise = {0.3, 0.5, 1.0};
  std::vector<double> proportional_offset = {0.02, 0.05, 0.1};
  std::vector<double> drift = {0.1, 0.25, 0.5};  // per-step rate
  double drift_cap = 80.0;
  int power_failure_replicates = 3;
  int onset_gap = 50;  // onset = train_end + onset_gap

  /// Magnitudes for one kind; PowerFailure yields one 0 per replicate.
  std::vector<double> magnitudes(const std::string& kind) const;
};

struct RunConfig {
  ScenarioConfig scenario;
  GridConfig grid;
  int window = 3;
  double detector_margin = kDefaultThresholdMargin;
  CfConfig explain;  // default_tolerance is replaced by the calibrated threshold
  int alarm_steps = kDefaultAlarmSteps;
  bool pressure_only = true;
  std::filesystem::path output_dir = "ecf_out";

  void validate() const;
};

/// Builds a fault from its grid name and magnitude.
FaultKind make_fault_kind(const std::string& name, double magnitude, double drift_cap);

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
/// Applies ECF_OUTPUT_DIR when it is set and non-empty.
void apply_environment(RunConfig& config);
/// Writes every key with its current value; parse_config reads it back.
void write_config(const RunConfig& config, std::ostream& out);

}  // namespace ecf
