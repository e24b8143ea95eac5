#pragma once

// Faulty-sensor localization from counterfactual change vectors.

#include "ecf/explain.hpp"
#include "ecf/netgen.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ecf {

inline constexpr int kDefaultAlarmSteps = 20;

/// delta / max|delta_i|, or delta unchanged when that max is <= 1e-12.
Eigen::VectorXd normalize_explanation(const Eigen::VectorXd& delta);

/// argmax |delta_i| over the channels where `eligible` is true (all when empty),
/// smallest index on ties. Empty when every eligible entry is zero.
std::optional<Index> predict_faulty_sensor(const Eigen::VectorXd& delta,
                                           const std::vector<bool>& eligible = {});

/// Eligibility mask that keeps pressure channels only.
std::vector<bool> pressure_mask(const ReadingsPanel& panel);

/// Mode of the first `k` entries, smallest index on ties. Missing predictions
/// are skipped; empty when none remain. Throws on an empty sequence.
std::optional<Index> aggregate_alarm_sequence(const std::vector<std::optional<Index>>& predictions,
                                              int k = kDefaultAlarmSteps);

/// Mode of the per-model argmax estimates, smallest index on ties.
std::optional<Index> aggregate_baseline(const std::vector<Counterfactual>& per_model,
                                        const std::vector<bool>& eligible = {});

struct ScenarioOutcome {
  int scenario_id = 0;
  std::string fault_kind;
  double magnitude = 0.0;
  Index true_sensor = 0;
  std::optional<Index> ensemble_prediction;
  std::optional<Index> baseline_prediction;

  bool ensemble_correct() const { return ensemble_prediction == true_sensor; }
  bool baseline_correct() const { return baseline_prediction == true_sensor; }
};

struct MethodAccuracy {
  double mean = 0.0;
  double variance = 0.0;  // population variance of the 0/1 correct flag
};

struct LocalizationReport {
  std::vector<ScenarioOutcome> scenarios;
  MethodAccuracy ensemble;
  MethodAccuracy baseline;
};

LocalizationReport localization_report(std::vector<ScenarioOutcome> scenarios);

// Per-scenario CSV; an absent prediction is written as -1.
void write_localization_csv(const LocalizationReport& report, std::ostream& out);
std::vector<ScenarioOutcome> read_localization_csv(std::istream& in);

}  // namespace ecf
