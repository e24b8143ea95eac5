#pragma once

// Residual-based alarms: an alarm is raised at step t whenever any virtual
// sensor's prediction deviates from the observed reading by more than delta
// in absolute value.

#include "ecf/netgen.hpp"
#include "ecf/sensors.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ecf {

constexpr double kDefaultThresholdMargin = 1.1;

struct AlarmStream {
  Index first_step = 0;         // == window; row r of residuals is step first_step + r
  Eigen::MatrixXd residuals;    // [steps x models], prediction - observed
  std::vector<bool> alarms;     // one per row of residuals
  double threshold = 0.0;

  Index n_steps_evaluated() const { return residuals.rows(); }
  Index step(Index row) const { return first_step + row; }
  bool alarm_at(Index t) const { return alarms.at(static_cast<std::size_t>(t - first_step)); }
  /// Steps with an alarm, ascending.
  std::vector<Index> alarm_steps() const;
};

struct DetectionReport {
  double true_positive_rate = 0.0;   // alarmed fraction of steps t >= onset
  double false_negative_rate = 0.0;
  double true_negative_rate = 0.0;   // quiet fraction of steps t < onset
  double false_positive_rate = 0.0;
  std::optional<Index> detection_delay;  // empty when no alarm at or after onset

  bool detected() const { return detection_delay.has_value(); }
};

/// Residuals for every model at every step t in [window, n_steps).
Eigen::MatrixXd residual_matrix(const Ensemble& ensemble, const ReadingsPanel& panel,
                                Index begin, Index end);

/// delta = margin * max |residual| over [range_begin, range_end) and all models.
double calibrate_threshold(const Ensemble& ensemble, const ReadingsPanel& panel,
                           Index range_begin, Index range_end,
                           double margin = kDefaultThresholdMargin);

AlarmStream detect(const Ensemble& ensemble, const ReadingsPanel& panel, double threshold);

DetectionReport detection_metrics(const AlarmStream& stream, const FaultSpec& fault);

// One CSV row per scenario.
void write_detection_header(std::ostream& out);
void write_detection_row(std::ostream& out, int scenario_id, const std::string& kind,
                         double magnitude, Index sensor, const DetectionReport& report);

}  // namespace ecf
