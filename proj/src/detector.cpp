#include "ecf/detector.hpp"

#include <fmt/format.h>

#include <ostream>

namespace ecf {

std::vector<Index> AlarmStream::alarm_steps() const {
  std::vector<Index> out;
  for (std::size_t r = 0; r < alarms.size(); ++r) {
    if (alarms[r]) out.push_back(first_step + static_cast<Index>(r));
  }
  return out;
}

Eigen::MatrixXd residual_matrix(const Ensemble& ensemble, const ReadingsPanel& panel,
                                Index begin, Index end) {
  if (ensemble.models.empty()) throw std::invalid_argument("empty ensemble");
  if (ensemble.n_sensors() != panel.n_sensors()) {
    throw std::invalid_argument("ensemble and panel disagree on sensor count");
  }
  const int window = ensemble.window;
  if (begin < window || end > panel.n_steps() || begin > end) {
    throw std::out_of_range(fmt::format("residual range [{}, {}) invalid", begin, end));
  }
  const Index models = static_cast<Index>(ensemble.size());
  Eigen::MatrixXd weights(panel.n_sensors(), models);
  Eigen::RowVectorXd bias(models);
  Eigen::VectorXi targets(models);
  for (Index m = 0; m < models; ++m) {
    const auto& model = ensemble.models[static_cast<std::size_t>(m)];
    weights.col(m) = model.full_weights();
    bias(m) = model.bias;
    targets(m) = static_cast<int>(model.target);
  }

  Eigen::MatrixXd residuals(end - begin, models);
  for (Index t = begin; t < end; ++t) {
    const Eigen::RowVectorXd mean = panel.values().middleRows(t - window, window).colwise().mean();
    const Eigen::RowVectorXd prediction = mean * weights + bias;
    for (Index m = 0; m < models; ++m) {
      residuals(t - begin, m) = prediction(m) - panel.at(t, targets(m));
    }
  }
  return residuals;
}

double calibrate_threshold(const Ensemble& ensemble, const ReadingsPanel& panel,
                           Index range_begin, Index range_end, double margin) {
  if (range_end <= range_begin) throw std::invalid_argument("empty calibration range");
  if (range_end - range_begin < 50) {
    throw std::invalid_argument("calibration range must span at least 50 steps");
  }
  if (!(margin >= 1.0)) throw std::invalid_argument("threshold margin must be >= 1");
  return margin * residual_matrix(ensemble, panel, range_begin, range_end).cwiseAbs().maxCoeff();
}

AlarmStream detect(const Ensemble& ensemble, const ReadingsPanel& panel, double threshold) {
  if (panel.n_steps() <= ensemble.window) {
    throw std::invalid_argument("panel is not longer than the window");
  }
  AlarmStream stream;
  stream.first_step = ensemble.window;
  stream.threshold = threshold;
  stream.residuals = residual_matrix(ensemble, panel, ensemble.window, panel.n_steps());
  stream.alarms.resize(static_cast<std::size_t>(stream.residuals.rows()));
  for (Index r = 0; r < stream.residuals.rows(); ++r) {
    stream.alarms[static_cast<std::size_t>(r)] =
        stream.residuals.row(r).cwiseAbs().maxCoeff() > threshold;
  }
  return stream;
}

DetectionReport detection_metrics(const AlarmStream& stream, const FaultSpec& fault) {
  const Index end = stream.first_step + stream.n_steps_evaluated();
  if (fault.onset < stream.first_step || fault.onset >= end) {
    throw std::out_of_range("fault onset outside the evaluated range");
  }
  Index pre = 0, pre_alarm = 0, post = 0, post_alarm = 0;
  DetectionReport report;
  for (Index t = stream.first_step; t < end; ++t) {
    const bool alarm = stream.alarm_at(t);
    if (t < fault.onset) {
      ++pre;
      pre_alarm += alarm;
    } else {
      ++post;
      post_alarm += alarm;
      if (alarm && !report.detection_delay) report.detection_delay = t - fault.onset;
    }
  }
  report.true_positive_rate = static_cast<double>(post_alarm) / static_cast<double>(post);
  report.false_negative_rate = 1.0 - report.true_positive_rate;
  if (pre > 0) {
    report.false_positive_rate = static_cast<double>(pre_alarm) / static_cast<double>(pre);
    report.true_negative_rate = 1.0 - report.false_positive_rate;
  } else {
    report.true_negative_rate = 1.0;
  }
  return report;
}

void write_detection_header(std::ostream& out) {
  out << "scenario,fault_kind,magnitude,sensor,detected,true_positive_rate,true_negative_rate,"
         "false_positive_rate,false_negative_rate,detection_delay\n";
}

void write_detection_row(std::ostream& out, int scenario_id, const std::string& kind,
                         double magnitude, Index sensor, const DetectionReport& report) {
  out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", scenario_id,
                     kind, magnitude, sensor, report.detected() ? 1 : 0,
                     report.true_positive_rate, report.true_negative_rate,
                     report.false_positive_rate, report.false_negative_rate,
                     report.detection_delay ? fmt::format("{}", *report.detection_delay)
                                            : std::string("inf"));
}

}  // namespace ecf
