#pragma once

// Shared, lazily built fixtures: the default synthetic panel and its ensemble.

#include "ecf/detector.hpp"
#include "ecf/netgen.hpp"
#include "ecf/sensors.hpp"

#include <random>

namespace fixture {

struct DefaultRun {
  ecf::ScenarioConfig config;
  ecf::ReadingsPanel clean;
  ecf::Ensemble ensemble;
  double threshold;
};

inline const DefaultRun& default_run() {
  static const DefaultRun run = [] {
    ecf::ScenarioConfig config;
    ecf::ReadingsPanel clean = ecf::generate_clean(config);
    ecf::Ensemble ensemble = ecf::fit_ensemble(clean, 3, 3, config.train_end);
    const double threshold = ecf::calibrate_threshold(ensemble, clean, 3, config.train_end);
    return DefaultRun{config, std::move(clean), std::move(ensemble), threshold};
  }();
  return run;
}

// Small random panel for property tests; pressure channels first.
inline ecf::ReadingsPanel random_panel(std::mt19937_64& rng, int min_steps = 5,
                                       int max_steps = 40) {
  std::uniform_int_distribution<int> steps(min_steps, max_steps), pressure(2, 6), flow(0, 2);
  std::normal_distribution<double> value(40.0, 10.0);
  const int n_p = pressure(rng), n_f = flow(rng), n_t = steps(rng);
  Eigen::MatrixXd values(n_t, n_p + n_f);
  for (int t = 0; t < n_t; ++t) {
    for (int k = 0; k < n_p + n_f; ++k) values(t, k) = value(rng);
  }
  std::vector<ecf::SensorKind> kinds;
  std::vector<std::string> labels;
  for (int k = 0; k < n_p; ++k) {
    kinds.push_back(ecf::SensorKind::Pressure);
    labels.push_back("p" + std::to_string(k));
  }
  for (int k = 0; k < n_f; ++k) {
    kinds.push_back(ecf::SensorKind::Flow);
    labels.push_back("f" + std::to_string(k));
  }
  return ecf::ReadingsPanel(std::move(values), std::move(kinds), std::move(labels));
}

}  // namespace fixture
