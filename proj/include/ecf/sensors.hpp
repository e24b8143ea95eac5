#pragma once

// Windowed linear virtual sensors: one regression per pressure channel that
// predicts the channel from the window-averaged readings of every other channel.

#include "ecf/netgen.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace ecf {

struct LinearModel {
  Eigen::VectorXd weights;  // over all channels except `target`, in channel order
  double bias = 0.0;
  Index target = 0;
  int window = 3;

  Index n_sensors() const { return weights.size() + 1; }

  /// Weights scattered into a full-length vector, zero at `target`.
  Eigen::VectorXd full_weights() const;

  bool operator==(const LinearModel& other) const {
    return weights == other.weights && bias == other.bias && target == other.target &&
           window == other.window;
  }
};

struct Ensemble {
  std::vector<LinearModel> models;  // one per pressure channel, ascending target
  int window = 3;

  Index n_sensors() const { return models.empty() ? 0 : models.front().n_sensors(); }
  std::size_t size() const { return models.size(); }

  bool operator==(const Ensemble& other) const = default;
};

/// Drops channel `exclude` from a full-length vector.
Eigen::VectorXd without_channel(const Eigen::Ref<const Eigen::VectorXd>& x, Index exclude);

/// (1/T) * sum_{j=1..T} x_{t-j}, with channel `exclude` removed. Requires t >= T.
Eigen::VectorXd window_average(const ReadingsPanel& panel, Index t, int window, Index exclude);

/// Least-squares fit over time steps [range_begin, range_end) via complete
/// orthogonal decomposition; rank-deficient designs yield the minimum-norm fit.
LinearModel fit_virtual_sensor(const ReadingsPanel& panel, Index target, int window,
                               Index range_begin, Index range_end);

/// One model per pressure channel, all trained on the same range.
Ensemble fit_ensemble(const ReadingsPanel& panel, int window, Index range_begin,
                      Index range_end);

double predict(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& input);

/// prediction - observed at step t using the lagged window.
double window_residual(const LinearModel& model, const ReadingsPanel& panel, Index t);

// One line per model: target window bias w_1 ... w_{n-1}, shortest round-trip decimals.
void write_models(const Ensemble& ensemble, std::ostream& out);
void write_models(const Ensemble& ensemble, const std::filesystem::path& path);
Ensemble read_models(std::istream& in);
Ensemble read_models(const std::filesystem::path& path);

}  // namespace ecf
