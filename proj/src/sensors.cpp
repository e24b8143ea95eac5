#include "ecf/sensors.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace ecf {

Eigen::VectorXd LinearModel::full_weights() const {
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n_sensors());
  full.head(target) = weights.head(target);
  full.tail(n_sensors() - target - 1) = weights.tail(n_sensors() - target - 1);
  return full;
}

Eigen::VectorXd without_channel(const Eigen::Ref<const Eigen::VectorXd>& x, Index exclude) {
  const Index n = x.size();
  if (exclude < 0 || exclude >= n) throw std::out_of_range("excluded channel out of range");
  Eigen::VectorXd out(n - 1);
  out.head(exclude) = x.head(exclude);
  out.tail(n - exclude - 1) = x.tail(n - exclude - 1);
  return out;
}

Eigen::VectorXd window_average(const ReadingsPanel& panel, Index t, int window, Index exclude) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  if (t < window || t > panel.n_steps()) {
    throw std::out_of_range(fmt::format("window of {} steps before t={} is unavailable", window, t));
  }
  const Eigen::VectorXd mean =
      panel.values().middleRows(t - window, window).colwise().mean().transpose();
  return without_channel(mean, exclude);
}

LinearModel fit_virtual_sensor(const ReadingsPanel& panel, Index target, int window,
                               Index range_begin, Index range_end) {
  if (target < 0 || target >= panel.n_sensors()) {
    throw std::out_of_range("target channel out of range");
  }
  if (range_begin < window || range_end > panel.n_steps()) {
    throw std::out_of_range(fmt::format("training range [{}, {}) invalid for window {}",
                                        range_begin, range_end, window));
  }
  const Index rows = range_end - range_begin;
  const Index inputs = panel.n_sensors() - 1;
  if (rows <= panel.n_sensors() + 1) {
    throw std::invalid_argument(fmt::format(
        "training range of {} steps underdetermines {} coefficients", rows, inputs + 1));
  }

  Eigen::MatrixXd design(rows, inputs + 1);
  Eigen::VectorXd observed(rows);
  for (Index r = 0; r < rows; ++r) {
    const Index t = range_begin + r;
    design.row(r).head(inputs) = window_average(panel, t, window, target).transpose();
    design(r, inputs) = 1.0;
    observed(r) = panel.at(t, target);
  }
  const Eigen::VectorXd coef = design.completeOrthogonalDecomposition().solve(observed);

  LinearModel model;
  model.weights = coef.head(inputs);
  model.bias = coef(inputs);
  model.target = target;
  model.window = window;
  return model;
}

Ensemble fit_ensemble(const ReadingsPanel& panel, int window, Index range_begin,
                      Index range_end) {
  Ensemble ensemble;
  ensemble.window = window;
  for (const Index target : panel.pressure_channels()) {
    ensemble.models.push_back(fit_virtual_sensor(panel, target, window, range_begin, range_end));
  }
  return ensemble;
}

double predict(const LinearModel& model, const Eigen::Ref<const Eigen::VectorXd>& input) {
  if (input.size() != model.weights.size()) {
    throw std::invalid_argument(fmt::format("model expects {} inputs, got {}",
                                            model.weights.size(), input.size()));
  }
  return model.weights.dot(input) + model.bias;
}

double window_residual(const LinearModel& model, const ReadingsPanel& panel, Index t) {
  return predict(model, window_average(panel, t, model.window, model.target)) -
         panel.at(t, model.target);
}

void write_models(const Ensemble& ensemble, std::ostream& out) {
  for (const auto& model : ensemble.models) {
    out << fmt::format("{} {} {}", model.target, model.window, model.bias);
    for (const double w : model.weights) out << fmt::format(" {}", w);
    out << '\n';
  }
}

void write_models(const Ensemble& ensemble, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_models(ensemble, out);
}

Ensemble read_models(std::istream& in) {
  Ensemble ensemble;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream fields(line);
    LinearModel model;
    if (!(fields >> model.target >> model.window >> model.bias)) {
      throw std::runtime_error(fmt::format("model file line {}: malformed header fields", line_no));
    }
    std::vector<double> weights;
    double w = 0.0;
    while (fields >> w) weights.push_back(w);
    if (!fields.eof()) {
      throw std::runtime_error(fmt::format("model file line {}: non-numeric weight", line_no));
    }
    model.weights = Eigen::Map<Eigen::VectorXd>(weights.data(), static_cast<Index>(weights.size()));
    if (!ensemble.models.empty()) {
      if (model.n_sensors() != ensemble.n_sensors() || model.window != ensemble.window) {
        throw std::runtime_error(fmt::format("model file line {}: inconsistent shape", line_no));
      }
    } else {
      ensemble.window = model.window;
    }
    if (model.target < 0 || model.target >= model.n_sensors()) {
      throw std::runtime_error(fmt::format("model file line {}: target out of range", line_no));
    }
    ensemble.models.push_back(std::move(model));
  }
  return ensemble;
}

Ensemble read_models(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_models(in);
}

}  // namespace ecf
