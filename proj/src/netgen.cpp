#include "ecf/netgen.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <random>

namespace ecf {

namespace {

// Latent dynamics: a small diurnal sinusoid plus a smoothed random walk (an
// AR(1) velocity integrated into a slowly mean-reverting level). Per-step
// changes stay well below the default sensor noise, so the short lag between
// a virtual sensor's input window and its target costs little accuracy.
constexpr int kDiurnalPeriod = 96;
constexpr double kSinusoidAmplitude = 0.005;
constexpr double kVelocityPersistence = 0.99;
constexpr double kVelocityStepStd = 1.5e-4;
constexpr double kLevelPersistence = 0.995;

constexpr double kMixMin = 0.5;
constexpr double kMixMax = 1.5;
constexpr double kPressureLevelMin = 30.0;
constexpr double kPressureLevelMax = 60.0;
constexpr double kFlowLevelMin = 5.0;
constexpr double kFlowLevelMax = 15.0;

// Minimum ratio of smallest to largest singular value accepted for the mixing.
constexpr double kMixConditionFloor = 1e-3;

std::string channel_label(SensorKind kind, int index) {
  return fmt::format("{}{:02d}", kind == SensorKind::Pressure ? 'p' : 'f', index);
}

Eigen::MatrixXd draw_mixing(Index rows, Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> magnitude(kMixMin, kMixMax);
  std::bernoulli_distribution negative(0.5);
  while (true) {
    Eigen::MatrixXd mix(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        mix(i, j) = negative(rng) ? -magnitude(rng) : magnitude(rng);
      }
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(mix);
    const auto& sv = svd.singularValues();
    if (sv(sv.size() - 1) > kMixConditionFloor * sv(0)) return mix;
  }
}

}  // namespace

const char* to_string(SensorKind kind) {
  return kind == SensorKind::Pressure ? "pressure" : "flow";
}

SensorKind sensor_kind_from_string(const std::string& text) {
  if (text == "pressure") return SensorKind::Pressure;
  if (text == "flow") return SensorKind::Flow;
  throw std::invalid_argument("unknown sensor kind '" + text + "'");
}

void ScenarioConfig::validate() const {
  if (n_pressure < 2) throw std::invalid_argument("n_pressure must be >= 2");
  if (n_flow < 0) throw std::invalid_argument("n_flow must be >= 0");
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
  if (train_end < 0 || train_end >= n_steps) {
    throw std::invalid_argument("train_end must lie in [0, n_steps)");
  }
  if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be >= 0");
}

ReadingsPanel::ReadingsPanel(Eigen::MatrixXd values, std::vector<SensorKind> kinds,
                             std::vector<std::string> labels)
    : values_(std::move(values)), kinds_(std::move(kinds)), labels_(std::move(labels)) {
  if (static_cast<Index>(kinds_.size()) != values_.cols() ||
      static_cast<Index>(labels_.size()) != values_.cols()) {
    throw std::invalid_argument("panel metadata does not match column count");
  }
  if (!values_.allFinite()) throw std::invalid_argument("panel contains non-finite values");
}

std::vector<Index> ReadingsPanel::pressure_channels() const {
  std::vector<Index> out;
  for (Index k = 0; k < n_sensors(); ++k) {
    if (is_pressure(k)) out.push_back(k);
  }
  return out;
}

std::string fault_kind_name(const FaultKind& kind) {
  struct Visitor {
    std::string operator()(const ConstantOffset&) const { return "constant_offset"; }
    std::string operator()(const GaussianNoise&) const { return "gaussian_noise"; }
    std::string operator()(const PowerFailure&) const { return "power_failure"; }
    std::string operator()(const ProportionalOffset&) const { return "proportional_offset"; }
    std::string operator()(const Drift&) const { return "drift"; }
  };
  return std::visit(Visitor{}, kind);
}

double fault_magnitude(const FaultKind& kind) {
  struct Visitor {
    double operator()(const ConstantOffset& f) const { return f.offset; }
    double operator()(const GaussianNoise& f) const { return f.sigma; }
    double operator()(const PowerFailure&) const { return 0.0; }
    double operator()(const ProportionalOffset& f) const { return f.alpha; }
    double operator()(const Drift& f) const { return f.rate; }
  };
  return std::visit(Visitor{}, kind);
}

void FaultSpec::validate(const ReadingsPanel& panel, Index train_end) const {
  if (sensor < 0 || sensor >= panel.n_sensors()) {
    throw std::invalid_argument(fmt::format("fault sensor {} out of range", sensor));
  }
  if (!panel.is_pressure(sensor)) {
    throw std::invalid_argument(
        fmt::format("fault sensor {} is not a pressure channel", panel.labels()[sensor]));
  }
  if (onset <= train_end || onset >= panel.n_steps()) {
    throw std::invalid_argument(fmt::format(
        "fault onset {} must lie in ({}, {})", onset, train_end, panel.n_steps()));
  }
  if (const auto* noise = std::get_if<GaussianNoise>(&kind); noise && !(noise->sigma >= 0)) {
    throw std::invalid_argument("gaussian noise sigma must be >= 0");
  }
  if (const auto* drift = std::get_if<Drift>(&kind); drift && !(drift->rate >= 0)) {
    throw std::invalid_argument("drift rate must be >= 0");
  }
}

ReadingsPanel generate_clean(const ScenarioConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  const Index n = config.n_sensors();
  const Index steps = config.n_steps;
  const Index latent = config.latent_dim;

  const Eigen::MatrixXd mix = draw_mixing(n, latent, rng);

  std::vector<SensorKind> kinds;
  std::vector<std::string> labels;
  Eigen::VectorXd level(n);
  for (int k = 0; k < config.n_pressure; ++k) {
    kinds.push_back(SensorKind::Pressure);
    labels.push_back(channel_label(SensorKind::Pressure, k));
    level(k) = std::uniform_real_distribution<double>(kPressureLevelMin, kPressureLevelMax)(rng);
  }
  for (int k = 0; k < config.n_flow; ++k) {
    kinds.push_back(SensorKind::Flow);
    labels.push_back(channel_label(SensorKind::Flow, k));
    level(config.n_pressure + k) =
        std::uniform_real_distribution<double>(kFlowLevelMin, kFlowLevelMax)(rng);
  }

  Eigen::VectorXd phase(latent);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (Index j = 0; j < latent; ++j) phase(j) = angle(rng);

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double velocity_stationary_std =
      kVelocityStepStd / std::sqrt(1.0 - kVelocityPersistence * kVelocityPersistence);
  Eigen::VectorXd velocity(latent);
  Eigen::VectorXd walk = Eigen::VectorXd::Zero(latent);
  for (Index j = 0; j < latent; ++j) velocity(j) = velocity_stationary_std * gauss(rng);

  const double omega = 2.0 * std::numbers::pi / kDiurnalPeriod;
  Eigen::MatrixXd values(steps, n);
  Eigen::VectorXd state(latent);
  for (Index t = 0; t < steps; ++t) {
    for (Index j = 0; j < latent; ++j) {
      if (t > 0) {
        velocity(j) = kVelocityPersistence * velocity(j) + kVelocityStepStd * gauss(rng);
        walk(j) = kLevelPersistence * walk(j) + velocity(j);
      }
      state(j) = kSinusoidAmplitude * std::sin(omega * static_cast<double>(t) + phase(j)) +
                 walk(j);
    }
    values.row(t) = (mix * state + level).transpose();
    if (config.noise_std > 0) {
      for (Index k = 0; k < n; ++k) values(t, k) += config.noise_std * gauss(rng);
    }
  }
  return ReadingsPanel(std::move(values), std::move(kinds), std::move(labels));
}

ReadingsPanel inject_fault(const ReadingsPanel& clean, const FaultSpec& fault,
                           std::uint64_t seed) {
  if (fault.onset < 0 || fault.onset >= clean.n_steps()) {
    throw std::invalid_argument(fmt::format("fault onset {} out of range", fault.onset));
  }
  if (fault.sensor < 0 || fault.sensor >= clean.n_sensors() || !clean.is_pressure(fault.sensor)) {
    throw std::invalid_argument("fault must target a pressure channel");
  }
  Eigen::MatrixXd values = clean.values();
  auto column = values.col(fault.sensor);
  const Index onset = fault.onset;
  const Index steps = clean.n_steps();

  struct Apply {
    decltype(column)& col;
    Index onset;
    Index steps;
    std::uint64_t seed;

    void operator()(const ConstantOffset& f) const {
      for (Index t = onset; t < steps; ++t) col(t) += f.offset;
    }
    void operator()(const GaussianNoise& f) const {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> gauss(0.0, 1.0);
      for (Index t = onset; t < steps; ++t) col(t) += f.sigma * gauss(rng);
    }
    void operator()(const PowerFailure&) const {
      for (Index t = onset; t < steps; ++t) col(t) = 0.0;
    }
    void operator()(const ProportionalOffset& f) const {
      for (Index t = onset; t < steps; ++t) col(t) *= 1.0 + f.alpha;
    }
    void operator()(const Drift& f) const {
      for (Index t = onset; t < steps; ++t) {
        const double drifted = col(t) + f.rate * static_cast<double>(t - onset);
        // Limit applies to the reading, and only to the excursion the drift causes.
        col(t) = std::max(col(t), std::min(drifted, f.cap));
      }
    }
  };
  std::visit(Apply{column, onset, steps, seed}, fault.kind);
  return ReadingsPanel(std::move(values), clean.kinds(), clean.labels());
}

}  // namespace ecf
