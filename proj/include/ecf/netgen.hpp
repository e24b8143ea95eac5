#pragma once

// Synthetic sensor-network panels and sensor-fault injection.
//
// A panel is a time-indexed matrix of readings, one column per sensor. The
// generator mixes a low-dimensional latent state (diurnal sinusoids plus a slow
// mean-reverting walk) into every channel, so each pressure channel is well
// approximated by a linear function of the remaining channels.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ecf {

using Index = Eigen::Index;

enum class SensorKind { Pressure, Flow };

const char* to_string(SensorKind kind);
SensorKind sensor_kind_from_string(const std::string& text);

struct ScenarioConfig {
  int n_pressure = 12;
  int n_flow = 2;
  int n_steps = 2000;
  int train_end = 700;
  int latent_dim = 3;
  double noise_std = 0.01;
  std::uint64_t seed = 1;

  int n_sensors() const { return n_pressure + n_flow; }

  // Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

/// Immutable matrix of readings [n_steps x n_sensors] with per-column metadata.
class ReadingsPanel {
 public:
  ReadingsPanel(Eigen::MatrixXd values, std::vector<SensorKind> kinds,
                std::vector<std::string> labels);

  const Eigen::MatrixXd& values() const { return values_; }
  const std::vector<SensorKind>& kinds() const { return kinds_; }
  const std::vector<std::string>& labels() const { return labels_; }

  Index n_steps() const { return values_.rows(); }
  Index n_sensors() const { return values_.cols(); }
  double at(Index t, Index sensor) const { return values_(t, sensor); }

  bool is_pressure(Index sensor) const {
    return kinds_.at(static_cast<std::size_t>(sensor)) == SensorKind::Pressure;
  }
  std::vector<Index> pressure_channels() const;

  bool operator==(const ReadingsPanel& other) const = default;

 private:
  Eigen::MatrixXd values_;
  std::vector<SensorKind> kinds_;
  std::vector<std::string> labels_;
};

// Fault kinds. Magnitudes live in the alternative itself.
struct ConstantOffset {
  double offset = 0.0;
};
struct GaussianNoise {
  double sigma = 0.0;
};
struct PowerFailure {};
struct ProportionalOffset {
  double alpha = 0.0;
};
struct Drift {
  double rate = 0.0;
  double cap = 0.0;  // upper limit on the faulty reading
};

using FaultKind =
    std::variant<ConstantOffset, GaussianNoise, PowerFailure, ProportionalOffset, Drift>;

std::string fault_kind_name(const FaultKind& kind);
/// Scalar magnitude of a fault kind (0 for PowerFailure, rate for Drift).
double fault_magnitude(const FaultKind& kind);

struct FaultSpec {
  FaultKind kind;
  Index sensor = 0;
  Index onset = 0;

  // Checks the fault against a panel shape and its fault-free training prefix.
  void validate(const ReadingsPanel& panel, Index train_end) const;
};

struct Scenario {
  ScenarioConfig config;
  ReadingsPanel clean;
  ReadingsPanel faulty;
  FaultSpec fault;
};

/// values[t] = M s(t) + mu + eps(t). Pure function of the config (seed included).
ReadingsPanel generate_clean(const ScenarioConfig& config);

/// Applies `fault` to channel `fault.sensor` for t >= onset. `seed` drives the
/// GaussianNoise draws and is ignored by the other kinds.
ReadingsPanel inject_fault(const ReadingsPanel& clean, const FaultSpec& fault,
                           std::uint64_t seed);

// CSV: header `label:kind` per column, one row per time step.
class CsvParseError : public std::runtime_error {
 public:
  CsvParseError(std::size_t line, std::size_t column, const std::string& what);
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

void write_csv(const ReadingsPanel& panel, std::ostream& out);
void write_csv(const ReadingsPanel& panel, const std::filesystem::path& path);
ReadingsPanel load_csv(std::istream& in);
ReadingsPanel load_csv(const std::filesystem::path& path);

}  // namespace ecf
