#include "ecf/localize.hpp"

#include <fmt/format.h>

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace ecf {

Eigen::VectorXd normalize_explanation(const Eigen::VectorXd& delta) {
  if (delta.size() == 0) return delta;
  const double scale = delta.cwiseAbs().maxCoeff();
  if (!(scale > 1e-12)) return delta;
  return delta / scale;
}

std::optional<Index> predict_faulty_sensor(const Eigen::VectorXd& delta,
                                           const std::vector<bool>& eligible) {
  if (!eligible.empty() && static_cast<Index>(eligible.size()) != delta.size()) {
    throw std::invalid_argument("eligibility mask length mismatch");
  }
  std::optional<Index> best;
  double best_abs = 0.0;
  for (Index i = 0; i < delta.size(); ++i) {
    if (!eligible.empty() && !eligible[static_cast<std::size_t>(i)]) continue;
    const double a = std::abs(delta(i));
    if (a > best_abs) {
      best_abs = a;
      best = i;
    }
  }
  return best;
}

std::vector<bool> pressure_mask(const ReadingsPanel& panel) {
  std::vector<bool> mask(static_cast<std::size_t>(panel.n_sensors()));
  for (Index k = 0; k < panel.n_sensors(); ++k) mask[static_cast<std::size_t>(k)] = panel.is_pressure(k);
  return mask;
}

namespace {

template <typename It>
std::optional<Index> mode(It begin, It end) {
  std::map<Index, int> counts;
  for (auto it = begin; it != end; ++it) {
    if (*it) ++counts[**it];
  }
  std::optional<Index> best;
  int best_count = 0;
  for (const auto& [sensor, count] : counts) {  // ascending key: first max wins ties
    if (count > best_count) {
      best_count = count;
      best = sensor;
    }
  }
  return best;
}

}  // namespace

std::optional<Index> aggregate_alarm_sequence(const std::vector<std::optional<Index>>& predictions,
                                              int k) {
  if (predictions.empty()) throw std::invalid_argument("no alarm-step predictions");
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  const auto n = std::min(predictions.size(), static_cast<std::size_t>(k));
  return mode(predictions.begin(), predictions.begin() + static_cast<std::ptrdiff_t>(n));
}

std::optional<Index> aggregate_baseline(const std::vector<Counterfactual>& per_model,
                                        const std::vector<bool>& eligible) {
  if (per_model.empty()) throw std::invalid_argument("no per-model counterfactuals");
  std::vector<std::optional<Index>> estimates;
  estimates.reserve(per_model.size());
  for (const auto& cf : per_model) estimates.push_back(predict_faulty_sensor(cf.delta, eligible));
  return mode(estimates.begin(), estimates.end());
}

LocalizationReport localization_report(std::vector<ScenarioOutcome> scenarios) {
  if (scenarios.empty()) throw std::invalid_argument("no scenarios to report");
  LocalizationReport report;
  const double n = static_cast<double>(scenarios.size());
  double ens = 0.0, base = 0.0;
  for (const auto& s : scenarios) {
    ens += s.ensemble_correct();
    base += s.baseline_correct();
  }
  // Variance of a 0/1 indicator with mean p is p(1 - p).
  report.ensemble.mean = ens / n;
  report.ensemble.variance = report.ensemble.mean * (1.0 - report.ensemble.mean);
  report.baseline.mean = base / n;
  report.baseline.variance = report.baseline.mean * (1.0 - report.baseline.mean);
  report.scenarios = std::move(scenarios);
  return report;
}

void write_localization_csv(const LocalizationReport& report, std::ostream& out) {
  out << "scenario,fault_kind,magnitude,true_sensor,ensemble_prediction,baseline_prediction,"
         "ensemble_correct,baseline_correct\n";
  auto id = [](const std::optional<Index>& p) { return p ? *p : Index{-1}; };
  for (const auto& s : report.scenarios) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", s.scenario_id, s.fault_kind, s.magnitude,
                       s.true_sensor, id(s.ensemble_prediction), id(s.baseline_prediction),
                       s.ensemble_correct() ? 1 : 0, s.baseline_correct() ? 1 : 0);
  }
}

std::vector<ScenarioOutcome> read_localization_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("localization CSV is empty");
  std::vector<ScenarioOutcome> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) {
      throw std::runtime_error(fmt::format("line {}: expected 8 cells, got {}", line_no, cells.size()));
    }
    try {
      ScenarioOutcome s;
      s.scenario_id = std::stoi(cells[0]);
      s.fault_kind = cells[1];
      s.magnitude = std::stod(cells[2]);
      s.true_sensor = std::stol(cells[3]);
      auto pred = [](const std::string& c) -> std::optional<Index> {
        const long v = std::stol(c);
        if (v < 0) return std::nullopt;
        return v;
      };
      s.ensemble_prediction = pred(cells[4]);
      s.baseline_prediction = pred(cells[5]);
      out.push_back(std::move(s));
    } catch (const std::logic_error&) {
      throw std::runtime_error(fmt::format("line {}: malformed number", line_no));
    }
  }
  return out;
}

}  // namespace ecf
