#include "ecf/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace ecf {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"scenario", {"n_pressure", "n_flow", "n_steps", "train_end", "latent_dim", "noise_std"}},
      {"grid",
       {"kinds", "seeds", "constant_offset", "gaussian_noise", "proportional_offset", "drift",
        "drift_cap", "power_failure_replicates", "onset_gap"}},
      {"sensors", {"window"}},
      {"detector", {"margin"}},
      {"explain",
       {"lambda", "complexity", "distance", "tolerances", "classification_margin", "tol_abs",
        "tol_rel", "max_iters", "rho"}},
      {"localize", {"k", "pressure_only"}},
      {"output", {"dir"}},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(trim(text));
  T value{};
  if constexpr (std::is_same_v<T, bool>) {
    const std::string t = trim(text);
    if (t == "true" || t == "1") return true;
    if (t == "false" || t == "0") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
  } else {
    in >> value;
    if (!in || !(in >> std::ws).eof()) {
      throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
    }
  }
  return value;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_value<T>(key, item));
  return out;
}

}  // namespace

std::vector<double> GridConfig::magnitudes(const std::string& kind) const {
  if (kind == "constant_offset") return constant_offset;
  if (kind == "gaussian_noise") return gaussian_noise;
  if (kind == "proportional_offset") return proportional_offset;
  if (kind == "drift") return drift;
  if (kind == "power_failure") {
    return std::vector<double>(static_cast<std::size_t>(std::max(power_failure_replicates, 0)), 0.0);
  }
  throw ConfigError("unknown fault kind '" + kind + "'");
}

FaultKind make_fault_kind(const std::string& name, double magnitude, double drift_cap) {
  if (name == "constant_offset") return ConstantOffset{magnitude};
  if (name == "gaussian_noise") return GaussianNoise{magnitude};
  if (name == "power_failure") return PowerFailure{};
  if (name == "proportional_offset") return ProportionalOffset{magnitude};
  if (name == "drift") return Drift{magnitude, drift_cap};
  throw ConfigError("unknown fault kind '" + name + "'");
}

void RunConfig::validate() const {
  try {
    scenario.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("[scenario] {}", e.what()));
  }
  if (grid.kinds.empty()) throw ConfigError("[grid] kinds must not be empty");
  if (grid.seeds.empty()) throw ConfigError("[grid] seeds must not be empty");
  std::size_t scenarios = 0;
  for (const auto& kind : grid.kinds) {
    const auto mags = grid.magnitudes(kind);
    for (double m : mags) {
      if (!std::isfinite(m) || m < 0.0) {
        throw ConfigError(fmt::format("[grid] {} magnitudes must be finite and >= 0", kind));
      }
    }
    scenarios += mags.size();
  }
  if (scenarios == 0) throw ConfigError("[grid] no scenarios: every kind has zero magnitudes");
  if (grid.onset_gap < 1) throw ConfigError("[grid] onset_gap must be >= 1");
  if (scenario.train_end + grid.onset_gap >= scenario.n_steps) {
    throw ConfigError("[grid] onset_gap leaves no post-onset steps");
  }
  if (window < 1) throw ConfigError("[sensors] window must be >= 1");
  if (window >= scenario.train_end - 50) {
    throw ConfigError("[sensors] window leaves fewer than 50 calibration steps");
  }
  if (!(detector_margin >= 1.0)) throw ConfigError("[detector] margin must be >= 1");
  try {
    explain.validate(explain.tolerances.empty() ? 0 : explain.tolerances.size());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("[explain] {}", e.what()));
  }
  if (!explain.tolerances.empty() &&
      explain.tolerances.size() != static_cast<std::size_t>(scenario.n_pressure)) {
    throw ConfigError("[explain] tolerances needs one value per pressure sensor");
  }
  if (!(explain.solver.tol_abs > 0) || !(explain.solver.tol_rel >= 0) ||
      explain.solver.max_iters < 1 || !(explain.solver.rho > 0)) {
    throw ConfigError("[explain] solver settings out of range");
  }
  if (alarm_steps < 1) throw ConfigError("[localize] k must be >= 1");
}

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }

  RunConfig c;
  for (const auto& [section, body] : tree) {
    const auto known = known_keys().find(section);
    if (known == known_keys().end()) {
      if (body.empty()) throw ConfigError(fmt::format("key '{}' outside any section", section));
      throw ConfigError(fmt::format("unknown section [{}]", section));
    }
    for (const auto& [key, node] : body) {
      if (!known->second.count(key)) {
        throw ConfigError(fmt::format("unknown key '{}' in [{}]", key, section));
      }
      const std::string name = section + "." + key;
      const std::string v = node.data();
      if (section == "scenario") {
        if (key == "n_pressure") c.scenario.n_pressure = parse_value<int>(name, v);
        if (key == "n_flow") c.scenario.n_flow = parse_value<int>(name, v);
        if (key == "n_steps") c.scenario.n_steps = parse_value<int>(name, v);
        if (key == "train_end") c.scenario.train_end = parse_value<int>(name, v);
        if (key == "latent_dim") c.scenario.latent_dim = parse_value<int>(name, v);
        if (key == "noise_std") c.scenario.noise_std = parse_value<double>(name, v);
      } else if (section == "grid") {
        if (key == "kinds") c.grid.kinds = split_list(v);
        if (key == "seeds") c.grid.seeds = parse_list<std::uint64_t>(name, v);
        if (key == "constant_offset") c.grid.constant_offset = parse_list<double>(name, v);
        if (key == "gaussian_noise") c.grid.gaussian_noise = parse_list<double>(name, v);
        if (key == "proportional_offset") c.grid.proportional_offset = parse_list<double>(name, v);
        if (key == "drift") c.grid.drift = parse_list<double>(name, v);
        if (key == "drift_cap") c.grid.drift_cap = parse_value<double>(name, v);
        if (key == "power_failure_replicates") {
          c.grid.power_failure_replicates = parse_value<int>(name, v);
        }
        if (key == "onset_gap") c.grid.onset_gap = parse_value<int>(name, v);
      } else if (section == "sensors") {
        c.window = parse_value<int>(name, v);
      } else if (section == "detector") {
        c.detector_margin = parse_value<double>(name, v);
      } else if (section == "explain") {
        if (key == "lambda") c.explain.lambda = parse_value<double>(name, v);
        if (key == "complexity") c.explain.complexity = complexity_from_string(trim(v));
        if (key == "distance") c.explain.distance = distance_from_string(trim(v));
        if (key == "tolerances") c.explain.tolerances = parse_list<double>(name, v);
        if (key == "classification_margin") {
          c.explain.classification_margin = parse_value<double>(name, v);
        }
        if (key == "tol_abs") c.explain.solver.tol_abs = parse_value<double>(name, v);
        if (key == "tol_rel") c.explain.solver.tol_rel = parse_value<double>(name, v);
        if (key == "max_iters") c.explain.solver.max_iters = parse_value<int>(name, v);
        if (key == "rho") c.explain.solver.rho = parse_value<double>(name, v);
      } else if (section == "localize") {
        if (key == "k") c.alarm_steps = parse_value<int>(name, v);
        if (key == "pressure_only") c.pressure_only = parse_value<bool>(name, v);
      } else if (section == "output") {
        c.output_dir = trim(v);
      }
    }
  }
  for (const auto& kind : c.grid.kinds) c.grid.magnitudes(kind);  // rejects unknown kinds
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_config(in);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void apply_environment(RunConfig& config) {
  if (const char* dir = std::getenv("ECF_OUTPUT_DIR"); dir && *dir) config.output_dir = dir;
}

void write_config(const RunConfig& c, std::ostream& out) {
  const auto list = [](const auto& values) { return fmt::format("{}", fmt::join(values, ", ")); };
  out << "[scenario]\n"
      << fmt::format("n_pressure = {}\nn_flow = {}\nn_steps = {}\ntrain_end = {}\n",
                     c.scenario.n_pressure, c.scenario.n_flow, c.scenario.n_steps,
                     c.scenario.train_end)
      << fmt::format("latent_dim = {}\nnoise_std = {}\n\n", c.scenario.latent_dim,
                     c.scenario.noise_std);
  out << "[grid]\n"
      << "kinds = " << list(c.grid.kinds) << "\n"
      << "seeds = " << list(c.grid.seeds) << "\n"
      << "constant_offset = " << list(c.grid.constant_offset) << "\n"
      << "gaussian_noise = " << list(c.grid.gaussian_noise) << "\n"
      << "proportional_offset = " << list(c.grid.proportional_offset) << "\n"
      << "drift = " << list(c.grid.drift) << "\n"
      << fmt::format("drift_cap = {}\npower_failure_replicates = {}\nonset_gap = {}\n\n",
                     c.grid.drift_cap, c.grid.power_failure_replicates, c.grid.onset_gap);
  out << fmt::format("[sensors]\nwindow = {}\n\n[detector]\nmargin = {}\n\n", c.window,
                     c.detector_margin);
  out << "[explain]\n"
      << fmt::format("lambda = {}\ncomplexity = {}\ndistance = {}\n", c.explain.lambda,
                     to_string(c.explain.complexity), to_string(c.explain.distance));
  if (!c.explain.tolerances.empty()) out << "tolerances = " << list(c.explain.tolerances) << "\n";
  out << fmt::format("classification_margin = {}\ntol_abs = {}\ntol_rel = {}\nmax_iters = {}\n",
                     c.explain.classification_margin, c.explain.solver.tol_abs,
                     c.explain.solver.tol_rel, c.explain.solver.max_iters)
      << fmt::format("rho = {}\n\n", c.explain.solver.rho);
  out << fmt::format("[localize]\nk = {}\npressure_only = {}\n\n", c.alarm_steps,
                     c.pressure_only ? "true" : "false");
  out << fmt::format("[output]\ndir = {}\n", c.output_dir.string());
}

}  // namespace ecf
