#include "ecf/explain.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace ecf {

double CfConfig::tolerance(std::size_t constraint) const {
  if (tolerances.empty()) return default_tolerance;
  return tolerances.at(constraint);
}

void CfConfig::validate(std::size_t n_constraints) const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument(fmt::format("lambda must be positive and finite, got {}", lambda));
  }
  if (!tolerances.empty() && tolerances.size() != n_constraints) {
    throw std::invalid_argument(fmt::format("{} tolerances given for {} constraints",
                                            tolerances.size(), n_constraints));
  }
  for (std::size_t i = 0; i < n_constraints; ++i) {
    const double tol = tolerance(i);
    if (!(tol >= 0.0) || !std::isfinite(tol)) {
      throw std::invalid_argument(fmt::format("tolerance {} must be finite and >= 0", i));
    }
  }
  if (!(classification_margin >= 0.0)) {
    throw std::invalid_argument("classification margin must be >= 0");
  }
}

Complexity complexity_from_string(const std::string& text) {
  if (text == "l1" || text == "L1") return Complexity::L1;
  if (text == "l2" || text == "L2") return Complexity::L2;
  throw std::invalid_argument("unknown complexity '" + text + "' (expected l1 or l2)");
}

Distance distance_from_string(const std::string& text) {
  if (text == "abs") return Distance::Abs;
  if (text == "squared") return Distance::Squared;
  throw std::invalid_argument("unknown distance '" + text + "' (expected abs or squared)");
}

const char* to_string(Complexity complexity) {
  return complexity == Complexity::L1 ? "l1" : "l2";
}

const char* to_string(Distance distance) {
  return distance == Distance::Abs ? "abs" : "squared";
}

Eigen::VectorXd RelaxedProgram::delta(const Eigen::VectorXd& z) const {
  if (complexity == Complexity::L1) return z.head(n_inputs) - z.segment(n_inputs, n_inputs);
  return z.head(n_inputs);
}

Eigen::VectorXd RelaxedProgram::slack(const Eigen::VectorXd& z) const {
  return z.tail(n_constraints);
}

RelaxedProgram build_relaxed_program(const Eigen::VectorXd& x_orig, Complexity complexity,
                                     const std::vector<FidelityConstraint>& constraints) {
  const Index n = x_orig.size();
  const Index m = static_cast<Index>(constraints.size());
  if (n == 0) throw std::invalid_argument("empty snapshot");

  // Rows: one per finite bound of each constraint, then nonnegativity.
  Index bound_rows = 0;
  for (const auto& c : constraints) {
    if (c.coeffs.size() != n) {
      throw std::invalid_argument(
          fmt::format("constraint has {} coefficients for {} inputs", c.coeffs.size(), n));
    }
    if (!(c.lower <= c.upper)) throw std::invalid_argument("constraint with lower > upper");
    if (c.linear_cost < 0.0 || c.quadratic_cost < 0.0) {
      throw std::invalid_argument("slack costs must be >= 0");
    }
    bound_rows += std::isfinite(c.lower) + std::isfinite(c.upper);
  }

  RelaxedProgram out;
  out.complexity = complexity;
  out.n_inputs = n;
  out.n_constraints = m;

  const bool l1 = complexity == Complexity::L1;
  const Index delta_vars = l1 ? 2 * n : n;
  const Index vars = delta_vars + m;
  const Index sign_rows = (l1 ? 2 * n : 0) + m;

  auto& p = out.problem;
  p.P = Eigen::MatrixXd::Zero(vars, vars);
  p.q = Eigen::VectorXd::Zero(vars);
  p.A = Eigen::MatrixXd::Zero(bound_rows + sign_rows, vars);
  p.l = Eigen::VectorXd::Constant(bound_rows + sign_rows, -optim::kInf);
  p.u = Eigen::VectorXd::Constant(bound_rows + sign_rows, optim::kInf);

  if (l1) {
    p.q.head(2 * n).setOnes();
  } else {
    p.P.topLeftCorner(n, n).diagonal().setConstant(2.0);
  }

  Index row = 0;
  for (Index i = 0; i < m; ++i) {
    const auto& c = constraints[static_cast<std::size_t>(i)];
    const Index s = delta_vars + i;
    p.q(s) = c.linear_cost;
    p.P(s, s) = 2.0 * c.quadratic_cost;
    const double at_origin = c.coeffs.dot(x_orig) + c.offset;
    auto fill = [&](double slack_sign) {
      p.A.row(row).head(n) = c.coeffs.transpose();
      if (l1) p.A.row(row).segment(n, n) = -c.coeffs.transpose();
      p.A(row, s) = slack_sign;
    };
    if (std::isfinite(c.upper)) {
      fill(-1.0);
      p.u(row) = c.upper - at_origin;
      ++row;
    }
    if (std::isfinite(c.lower)) {
      fill(1.0);
      p.l(row) = c.lower - at_origin;
      ++row;
    }
  }
  const Index first_nonneg = l1 ? 0 : delta_vars;
  for (Index v = first_nonneg; v < vars; ++v) {
    p.A(row, v) = 1.0;
    p.l(row) = 0.0;
    ++row;
  }
  return out;
}

Eigen::VectorXd snapshot_at_alarm(const ReadingsPanel& panel, const Ensemble& ensemble,
                                  Index t) {
  if (t < ensemble.window) {
    throw std::out_of_range(fmt::format("step {} precedes the first full window", t));
  }
  if (t >= panel.n_steps()) throw std::out_of_range(fmt::format("step {} beyond panel", t));
  if (!ensemble.models.empty() && ensemble.n_sensors() != panel.n_sensors()) {
    throw std::invalid_argument("ensemble and panel disagree on sensor count");
  }
  return panel.values().row(t).transpose();
}

Eigen::VectorXd snapshot_residuals(const Ensemble& ensemble, const Eigen::VectorXd& x) {
  Eigen::VectorXd r(static_cast<Index>(ensemble.size()));
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto& model = ensemble.models[i];
    if (model.n_sensors() != x.size()) throw std::invalid_argument("snapshot length mismatch");
    r(static_cast<Index>(i)) = model.full_weights().dot(x) + model.bias - x(model.target);
  }
  return r;
}

FidelityConstraint regression_constraint(const LinearModel& model, double target_value,
                                         double tolerance, const CfConfig& cfg) {
  FidelityConstraint c;
  c.coeffs = model.full_weights();
  c.coeffs(model.target) = -1.0;
  c.offset = model.bias - target_value;
  if (cfg.distance == Distance::Abs) {
    c.lower = -tolerance;
    c.upper = tolerance;
    c.linear_cost = cfg.lambda;
  } else {
    // r^2 <= tol + xi rewritten exactly as |r| <= sqrt(tol) + e with
    // xi = e^2 + 2 sqrt(tol) e, which keeps the program a convex QP.
    const double root = std::sqrt(tolerance);
    c.lower = -root;
    c.upper = root;
    c.linear_cost = 2.0 * cfg.lambda * root;
    c.quadratic_cost = cfg.lambda;
  }
  return c;
}

namespace {

void check_ensemble(const Ensemble& ensemble, const Eigen::VectorXd& x_orig) {
  if (ensemble.models.empty()) throw std::invalid_argument("empty ensemble");
  for (const auto& model : ensemble.models) {
    if (model.n_sensors() != x_orig.size()) {
      throw std::invalid_argument(fmt::format("model for sensor {} expects {} inputs, got {}",
                                              model.target, model.n_sensors(), x_orig.size()));
    }
  }
}

std::vector<FidelityConstraint> regression_constraints(const Ensemble& ensemble,
                                                       const Eigen::VectorXd& targets,
                                                       const CfConfig& cfg) {
  std::vector<FidelityConstraint> out;
  out.reserve(ensemble.size());
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    out.push_back(regression_constraint(ensemble.models[i], targets(static_cast<Index>(i)),
                                        cfg.tolerance(i), cfg));
  }
  return out;
}

// Distance value of a constraint at x_cf in the units of its tolerance.
double excess(const FidelityConstraint& c, const Eigen::VectorXd& x_cf, bool squared,
              double tolerance) {
  const double value = c.coeffs.dot(x_cf) + c.offset;
  if (squared) return value * value - tolerance;
  return std::max(c.lower - value, value - c.upper);
}

Counterfactual solve_relaxed(const RelaxedProgram& program, const Eigen::VectorXd& x_orig,
                             const CfConfig& cfg) {
  const optim::Solution sol = optim::solve(program.problem, cfg.solver);
  if (sol.status != optim::Status::Optimal) {
    throw SolverError(sol.status, fmt::format("counterfactual solve ended {} after {} iterations: {}",
                                              optim::to_string(sol.status), sol.iterations,
                                              sol.detail));
  }
  Counterfactual cf;
  cf.delta = program.delta(sol.z);
  cf.x_cf = x_orig + cf.delta;
  cf.slacks = program.slack(sol.z).cwiseMax(0.0);
  cf.objective = sol.objective;
  cf.status = sol.status;
  cf.iterations = sol.iterations;
  cf.kkt = optim::kkt_residuals(program.problem, sol);
  cf.kkt_certified = optim::certified(cf.kkt, cfg.solver);
  return cf;
}

// Fills slacks/feasibility in constraint units and rechecks every constraint.
void finish(Counterfactual& cf, const std::vector<FidelityConstraint>& constraints,
            const CfConfig& cfg, bool squared) {
  double max_excess = -optim::kInf;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const Index k = static_cast<Index>(i);
    if (squared) {
      const double e = cf.slacks(k);
      cf.slacks(k) = e * e + 2.0 * std::sqrt(cfg.tolerance(i)) * e;
    }
    max_excess = std::max(max_excess, excess(constraints[i], cf.x_cf, squared, cfg.tolerance(i)));
  }
  cf.max_excess = max_excess;
  cf.feasible_without_slack = cf.slacks.size() == 0 || cf.slacks.maxCoeff() <= kSlackZero;
  const double max_slack = cf.slacks.size() == 0 ? 0.0 : cf.slacks.maxCoeff();
  if (cf.feasible_without_slack && cf.max_excess > max_slack + 1e-9) {
    throw std::logic_error(fmt::format(
        "slack-free counterfactual violates a constraint by {:.3g} at x_cf", cf.max_excess));
  }
}

}  // namespace

RelaxedProgram build_regression_cf(const Ensemble& ensemble, const Eigen::VectorXd& x_orig,
                                   const Eigen::VectorXd& targets, const CfConfig& cfg) {
  check_ensemble(ensemble, x_orig);
  if (targets.size() != static_cast<Index>(ensemble.size())) {
    throw std::invalid_argument(fmt::format("{} targets given for {} models", targets.size(),
                                            ensemble.size()));
  }
  cfg.validate(ensemble.size());
  return build_relaxed_program(x_orig, cfg.complexity, regression_constraints(ensemble, targets, cfg));
}

Counterfactual ensemble_counterfactual(const Ensemble& ensemble, const Eigen::VectorXd& x_orig,
                                       const CfConfig& cfg) {
  return ensemble_counterfactual(
      ensemble, x_orig, Eigen::VectorXd::Zero(static_cast<Index>(ensemble.size())), cfg);
}

Counterfactual ensemble_counterfactual(const Ensemble& ensemble, const Eigen::VectorXd& x_orig,
                                       const Eigen::VectorXd& targets, const CfConfig& cfg) {
  const RelaxedProgram program = build_regression_cf(ensemble, x_orig, targets, cfg);
  Counterfactual cf = solve_relaxed(program, x_orig, cfg);
  finish(cf, regression_constraints(ensemble, targets, cfg), cfg,
         cfg.distance == Distance::Squared);
  return cf;
}

Counterfactual independent_counterfactual(const LinearModel& model, const Eigen::VectorXd& x_orig,
                                          double target, const CfConfig& cfg) {
  if (model.n_sensors() != x_orig.size()) {
    throw std::invalid_argument(fmt::format("model for sensor {} expects {} inputs, got {}",
                                            model.target, model.n_sensors(), x_orig.size()));
  }
  cfg.validate(1);
  const std::vector<FidelityConstraint> constraints{
      regression_constraint(model, target, cfg.tolerance(0), cfg)};
  const RelaxedProgram program = build_relaxed_program(x_orig, cfg.complexity, constraints);
  Counterfactual cf = solve_relaxed(program, x_orig, cfg);
  finish(cf, constraints, cfg, cfg.distance == Distance::Squared);
  return cf;
}

std::vector<Counterfactual> baseline_counterfactuals(const Ensemble& ensemble,
                                                     const Eigen::VectorXd& x_orig,
                                                     const CfConfig& cfg) {
  check_ensemble(ensemble, x_orig);
  cfg.validate(ensemble.size());
  std::vector<Counterfactual> out;
  out.reserve(ensemble.size());
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    CfConfig single = cfg;
    single.tolerances = {cfg.tolerance(i)};
    out.push_back(independent_counterfactual(ensemble.models[i], x_orig, 0.0, single));
  }
  return out;
}

Counterfactual classification_ensemble_cf(const std::vector<LinearClassifier>& classifiers,
                                          const Eigen::VectorXd& x_orig,
                                          const std::vector<int>& targets, const CfConfig& cfg) {
  if (classifiers.empty()) throw std::invalid_argument("no classifiers");
  if (targets.size() != classifiers.size()) {
    throw std::invalid_argument("one target per classifier required");
  }
  cfg.validate(classifiers.size());
  std::vector<FidelityConstraint> constraints;
  for (std::size_t i = 0; i < classifiers.size(); ++i) {
    const auto& h = classifiers[i];
    if (h.weights.size() != x_orig.size()) {
      throw std::invalid_argument("classifier weight length mismatch");
    }
    if (targets[i] != 1 && targets[i] != -1) throw std::invalid_argument("targets must be +-1");
    FidelityConstraint c;
    c.coeffs = targets[i] * h.weights;
    c.offset = targets[i] * h.bias;
    c.lower = cfg.classification_margin;
    c.linear_cost = cfg.lambda;
    constraints.push_back(std::move(c));
  }
  const RelaxedProgram program = build_relaxed_program(x_orig, cfg.complexity, constraints);
  Counterfactual cf = solve_relaxed(program, x_orig, cfg);
  finish(cf, constraints, cfg, false);
  return cf;
}

}  // namespace ecf
