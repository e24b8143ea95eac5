#pragma once

// Ensemble-consistent counterfactual explanations.
//
// One change vector delta is sought for a snapshot x_orig such that every
// decision function in a set is satisfied at x_cf = x_orig + delta. The hard
// problem (minimize complexity subject to every fidelity constraint) can be
// infeasible, so each constraint i gets a slack xi_i >= 0 priced at lambda:
//
//   minimize    theta(delta) + lambda * sum_i xi_i
//   subject to  lower_i - xi_i <= fidelity_i(x_cf) <= upper_i + xi_i
//
// The hard program is the lambda -> infinity limit and has no separate path.
// For linear decision functions every variant is an LP or a convex QP.

#include "ecf/optim.hpp"
#include "ecf/sensors.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace ecf {

enum class Complexity { L1, L2 };   // theta = ||delta||_1 or ||delta||_2^2
enum class Distance { Abs, Squared };  // penalty on a regression prediction error

struct CfConfig {
  double lambda = 1e3;
  Complexity complexity = Complexity::L1;
  Distance distance = Distance::Abs;
  // Per-constraint tolerances; when empty every constraint uses default_tolerance.
  std::vector<double> tolerances;
  double default_tolerance = 0.0;
  // Strict margin for classification constraints (score * target >= margin).
  double classification_margin = 1e-6;
  optim::Settings solver;

  double tolerance(std::size_t constraint) const;
  void validate(std::size_t n_constraints) const;
};

Complexity complexity_from_string(const std::string& text);
Distance distance_from_string(const std::string& text);
const char* to_string(Complexity complexity);
const char* to_string(Distance distance);

/// Slack at or below this value counts as zero.
inline constexpr double kSlackZero = 1e-6;

struct Counterfactual {
  Eigen::VectorXd delta;  // x_cf - x_orig
  Eigen::VectorXd x_cf;
  Eigen::VectorXd slacks;  // xi_i, one per fidelity constraint
  double objective = 0.0;
  bool feasible_without_slack = false;
  // max_i (violation of constraint i at x_cf beyond its tolerance); <= 0 when all hold.
  double max_excess = 0.0;

  optim::Status status = optim::Status::Optimal;
  int iterations = 0;
  optim::KktResiduals kkt;
  bool kkt_certified = false;
};

class SolverError : public std::runtime_error {
 public:
  SolverError(optim::Status status, const std::string& what)
      : std::runtime_error(what), status_(status) {}
  optim::Status status() const { return status_; }

 private:
  optim::Status status_;
};

/// One linear fidelity constraint: lower - s <= coeffs . x_cf + offset <= upper + s,
/// with slack s costing linear_cost * s + quadratic_cost * s^2.
struct FidelityConstraint {
  Eigen::VectorXd coeffs;
  double offset = 0.0;
  double lower = -optim::kInf;
  double upper = optim::kInf;
  double linear_cost = 0.0;
  double quadratic_cost = 0.0;
};

/// Relaxed program plus the variable layout needed to read a solution back.
/// L1: z = [d+ (n), d- (n), s (m)] with delta = d+ - d-.  L2: z = [delta (n), s (m)].
struct RelaxedProgram {
  optim::ConvexProblem problem;
  Complexity complexity = Complexity::L1;
  Index n_inputs = 0;
  Index n_constraints = 0;

  Eigen::VectorXd delta(const Eigen::VectorXd& z) const;
  Eigen::VectorXd slack(const Eigen::VectorXd& z) const;
};

RelaxedProgram build_relaxed_program(const Eigen::VectorXd& x_orig, Complexity complexity,
                                     const std::vector<FidelityConstraint>& constraints);

/// The snapshot the counterfactual edits: the observed readings of row t.
Eigen::VectorXd snapshot_at_alarm(const ReadingsPanel& panel, const Ensemble& ensemble, Index t);

/// f_i(x_{!=i}) - x_i for every model, evaluated on one snapshot.
Eigen::VectorXd snapshot_residuals(const Ensemble& ensemble, const Eigen::VectorXd& x);

/// Fidelity constraint of one virtual sensor: dist(f(x_cf) - x_cf[target] - y_cf) <= tol + xi.
FidelityConstraint regression_constraint(const LinearModel& model, double target_value,
                                         double tolerance, const CfConfig& cfg);

/// Targets default to zero residual for every model.
RelaxedProgram build_regression_cf(const Ensemble& ensemble, const Eigen::VectorXd& x_orig,
                                   const Eigen::VectorXd& targets, const CfConfig& cfg);

Counterfactual ensemble_counterfactual(const Ensemble& ensemble, const Eigen::VectorXd& x_orig,
                                       const CfConfig& cfg);
Counterfactual ensemble_counterfactual(const Ensemble& ensemble, const Eigen::VectorXd& x_orig,
                                       const Eigen::VectorXd& targets, const CfConfig& cfg);

/// Closest counterfactual of a single model. Uses cfg.tolerance(0).
Counterfactual independent_counterfactual(const LinearModel& model, const Eigen::VectorXd& x_orig,
                                          double target, const CfConfig& cfg);

/// independent_counterfactual for every model, model i using cfg.tolerance(i).
std::vector<Counterfactual> baseline_counterfactuals(const Ensemble& ensemble,
                                                     const Eigen::VectorXd& x_orig,
                                                     const CfConfig& cfg);

struct LinearClassifier {
  Eigen::VectorXd weights;
  double bias = 0.0;

  double score(const Eigen::VectorXd& x) const { return weights.dot(x) + bias; }
};

/// targets[i] in {-1, +1}; constraint i is targets[i] * score_i(x_cf) >= margin - xi_i.
Counterfactual classification_ensemble_cf(const std::vector<LinearClassifier>& classifiers,
                                          const Eigen::VectorXd& x_orig,
                                          const std::vector<int>& targets, const CfConfig& cfg);

}  // namespace ecf
