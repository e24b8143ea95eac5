#pragma once

// Dense convex quadratic programs in two-sided form
//
//   minimize    0.5 z'Pz + q'z
//   subject to  l <= Az <= u
//
// solved by an operator-splitting (ADMM) iteration with over-relaxation,
// Ruiz equilibration, residual-balanced penalty updates and a final
// active-set polish. One-sided rows use +/- infinity bounds; equalities use
// l == u.

#include <Eigen/Dense>

#include <iosfwd>
#include <limits>
#include <string>

namespace ecf::optim {

using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConvexProblem {
  Eigen::MatrixXd P;  // symmetric positive semidefinite, zero for an LP
  Eigen::VectorXd q;
  Eigen::MatrixXd A;
  Eigen::VectorXd l;
  Eigen::VectorXd u;

  Index n_variables() const { return q.size(); }
  Index n_constraints() const { return A.rows(); }

  double objective(const Eigen::VectorXd& z) const { return 0.5 * z.dot(P * z) + q.dot(z); }

  // Dimensions, symmetry, positive semidefiniteness and l <= u.
  void validate() const;
};

enum class Status { Optimal, MaxIters, Infeasible };

const char* to_string(Status status);

struct Settings {
  double tol_abs = 1e-7;
  double tol_rel = 1e-7;
  int max_iters = 20000;

  double rho = 0.1;      // initial penalty, adapted by residual balancing
  double sigma = 1e-6;   // proximal term on z
  double alpha = 1.6;    // over-relaxation
  bool adaptive_rho = true;
  int check_interval = 25;
  int scaling_iters = 10;
  bool polish = true;
  double infeasibility_tol = 1e-7;
};

struct Solution {
  Eigen::VectorXd z;  // primal
  Eigen::VectorXd y;  // dual, Pz + q + A'y = 0 at optimum; y < 0 on active lower bounds
  double objective = 0.0;
  Status status = Status::MaxIters;
  int iterations = 0;
  bool polished = false;
  std::string detail;
};

Solution solve(const ConvexProblem& problem, const Settings& settings = {});

struct KktResiduals {
  double primal = 0.0;           // || Az - proj_[l,u](Az) ||_inf
  double dual = 0.0;             // || Pz + q + A'y ||_inf
  double complementarity = 0.0;  // max_i min(|y_i|, distance of row i to the bound y_i points at)
  double primal_scale = 0.0;     // max(||Az||_inf, ||proj(Az)||_inf)
  double dual_scale = 0.0;       // max(||Pz||_inf, ||A'y||_inf, ||q||_inf)
};

/// Recomputes optimality residuals from the problem data and (z, y) only.
KktResiduals kkt_residuals(const ConvexProblem& problem, const Solution& solution);

/// True when every residual is within `factor` times the solver's tolerance.
bool certified(const KktResiduals& residuals, const Settings& settings, double factor = 10.0);

// Plain-text dump: "n m", then P rows, q, A rows, l, u (one row per line).
void write_problem(const ConvexProblem& problem, std::ostream& out);
ConvexProblem read_problem(std::istream& in);

}  // namespace ecf::optim
