#include "ecf/optim.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <vector>

namespace ecf::optim {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kEqualityRhoFactor = 1e3;
constexpr double kRhoUpdateRatio = 5.0;
constexpr double kScalingMin = 1e-4;
constexpr double kScalingMax = 1e4;
constexpr double kTiny = 1e-30;

double inf_norm(const VectorXd& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

VectorXd project_box(const VectorXd& v, const VectorXd& l, const VectorXd& u) {
  return v.cwiseMax(l).cwiseMin(u);
}

double safe_inverse_sqrt(double norm) {
  if (norm < kScalingMin) return 1.0;
  return 1.0 / std::sqrt(std::min(norm, kScalingMax));
}

// Modified Ruiz equilibration of the KKT matrix [P A'; A 0] plus cost scaling.
// The scaled problem is (c D P D, c D q, E A D, E l, E u).
struct Scaling {
  VectorXd D;
  VectorXd E;
  double c = 1.0;
};

Scaling equilibrate(MatrixXd& P, VectorXd& q, MatrixXd& A, VectorXd& l, VectorXd& u,
                    int iterations) {
  const Index n = P.rows();
  const Index m = A.rows();
  Scaling s{VectorXd::Ones(n), VectorXd::Ones(m), 1.0};
  for (int it = 0; it < iterations; ++it) {
    VectorXd col_scale(n);
    for (Index j = 0; j < n; ++j) {
      double norm = P.col(j).cwiseAbs().maxCoeff();
      if (m > 0) norm = std::max(norm, A.col(j).cwiseAbs().maxCoeff());
      col_scale(j) = safe_inverse_sqrt(norm);
    }
    VectorXd row_scale(m);
    for (Index i = 0; i < m; ++i) row_scale(i) = safe_inverse_sqrt(A.row(i).cwiseAbs().maxCoeff());

    P = col_scale.asDiagonal() * P * col_scale.asDiagonal();
    A = row_scale.asDiagonal() * A * col_scale.asDiagonal();
    q = q.cwiseProduct(col_scale);
    s.D = s.D.cwiseProduct(col_scale);
    s.E = s.E.cwiseProduct(row_scale);

    double mean_col = 0.0;
    for (Index j = 0; j < n; ++j) mean_col += P.col(j).cwiseAbs().maxCoeff();
    mean_col /= static_cast<double>(std::max<Index>(n, 1));
    double cost_norm = std::max(mean_col, inf_norm(q));
    const double gamma =
        cost_norm < kScalingMin ? 1.0 : 1.0 / std::min(cost_norm, kScalingMax);
    P *= gamma;
    q *= gamma;
    s.c *= gamma;
  }
  l = l.cwiseProduct(s.E);
  u = u.cwiseProduct(s.E);
  return s;
}

struct Residuals {
  double primal;
  double dual;
  double eps_primal;
  double eps_dual;
  bool converged() const { return primal <= eps_primal && dual <= eps_dual; }
};

Residuals unscaled_residuals(const ConvexProblem& pb, const VectorXd& x, const VectorXd& z,
                             const VectorXd& y, const Settings& settings) {
  const VectorXd Ax = pb.A * x;
  const VectorXd Px = pb.P * x;
  const VectorXd Aty = pb.A.transpose() * y;
  Residuals r{};
  r.primal = inf_norm(Ax - z);
  r.dual = inf_norm(Px + pb.q + Aty);
  r.eps_primal = settings.tol_abs + settings.tol_rel * std::max(inf_norm(Ax), inf_norm(z));
  r.eps_dual = settings.tol_abs +
               settings.tol_rel * std::max({inf_norm(Px), inf_norm(Aty), inf_norm(pb.q)});
  return r;
}

// Farkas-type certificates on successive iterate differences.
bool primal_infeasible(const ConvexProblem& pb, const VectorXd& dy, double tol) {
  const double norm = inf_norm(dy);
  if (norm < kTiny) return false;
  if (inf_norm(pb.A.transpose() * dy) > tol * norm) return false;
  double support = 0.0;
  for (Index i = 0; i < dy.size(); ++i) {
    if (dy(i) > 0) {
      if (!std::isfinite(pb.u(i))) return false;
      support += pb.u(i) * dy(i);
    } else if (dy(i) < 0) {
      if (!std::isfinite(pb.l(i))) return false;
      support += pb.l(i) * dy(i);
    }
  }
  return support < -tol * norm;
}

bool dual_infeasible(const ConvexProblem& pb, const VectorXd& dx, double tol) {
  const double norm = inf_norm(dx);
  if (norm < kTiny) return false;
  if (inf_norm(pb.P * dx) > tol * norm) return false;
  if (pb.q.dot(dx) > -tol * norm) return false;
  const VectorXd Adx = pb.A * dx;
  for (Index i = 0; i < Adx.size(); ++i) {
    const double bound = tol * norm;
    if (std::isfinite(pb.u(i)) && Adx(i) > bound) return false;
    if (std::isfinite(pb.l(i)) && Adx(i) < -bound) return false;
  }
  return true;
}

// Active-set guess from the ADMM iterate: -1 lower, +1 upper, 2 equality, 0 inactive.
std::vector<int> guess_active_set(const ConvexProblem& pb, const VectorXd& z_aux,
                                  const VectorXd& y) {
  std::vector<int> active(static_cast<std::size_t>(pb.n_constraints()), 0);
  for (Index i = 0; i < pb.n_constraints(); ++i) {
    const bool finite_l = std::isfinite(pb.l(i));
    const bool finite_u = std::isfinite(pb.u(i));
    auto& a = active[static_cast<std::size_t>(i)];
    if (finite_l && finite_u && pb.l(i) == pb.u(i)) {
      a = 2;
    } else if (finite_l && z_aux(i) - pb.l(i) < -y(i)) {
      a = -1;
    } else if (finite_u && pb.u(i) - z_aux(i) < y(i)) {
      a = 1;
    }
  }
  return active;
}

// Equality-constrained solve on a guessed active set. Parallel active rows are
// merged into one equation; the merged multiplier is handed to a member whose
// bound side agrees with its sign.
std::optional<Solution> polish(const ConvexProblem& pb, const std::vector<int>& active) {
  const Index n = pb.n_variables();
  const Index m = pb.n_constraints();
  struct Group {
    Eigen::RowVectorXd direction;  // unit inf-norm, first nonzero positive
    double bound;
    std::vector<std::pair<Index, double>> members;  // row, scale (row = scale * direction)
  };
  std::vector<Group> groups;
  for (Index i = 0; i < m; ++i) {
    const int side = active[static_cast<std::size_t>(i)];
    if (side == 0) continue;
    const double norm = pb.A.row(i).cwiseAbs().maxCoeff();
    if (norm == 0.0) continue;
    Index lead = 0;
    while (pb.A(i, lead) == 0.0) ++lead;
    const double s = pb.A(i, lead) > 0 ? norm : -norm;
    const Eigen::RowVectorXd dir = pb.A.row(i) / s;
    const double bound = (side < 0 ? pb.l(i) : pb.u(i)) / s;
    bool merged = false;
    for (auto& g : groups) {
      if ((g.direction - dir).cwiseAbs().maxCoeff() <= 1e-12) {
        g.members.emplace_back(i, s);
        merged = true;
        break;
      }
    }
    if (!merged) groups.push_back({dir, bound, {{i, s}}});
  }

  const Index k = static_cast<Index>(groups.size());
  MatrixXd kkt = MatrixXd::Zero(n + k, n + k);
  VectorXd rhs(n + k);
  kkt.topLeftCorner(n, n) = pb.P;
  rhs.head(n) = -pb.q;
  for (Index r = 0; r < k; ++r) {
    const auto& g = groups[static_cast<std::size_t>(r)];
    kkt.block(n + r, 0, 1, n) = g.direction;
    kkt.block(0, n + r, n, 1) = g.direction.transpose();
    rhs(n + r) = g.bound;
  }
  const VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
  if (!sol.allFinite()) return std::nullopt;

  Solution out;
  out.z = sol.head(n);
  out.y = VectorXd::Zero(m);
  for (Index r = 0; r < k; ++r) {
    const auto& g = groups[static_cast<std::size_t>(r)];
    const double mu = sol(n + r);
    auto chosen = g.members.front();
    for (const auto& member : g.members) {
      const double yi = mu / member.second;
      const int side = active[static_cast<std::size_t>(member.first)];
      if (side == 2 || (yi > 0 && side == 1) || (yi < 0 && side == -1)) {
        chosen = member;
        break;
      }
    }
    out.y(chosen.first) = mu / chosen.second;
  }
  out.polished = true;
  return out;
}

}  // namespace

const char* to_string(Status status) {
  switch (status) {
    case Status::Optimal: return "optimal";
    case Status::MaxIters: return "max_iters";
    case Status::Infeasible: return "infeasible";
  }
  return "unknown";
}

void ConvexProblem::validate() const {
  const Index n = q.size();
  const Index m = A.rows();
  if (P.rows() != n || P.cols() != n) throw std::invalid_argument("P must be n x n");
  if (A.cols() != n) throw std::invalid_argument("A must have n columns");
  if (l.size() != m || u.size() != m) throw std::invalid_argument("bounds must have m entries");
  if (!P.allFinite() || !q.allFinite() || !A.allFinite()) {
    throw std::invalid_argument("problem data must be finite");
  }
  const double p_norm = P.cwiseAbs().maxCoeff();
  if (n > 0 && (P - P.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, p_norm)) {
    throw std::invalid_argument("P must be symmetric");
  }
  if (n > 0 && p_norm > 0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(P, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-9 * p_norm) {
      throw std::invalid_argument("P must be positive semidefinite");
    }
  }
  for (Index i = 0; i < m; ++i) {
    if (std::isnan(l(i)) || std::isnan(u(i)) || l(i) > u(i) || l(i) == kInf || u(i) == -kInf) {
      throw std::invalid_argument(fmt::format("invalid bounds on row {}", i));
    }
  }
}

Solution solve(const ConvexProblem& problem, const Settings& settings) {
  problem.validate();
  const Index n = problem.n_variables();
  const Index m = problem.n_constraints();

  MatrixXd P = problem.P;
  VectorXd q = problem.q;
  MatrixXd A = problem.A;
  VectorXd l = problem.l;
  VectorXd u = problem.u;
  const Scaling scale = equilibrate(P, q, A, l, u, settings.scaling_iters);

  double rho = std::clamp(settings.rho, kRhoMin, kRhoMax);
  VectorXd rho_vec(m);
  const auto fill_rho = [&] {
    for (Index i = 0; i < m; ++i) {
      const bool free_row = !std::isfinite(l(i)) && !std::isfinite(u(i));
      if (free_row) {
        rho_vec(i) = kRhoMin;
      } else if (l(i) == u(i)) {
        rho_vec(i) = std::min(kEqualityRhoFactor * rho, kRhoMax);
      } else {
        rho_vec(i) = rho;
      }
    }
  };
  fill_rho();

  Eigen::LLT<MatrixXd> factor;
  const auto refactor = [&] {
    MatrixXd K = P;
    K.diagonal().array() += settings.sigma;
    K.noalias() += A.transpose() * rho_vec.asDiagonal() * A;
    factor.compute(K);
  };
  refactor();

  VectorXd x = VectorXd::Zero(n);
  VectorXd z = VectorXd::Zero(m);
  VectorXd y = VectorXd::Zero(m);
  VectorXd x_prev = x;
  VectorXd y_prev = y;

  const auto unscale_x = [&](const VectorXd& xs) -> VectorXd { return scale.D.cwiseProduct(xs); };
  const auto unscale_z = [&](const VectorXd& zs) -> VectorXd {
    return zs.cwiseQuotient(scale.E);
  };
  const auto unscale_y = [&](const VectorXd& ys) -> VectorXd {
    return scale.E.cwiseProduct(ys) / scale.c;
  };

  Solution out;
  out.status = Status::MaxIters;
  std::vector<int> last_active;
  int iter = 0;
  for (iter = 1; iter <= settings.max_iters; ++iter) {
    x_prev = x;
    y_prev = y;
    const VectorXd rhs = settings.sigma * x - q + A.transpose() * (rho_vec.cwiseProduct(z) - y);
    const VectorXd x_tilde = factor.solve(rhs);
    const VectorXd z_tilde = A * x_tilde;
    x = settings.alpha * x_tilde + (1.0 - settings.alpha) * x_prev;
    const VectorXd z_relaxed = settings.alpha * z_tilde + (1.0 - settings.alpha) * z;
    z = project_box(z_relaxed + y.cwiseQuotient(rho_vec), l, u);
    y += rho_vec.cwiseProduct(z_relaxed - z);

    const bool check = iter % settings.check_interval == 0 || iter == settings.max_iters;
    if (!check) continue;

    const VectorXd xu = unscale_x(x);
    const VectorXd zu = unscale_z(z);
    const VectorXd yu = unscale_y(y);
    const Residuals res = unscaled_residuals(problem, xu, zu, yu, settings);
    if (res.converged()) {
      out.status = Status::Optimal;
      out.z = xu;
      out.y = yu;
      break;
    }
    if (primal_infeasible(problem, unscale_y(y - y_prev), settings.infeasibility_tol)) {
      out.status = Status::Infeasible;
      out.detail = "primal infeasibility certificate";
      out.z = xu;
      out.y = unscale_y(y - y_prev);
      break;
    }
    if (dual_infeasible(problem, unscale_x(x - x_prev), settings.infeasibility_tol)) {
      out.status = Status::Infeasible;
      out.detail = "dual infeasibility certificate (objective unbounded below)";
      out.z = unscale_x(x - x_prev);
      out.y = yu;
      break;
    }

    // Try the active-set solve whenever the guessed active set changes; accept
    // it only when its own KKT residuals meet the tolerance.
    if (settings.polish) {
      std::vector<int> active = guess_active_set(problem, zu, yu);
      if (active != last_active) {
        if (auto candidate = polish(problem, active)) {
          if (certified(kkt_residuals(problem, *candidate), settings, 1.0)) {
            out.status = Status::Optimal;
            out.z = std::move(candidate->z);
            out.y = std::move(candidate->y);
            out.polished = true;
            break;
          }
        }
        last_active = std::move(active);
      }
    }

    if (settings.adaptive_rho && m > 0) {
      const VectorXd Ax = A * x;
      const VectorXd Px = P * x;
      const VectorXd Aty = A.transpose() * y;
      const double prim = inf_norm(Ax - z) / std::max({inf_norm(Ax), inf_norm(z), kTiny});
      const double dual = inf_norm(Px + q + Aty) /
                          std::max({inf_norm(Px), inf_norm(Aty), inf_norm(q), kTiny});
      const double proposed =
          std::clamp(rho * std::sqrt(prim / std::max(dual, kTiny)), kRhoMin, kRhoMax);
      if (proposed > kRhoUpdateRatio * rho || proposed < rho / kRhoUpdateRatio) {
        rho = proposed;
        fill_rho();
        refactor();
      }
    }
  }
  out.iterations = std::min(iter, settings.max_iters);

  if (out.status == Status::MaxIters) {
    out.z = unscale_x(x);
    out.y = unscale_y(y);
    out.detail = fmt::format("no convergence within {} iterations", settings.max_iters);
  }

  if (out.status == Status::Optimal && settings.polish && !out.polished) {
    if (auto polished = polish(problem, guess_active_set(problem, unscale_z(z), out.y))) {
      const KktResiduals before = kkt_residuals(problem, out);
      const KktResiduals after = kkt_residuals(problem, *polished);
      const bool improves = after.primal <= std::max(before.primal, settings.tol_abs) &&
                            after.dual <= std::max(before.dual, settings.tol_abs) &&
                            after.complementarity <= std::max(before.complementarity, settings.tol_abs);
      if (certified(after, settings, 1.0) && improves) {
        out.z = std::move(polished->z);
        out.y = std::move(polished->y);
        out.polished = true;
      }
    }
  }
  if (out.status != Status::Infeasible) out.objective = problem.objective(out.z);
  return out;
}

KktResiduals kkt_residuals(const ConvexProblem& pb, const Solution& solution) {
  const VectorXd& z = solution.z;
  const VectorXd& y = solution.y;
  if (z.size() != pb.n_variables() || y.size() != pb.n_constraints()) {
    throw std::invalid_argument("solution dimensions do not match the problem");
  }
  const VectorXd Az = pb.A * z;
  const VectorXd projected = project_box(Az, pb.l, pb.u);
  const VectorXd Pz = pb.P * z;
  const VectorXd Aty = pb.A.transpose() * y;

  KktResiduals r;
  r.primal = inf_norm(Az - projected);
  r.dual = inf_norm(Pz + pb.q + Aty);
  for (Index i = 0; i < y.size(); ++i) {
    // Positive multipliers belong to upper bounds, negative ones to lower bounds.
    if (y(i) > 0) {
      r.complementarity = std::max(r.complementarity, std::min(y(i), std::abs(pb.u(i) - Az(i))));
    } else if (y(i) < 0) {
      r.complementarity = std::max(r.complementarity, std::min(-y(i), std::abs(Az(i) - pb.l(i))));
    }
  }
  r.primal_scale = std::max(inf_norm(Az), inf_norm(projected));
  r.dual_scale = std::max({inf_norm(Pz), inf_norm(Aty), inf_norm(pb.q)});
  return r;
}

bool certified(const KktResiduals& r, const Settings& settings, double factor) {
  const double eps_primal = settings.tol_abs + settings.tol_rel * r.primal_scale;
  const double eps_dual = settings.tol_abs + settings.tol_rel * r.dual_scale;
  return r.primal <= factor * eps_primal && r.dual <= factor * eps_dual &&
         r.complementarity <= factor * eps_primal;
}

namespace {

void write_row(std::ostream& out, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  for (Index j = 0; j < row.size(); ++j) {
    if (j > 0) out << ' ';
    out << fmt::format("{}", row(j));
  }
  out << '\n';
}

std::vector<double> read_numbers(std::istream& in, Index count, const char* what) {
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(count));
  std::string token;
  while (static_cast<Index>(values.size()) < count && in >> token) {
    double v = 0.0;
    const char* first = token.data();
    const char* last = token.data() + token.size();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) {
      throw std::runtime_error(fmt::format("problem dump: bad number '{}' in {}", token, what));
    }
    values.push_back(v);
  }
  if (static_cast<Index>(values.size()) != count) {
    throw std::runtime_error(fmt::format("problem dump: truncated {}", what));
  }
  return values;
}

}  // namespace

void write_problem(const ConvexProblem& problem, std::ostream& out) {
  out << problem.n_variables() << ' ' << problem.n_constraints() << '\n';
  for (Index i = 0; i < problem.P.rows(); ++i) write_row(out, problem.P.row(i));
  write_row(out, problem.q.transpose());
  for (Index i = 0; i < problem.A.rows(); ++i) write_row(out, problem.A.row(i));
  write_row(out, problem.l.transpose());
  write_row(out, problem.u.transpose());
}

ConvexProblem read_problem(std::istream& in) {
  Index n = 0, m = 0;
  if (!(in >> n >> m) || n < 0 || m < 0) {
    throw std::runtime_error("problem dump: bad dimension line");
  }
  ConvexProblem pb;
  const auto P = read_numbers(in, n * n, "P");
  const auto q = read_numbers(in, n, "q");
  const auto A = read_numbers(in, m * n, "A");
  const auto l = read_numbers(in, m, "l");
  const auto u = read_numbers(in, m, "u");
  pb.P = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      P.data(), n, n);
  pb.q = Eigen::Map<const VectorXd>(q.data(), n);
  pb.A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      A.data(), m, n);
  pb.l = Eigen::Map<const VectorXd>(l.data(), m);
  pb.u = Eigen::Map<const VectorXd>(u.data(), m);
  return pb;
}

}  // namespace ecf::optim
