#include "doctest.h"
#include "oracles.hpp"

#include "ecf/optim.hpp"

#include <random>
#include <sstream>

using namespace ecf::optim;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

ConvexProblem scalar_bound_problem() {
  // min z^2 s.t. z >= 1
  ConvexProblem p;
  p.P = MatrixXd::Constant(1, 1, 2.0);
  p.q = VectorXd::Zero(1);
  p.A = MatrixXd::Ones(1, 1);
  p.l = VectorXd::Ones(1);
  p.u = VectorXd::Constant(1, kInf);
  return p;
}

// min |z1| + |z2| s.t. 2 z1 + z2 = r, written with z = d+ - d- and the
// equality as two inequalities.
ConvexProblem l1_equation_problem(double r) {
  ConvexProblem p;
  p.P = MatrixXd::Zero(4, 4);
  p.q = VectorXd::Ones(4);
  p.A = MatrixXd::Zero(6, 4);
  p.A.row(0) << 2, 1, -2, -1;
  p.A.row(1) << 2, 1, -2, -1;
  p.A.bottomRows(4).setIdentity();
  p.l = VectorXd(6);
  p.u = VectorXd(6);
  p.l << -kInf, r, 0, 0, 0, 0;
  p.u << r, kInf, kInf, kInf, kInf, kInf;
  return p;
}

}  // namespace

TEST_CASE("textbook bound-constrained quadratic") {
  const auto p = scalar_bound_problem();
  const auto sol = solve(p);
  REQUIRE(sol.status == Status::Optimal);
  CHECK(sol.z(0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(sol.objective == doctest::Approx(1.0).epsilon(1e-9));
  // Pz + q + A'y = 0 gives y = -2 on the active lower bound.
  CHECK(sol.y(0) == doctest::Approx(-2.0).epsilon(1e-7));
  CHECK(certified(kkt_residuals(p, sol), Settings{}));
}

TEST_CASE("kkt residuals of the analytic pair are exact") {
  const auto p = scalar_bound_problem();
  Solution s;
  s.z = VectorXd::Ones(1);
  s.y = VectorXd::Constant(1, -2.0);
  const auto r = kkt_residuals(p, s);
  CHECK(r.primal <= 1e-12);
  CHECK(r.dual <= 1e-12);
  CHECK(r.complementarity <= 1e-12);

  s.z(0) = 1.1;
  const auto moved = kkt_residuals(p, s);
  CHECK(std::max(moved.primal, moved.dual) > 1e-3);
  s.z(0) = 0.9;
  const auto below = kkt_residuals(p, s);
  CHECK(std::max(below.primal, below.dual) > 1e-3);
}

TEST_CASE("minimal L1 solution of one equation sits on the largest coefficient") {
  for (double r : {1.0, -3.0, 0.25}) {
    const auto sol = solve(l1_equation_problem(r));
    REQUIRE(sol.status == Status::Optimal);
    const double z1 = sol.z(0) - sol.z(2);
    const double z2 = sol.z(1) - sol.z(3);
    CHECK(z1 == doctest::Approx(r / 2).epsilon(1e-7));
    CHECK(std::abs(z2) <= 1e-7);
    CHECK(sol.objective == doctest::Approx(std::abs(r) / 2).epsilon(1e-7));
  }
}

TEST_CASE("random LPs match vertex enumeration") {
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = oracle::random_lp(rng);
    const auto expected = oracle::lp_vertex_enumeration(p.q, p.A, p.l, p.u);
    REQUIRE(expected.has_value());
    const auto sol = solve(p);
    INFO("trial " << trial << " n=" << p.n_variables() << " m=" << p.n_constraints());
    REQUIRE(sol.status == Status::Optimal);
    CHECK(std::abs(sol.objective - *expected) <= 1e-5);
    CHECK(certified(kkt_residuals(p, sol), Settings{}));
    ++compared;
  }
  CHECK(compared == 100);
}

TEST_CASE("separable box QPs match the clipped minimizer") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto qp = oracle::random_box_qp(rng);
    const auto sol = solve(qp.problem);
    INFO("trial " << trial);
    REQUIRE(sol.status == Status::Optimal);
    CHECK((sol.z - qp.optimum).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(certified(kkt_residuals(qp.problem, sol), Settings{}));
  }
}

TEST_CASE("dropping a constraint never raises the optimum") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto full = oracle::random_lp(rng);
    const Index m = full.n_constraints();
    if (m <= full.n_variables()) continue;  // keep the bounding rows
    ConvexProblem reduced = full;
    reduced.A = full.A.topRows(m - 1);
    reduced.l = full.l.head(m - 1);
    reduced.u = full.u.head(m - 1);
    const auto a = solve(full);
    const auto b = solve(reduced);
    REQUIRE(a.status == Status::Optimal);
    REQUIRE(b.status == Status::Optimal);
    CHECK(b.objective <= a.objective + 1e-6);
  }
}

TEST_CASE("solves are deterministic") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_lp(rng);
    const auto a = solve(p);
    const auto b = solve(p);
    CHECK(a.z == b.z);
    CHECK(a.y == b.y);
    CHECK(a.iterations == b.iterations);
    CHECK(a.status == b.status);
  }
}

TEST_CASE("infeasible and unbounded programs are reported") {
  ConvexProblem p;
  p.P = MatrixXd::Zero(1, 1);
  p.q = VectorXd::Ones(1);
  p.A = MatrixXd::Ones(2, 1);
  p.l = VectorXd(2);
  p.u = VectorXd(2);
  p.l << 1, -kInf;
  p.u << kInf, 0;  // z >= 1 and z <= 0
  CHECK(solve(p).status == Status::Infeasible);

  ConvexProblem unbounded;
  unbounded.P = MatrixXd::Zero(1, 1);
  unbounded.q = VectorXd::Ones(1);
  unbounded.A = MatrixXd::Ones(1, 1);
  unbounded.l = VectorXd::Constant(1, -kInf);
  unbounded.u = VectorXd::Zero(1);
  const auto sol = solve(unbounded);
  CHECK(sol.status == Status::Infeasible);
  CHECK(!sol.detail.empty());
}

TEST_CASE("iteration cap is reported, never silent") {
  Settings s;
  s.max_iters = 1;
  s.polish = false;
  std::mt19937_64 rng(3);
  const auto sol = solve(oracle::random_lp(rng), s);
  CHECK(sol.status == Status::MaxIters);
}

TEST_CASE("problem validation") {
  auto p = scalar_bound_problem();
  p.P(0, 0) = -1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = scalar_bound_problem();
  p.l(0) = 2.0;
  p.u(0) = 1.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = scalar_bound_problem();
  p.q = VectorXd::Zero(2);
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("problem dump round-trips") {
  const auto p = l1_equation_problem(1.5);
  std::stringstream ss;
  write_problem(p, ss);
  const auto back = read_problem(ss);
  CHECK(back.P == p.P);
  CHECK(back.q == p.q);
  CHECK(back.A == p.A);
  CHECK(back.l == p.l);
  CHECK(back.u == p.u);
}
