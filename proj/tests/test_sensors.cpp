#include "doctest.h"
#include "fixtures.hpp"

#include "ecf/sensors.hpp"

#include <random>
#include <sstream>

using namespace ecf;

namespace {

ReadingsPanel panel_from(const Eigen::MatrixXd& values, int n_flow = 0) {
  const Index n = values.cols();
  std::vector<SensorKind> kinds(static_cast<std::size_t>(n - n_flow), SensorKind::Pressure);
  kinds.resize(static_cast<std::size_t>(n), SensorKind::Flow);
  std::vector<std::string> labels;
  for (Index k = 0; k < n; ++k) labels.push_back("c" + std::to_string(k));
  return ReadingsPanel(values, std::move(kinds), std::move(labels));
}

double training_sse(const LinearModel& m, const ReadingsPanel& panel, Index begin, Index end) {
  double sse = 0.0;
  for (Index t = begin; t < end; ++t) {
    const double r = predict(m, window_average(panel, t, m.window, m.target)) - panel.at(t, m.target);
    sse += r * r;
  }
  return sse;
}

}  // namespace

TEST_CASE("window average examples") {
  const auto constant = panel_from(Eigen::MatrixXd::Constant(10, 4, 2.5));
  CHECK(window_average(constant, 5, 3, 1) == Eigen::VectorXd::Constant(3, 2.5));

  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(6, 3);
  v.col(2) << 0, 0, 1, 2, 3, 9;
  v.col(0) << 10, 11, 12, 13, 14, 15;
  const auto panel = panel_from(v);
  const auto avg = window_average(panel, 5, 3, 1);
  REQUIRE(avg.size() == 2);
  CHECK(avg(1) == doctest::Approx(2.0));
  CHECK(avg(0) == doctest::Approx(13.0));

  const auto one = window_average(panel, 5, 1, 0);
  CHECK(one(0) == 0.0);
  CHECK(one(1) == 3.0);

  CHECK_THROWS_AS(window_average(panel, 2, 3, 0), std::out_of_range);
}

TEST_CASE("window average is permutation-equivariant over kept channels") {
  std::mt19937_64 rng(31);
  const auto panel = fixture::random_panel(rng, 12, 12);
  const Index n = panel.n_sensors();
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin() + 1, perm.end(), rng);  // channel 0 stays excluded and in place
  Eigen::MatrixXd permuted(panel.n_steps(), n);
  for (Index k = 0; k < n; ++k) permuted.col(k) = panel.values().col(perm[static_cast<std::size_t>(k)]);
  const auto a = window_average(panel, 8, 3, 0);
  const auto b = window_average(panel_from(permuted), 8, 3, 0);
  for (Index k = 1; k < n; ++k) {
    CHECK(b(k - 1) == doctest::Approx(a(perm[static_cast<std::size_t>(k)] - 1)).epsilon(1e-14));
  }
}

TEST_CASE("exact affine target is recovered") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd v(80, 4);
  for (Index t = 0; t < 80; ++t) {
    for (Index k = 1; k < 4; ++k) v(t, k) = g(rng);
  }
  // The target is affine in the other channels' window averages.
  for (Index t = 3; t < 80; ++t) {
    const Eigen::RowVectorXd avg = v.block(t - 3, 1, 3, 3).colwise().mean();
    v(t, 0) = 2.0 * avg(0) - 0.5 * avg(1) + 0.25 * avg(2) + 7.0;
  }
  v.topRows(3).col(0).setConstant(7.0);
  const auto panel = panel_from(v);
  const auto m = fit_virtual_sensor(panel, 0, 3, 3, 80);
  for (Index t = 3; t < 80; ++t) {
    CHECK(std::abs(predict(m, window_average(panel, t, 3, 0)) - panel.at(t, 0)) <= 1e-9);
  }
  CHECK(m.weights(0) == doctest::Approx(2.0));
  CHECK(m.bias == doctest::Approx(7.0));
}

TEST_CASE("least squares matches the normal-equations oracle") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto panel = fixture::random_panel(rng, 40, 60);
    const int window = 1 + trial % 3;
    const Index target = 0;
    const Index begin = window, end = panel.n_steps();
    const auto m = fit_virtual_sensor(panel, target, window, begin, end);

    const Index rows = end - begin, cols = panel.n_sensors();
    Eigen::MatrixXd X(rows, cols);
    Eigen::VectorXd y(rows);
    for (Index t = begin; t < end; ++t) {
      X.row(t - begin).head(cols - 1) = window_average(panel, t, window, target).transpose();
      X(t - begin, cols - 1) = 1.0;
      y(t - begin) = panel.at(t, target);
    }
    const Eigen::VectorXd coef = (X.transpose() * X).ldlt().solve(X.transpose() * y);
    for (Index j = 0; j < cols - 1; ++j) CHECK(m.weights(j) == doctest::Approx(coef(j)).epsilon(1e-8));
    CHECK(m.bias == doctest::Approx(coef(cols - 1)).epsilon(1e-8));
  }
}

TEST_CASE("fitted coefficients are a local minimum of the training error") {
  const auto& run = fixture::default_run();
  const auto& m = run.ensemble.models[5];
  const double base = training_sse(m, run.clean, 3, run.config.train_end);
  for (Index j = 0; j <= m.weights.size(); ++j) {
    for (double step : {1e-3, -1e-3}) {
      LinearModel moved = m;
      if (j < m.weights.size()) {
        moved.weights(j) += step;
      } else {
        moved.bias += step;
      }
      CHECK(training_sse(moved, run.clean, 3, run.config.train_end) >= base);
    }
  }
}

TEST_CASE("default training residual spread is below twice the noise level") {
  const auto& run = fixture::default_run();
  for (const auto& m : run.ensemble.models) {
    Eigen::VectorXd r(run.config.train_end - 3);
    for (Index t = 3; t < run.config.train_end; ++t) r(t - 3) = window_residual(m, run.clean, t);
    const double sd = std::sqrt((r.array() - r.mean()).square().mean());
    INFO("target " << m.target);
    CHECK(sd <= 2.0 * run.config.noise_std);
  }
}

TEST_CASE("fit preconditions") {
  std::mt19937_64 rng(1);
  const auto panel = fixture::random_panel(rng, 30, 30);
  CHECK_THROWS_AS(fit_virtual_sensor(panel, 0, 3, 2, 30), std::out_of_range);
  CHECK_THROWS_AS(fit_virtual_sensor(panel, 0, 3, 3, 3 + panel.n_sensors() + 1),
                  std::invalid_argument);
}

TEST_CASE("ensemble has one model per pressure channel with flow inputs") {
  const auto& run = fixture::default_run();
  CHECK(run.ensemble.size() == 12);
  for (std::size_t i = 0; i < run.ensemble.size(); ++i) {
    CHECK(run.ensemble.models[i].target == static_cast<Index>(i));
    CHECK(run.ensemble.models[i].weights.size() == 13);
    CHECK(run.ensemble.models[i].window == 3);
  }
}

TEST_CASE("predict examples") {
  LinearModel constant{Eigen::VectorXd::Zero(3), 5.0, 0, 3};
  CHECK(predict(constant, Eigen::Vector3d(1, -2, 8)) == 5.0);
  LinearModel pick{Eigen::Vector3d(1, 0, 0), 0.0, 0, 3};
  CHECK(predict(pick, Eigen::Vector3d(1, 0, 0)) == 1.0);
  LinearModel fixture{Eigen::Vector3d(0.5, -1.25, 2.0), 0.75, 1, 3};
  // 0.5*4 - 1.25*2 + 2*(-1) + 0.75
  CHECK(predict(fixture, Eigen::Vector3d(4, 2, -1)) == doctest::Approx(-1.75));
  CHECK_THROWS_AS(predict(fixture, Eigen::Vector2d(1, 2)), std::invalid_argument);
}

TEST_CASE("prediction is affine") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    LinearModel m{Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); }), g(rng), 0, 3};
    const Eigen::VectorXd u = Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); });
    const Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); });
    const double lhs = predict(m, u + v) - m.bias;
    const double rhs = (predict(m, u) - m.bias) + (predict(m, v) - m.bias);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * (1.0 + std::abs(lhs)));
  }
}

TEST_CASE("model file round-trips bit-exactly") {
  const auto& run = fixture::default_run();
  std::stringstream ss;
  write_models(run.ensemble, ss);
  const auto back = read_models(ss);
  CHECK(back == run.ensemble);
}
