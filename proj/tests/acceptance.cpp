// Acceptance run: one PASS/FAIL line per criterion, details indented below.
// Exit status is nonzero when any criterion fails.

#include "oracles.hpp"

#include "ecf/config.hpp"
#include "ecf/explain.hpp"
#include "ecf/localize.hpp"
#include "ecf/pipeline.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <regex>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

using namespace ecf;
namespace fs = std::filesystem;

namespace {

constexpr double kDetectionSeconds = 120.0;
constexpr double kLocalizationSeconds = 600.0;

int failures = 0;

void verdict(int id, bool pass, const std::string& title) {
  if (!pass) ++failures;
  fmt::print("criterion {}: {} {}\n", id, pass ? "PASS" : "FAIL", title);
}

void detail(const std::string& line) { fmt::print("    {}\n", line); }

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Prediction minus observation computed from the model's own input vector,
// without the full-length weight scatter used by the solver path.
double model_residual(const LinearModel& m, const Eigen::VectorXd& x) {
  Eigen::VectorXd others(x.size() - 1);
  for (Index k = 0, j = 0; k < x.size(); ++k) {
    if (k != m.target) others(j++) = x(k);
  }
  return predict(m, others) - x(m.target);
}

struct KktTally {
  std::size_t optimal = 0;
  std::size_t certified = 0;
  double worst_ratio = 0.0;

  void add(const optim::KktResiduals& kkt, const optim::Settings& s) {
    ++optimal;
    if (optim::certified(kkt, s)) ++certified;
    const double eps_primal = s.tol_abs + s.tol_rel * kkt.primal_scale;
    const double eps_dual = s.tol_abs + s.tol_rel * kkt.dual_scale;
    worst_ratio = std::max({worst_ratio, kkt.primal / eps_primal, kkt.dual / eps_dual,
                            kkt.complementarity / eps_primal});
  }
};

LinearModel random_model(std::mt19937_64& rng, Index n, Index target) {
  std::normal_distribution<double> g(0.0, 1.0);
  return LinearModel{Eigen::VectorXd::NullaryExpr(n - 1, [&] { return g(rng); }), g(rng), target, 3};
}

// True when exactly one test case matched the name and it passed.
bool run_property(const std::string& name) {
  const std::string cmd = fmt::format("{} --test-case=\"{}\" --no-intro 2>&1", ECF_TESTS_PATH, name);
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return false;
  std::string output;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe) != nullptr) output += buf;
  const int status = ::pclose(pipe);
  return WIFEXITED(status) && WEXITSTATUS(status) == 0 &&
         std::regex_search(output, std::regex(R"(test cases:\s+1 \|\s+1 passed \| 0 failed)"));
}

}  // namespace

int main() {
  const fs::path root =
      fs::temp_directory_path() / fmt::format("ecf_acceptance_{}", static_cast<long>(::getpid()));
  fs::remove_all(root);

  RunConfig config;
  config.output_dir = root;
  const RunOptions options{static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))};
  const Layout layout(root);
  const optim::Settings& solver = config.explain.solver;
  KktTally kkt;

  // 1. Detection on the default grid.
  {
    const auto start = std::chrono::steady_clock::now();
    cmd_simulate(config, options);
    cmd_train(config, options);
    const auto det = cmd_detect(config, options);
    const double elapsed = seconds_since(start);

    // Offset-type magnitudes against the calibrated threshold of their seed.
    double min_ratio = optim::kInf;
    for (const auto& row : det.rows) {
      const auto& s = row.scenario;
      if (s.kind != "constant_offset" && s.kind != "gaussian_noise" &&
          s.kind != "proportional_offset") {
        continue;
      }
      double size = s.magnitude;
      if (s.kind == "proportional_offset") {
        size *= load_csv(layout.clean(s.seed)).values().col(s.sensor).cwiseAbs().mean();
      }
      min_ratio = std::min(min_ratio, size / load_threshold(layout, s.seed));
    }
    const bool pass = det.rows.size() == 45 && det.scenario_success == 1.0 &&
                      det.max_false_positive_rate == 0.0 && det.median_delay &&
                      *det.median_delay <= 3.0 && elapsed <= kDetectionSeconds &&
                      min_ratio >= 5.0;
    verdict(1, pass, "detection on the default grid");
    detail(fmt::format("scenarios {}, success {:.4f}, max pre-onset FP rate {:.4f}, median delay {}",
                       det.rows.size(), det.scenario_success, det.max_false_positive_rate,
                       det.median_delay ? fmt::format("{}", *det.median_delay) : "none"));
    detail(fmt::format("smallest offset-type magnitude / threshold {:.2f} (need >= 5)", min_ratio));
    detail(fmt::format("simulate + train + detect {:.1f}s with {} jobs (limit {:.0f}s)", elapsed,
                       options.jobs, kDetectionSeconds));
  }

  // 2. Localization gap on the same grid.
  EvaluationResult eval;
  {
    const auto start = std::chrono::steady_clock::now();
    eval = cmd_evaluate(config, options);
    const double elapsed = seconds_since(start);
    const double ens = eval.report.ensemble.mean, base = eval.report.baseline.mean;
    const bool pass = ens >= 0.90 && ens - base >= 0.30 && elapsed <= kLocalizationSeconds;
    verdict(2, pass, "localization gap");
    detail(fmt::format("ensemble {:.4f} (var {:.4f}), baseline {:.4f} (var {:.4f}), gap {:.4f}",
                       ens, eval.report.ensemble.variance, base, eval.report.baseline.variance,
                       ens - base));
    detail(fmt::format("evaluate {:.1f}s with {} jobs (limit {:.0f}s)", elapsed, options.jobs,
                       kLocalizationSeconds));
  }

  // 3. Solver against brute-force and closed-form oracles.
  {
    std::mt19937_64 rng(7001);
    int lp_ok = 0, qp_ok = 0;
    double lp_err = 0.0, qp_err = 0.0;
    for (int i = 0; i < 100; ++i) {
      const auto p = oracle::random_lp(rng);
      const auto expected = oracle::lp_vertex_enumeration(p.q, p.A, p.l, p.u);
      const auto sol = optim::solve(p, solver);
      if (!expected || sol.status != optim::Status::Optimal) continue;
      kkt.add(optim::kkt_residuals(p, sol), solver);
      const double err = std::abs(sol.objective - *expected);
      lp_err = std::max(lp_err, err);
      if (err <= 1e-5) ++lp_ok;
    }
    for (int i = 0; i < 100; ++i) {
      const auto box = oracle::random_box_qp(rng);
      const auto sol = optim::solve(box.problem, solver);
      if (sol.status != optim::Status::Optimal) continue;
      kkt.add(optim::kkt_residuals(box.problem, sol), solver);
      const double err = (sol.z - box.optimum).cwiseAbs().maxCoeff();
      qp_err = std::max(qp_err, err);
      if (err <= 1e-6) ++qp_ok;
    }
    verdict(3, lp_ok == 100 && qp_ok == 100, "solver oracle equivalence");
    detail(fmt::format("LPs within 1e-5: {}/100 (max error {:.2e})", lp_ok, lp_err));
    detail(fmt::format("box QPs within 1e-6: {}/100 (max error {:.2e})", qp_ok, qp_err));
  }

  // 6 runs before 4 so its solves are part of the KKT tally: every slack-free
  // explanation of the grid, rechecked constraint by constraint.
  std::size_t rechecked = 0, violations = 0;
  double worst_margin = -optim::kInf;
  std::size_t recheck_failures = 0;
  for (const auto& entry : load_manifest(layout)) {
    const auto ensemble = load_ensemble(layout, entry.seed);
    const double threshold = load_threshold(layout, entry.seed);
    const CfConfig cfg = explain_config(config, threshold);
    const auto faulty = load_csv(layout.faulty(entry.id));
    const auto stream = detect(ensemble, faulty, threshold);
    int explained = 0;
    for (Index t : stream.alarm_steps()) {
      if (t < config.scenario.train_end) continue;
      if (explained++ == config.alarm_steps) break;
      Counterfactual cf;
      try {
        cf = ensemble_counterfactual(ensemble, snapshot_at_alarm(faulty, ensemble, t), cfg);
      } catch (const SolverError&) {
        ++recheck_failures;
        continue;
      }
      kkt.add(cf.kkt, cfg.solver);
      if (!cf.feasible_without_slack) continue;
      ++rechecked;
      for (std::size_t i = 0; i < ensemble.size(); ++i) {
        const double margin =
            std::abs(model_residual(ensemble.models[i], cf.x_cf)) - cfg.tolerance(i);
        worst_margin = std::max(worst_margin, margin);
        if (margin > 1e-6) ++violations;
      }
    }
  }

  // 4. KKT certification of every Optimal solve.
  {
    const auto& st = eval.stats;
    const std::size_t optimal = st.solves - st.solver_failures;
    const bool pass = st.certified == optimal && kkt.certified == kkt.optimal;
    verdict(4, pass, "KKT certification");
    detail(fmt::format("grid evaluation: {}/{} optimal solves certified, {} solver failures, "
                       "worst residual/tolerance {:.2e}",
                       st.certified, optimal, st.solver_failures, st.worst_kkt_ratio));
    detail(fmt::format("oracle and recheck solves: {}/{} certified, worst residual/tolerance {:.2e}",
                       kkt.certified, kkt.optimal, kkt.worst_ratio));
  }

  // 5. Ensemble of one versus the independent path.
  {
    std::mt19937_64 rng(5005);
    std::uniform_real_distribution<double> lam(0.05, 5.0), tol(0.0, 0.5);
    std::normal_distribution<double> g(0.0, 2.0);
    int agree = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      const Index n = 2 + trial % 7;
      const auto model = random_model(rng, n, trial % n);
      const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(n, [&] { return g(rng); });
      CfConfig cfg;
      cfg.lambda = lam(rng);
      cfg.default_tolerance = tol(rng);
      cfg.complexity = trial % 2 ? Complexity::L2 : Complexity::L1;
      cfg.distance = (trial / 2) % 2 ? Distance::Squared : Distance::Abs;
      Ensemble single;
      single.window = 3;
      single.models.push_back(model);
      const auto a = ensemble_counterfactual(single, x, cfg);
      const auto b = independent_counterfactual(model, x, 0.0, cfg);
      const double err = std::abs(a.objective - b.objective);
      worst = std::max(worst, err);
      if (err <= 1e-6) ++agree;
    }
    verdict(5, agree == 50, "single-model reduction");
    detail(fmt::format("objectives within 1e-6: {}/50 (max difference {:.2e})", agree, worst));
  }

  // 6. Feasibility certificate.
  {
    const bool pass = violations == 0 && rechecked > 0 &&
                      eval.stats.max_excess_slack_free <= 1e-6 && recheck_failures == 0;
    verdict(6, pass, "feasibility certificate");
    detail(fmt::format("{} slack-free explanations rechecked, {} constraint violations beyond 1e-6, "
                       "worst |residual| - tolerance {:.2e}",
                       rechecked, violations, worst_margin));
    detail(fmt::format("pipeline's own recheck: max excess {:.2e} over {} slack-free solves; "
                       "{} solver failures in the recheck",
                       eval.stats.max_excess_slack_free, eval.stats.slack_free, recheck_failures));
  }

  // 7. Property suites, each run from the unit test binary.
  {
    const std::vector<std::pair<std::string, std::string>> suites{
        {"fault locality", "property: faults touch only their sensor from onset on"},
        {"threshold monotonicity of alarms", "property: raising the threshold never adds an alarm"},
        {"slack monotonicity in lambda", "property: slack shrinks as lambda grows"},
        {"normalization keeps the argmax", "property: normalization keeps the argmax"},
        {"csv round trip", "property: csv round trip is the identity"},
    };
    bool all = true;
    std::vector<std::string> lines;
    for (const auto& [label, name] : suites) {
      const bool ok = run_property(name);
      all = all && ok;
      lines.push_back(fmt::format("{}: {}", label, ok ? "pass" : "fail"));
    }
    verdict(7, all, "property suites");
    for (const auto& l : lines) detail(l);
  }

  fs::remove_all(root);
  return failures == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
