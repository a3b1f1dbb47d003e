// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every failing criterion is listed in --expect-fail
// and 1 otherwise. A listed criterion that passes is not an error.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oracles.hpp"
#include "vfsynth/artifact.hpp"
#include "vfsynth/commands.hpp"
#include "vfsynth/config.hpp"
#include "vfsynth/dataset.hpp"
#include "vfsynth/evaluation.hpp"
#include "vfsynth/parallel.hpp"
#include "vfsynth/qp_solver.hpp"
#include "vfsynth/scenario.hpp"

using namespace vfsynth;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Trained {
  std::shared_ptr<const LearnedModel> model;
  SynthesisResult result;
  double seconds = 0.0;
};

// Same procedure as the synth command: M converged rows drawn without
// replacement, basis fitted on them, QP assembled and solved.
Trained synthesize(const RunConfig& cfg, const std::vector<DemoTuple>& rows, int m, std::uint64_t seed,
                   bool descent) {
  std::vector<DemoTuple> train;
  std::vector<StateVec> states;
  for (int i : subsample_indices(static_cast<int>(rows.size()), m, seed)) {
    train.push_back(rows[static_cast<std::size_t>(i)]);
    states.push_back(train.back().x);
  }
  const auto t0 = Clock::now();
  Trained t;
  const Basis basis = fit_basis(cfg.basis, states, cfg.bounds, cfg.stage.x_sp);
  SynthesisFlags flags;
  flags.descent = descent;
  flags.nonneg = cfg.synthesis.nonneg;
  const QpProblem qp = assemble_qp(train, basis, cfg.stage, cfg.grid, cfg.model, cfg.synthesis.lambda, flags, 0);
  SolveQpOptions qo;
  qo.feas_tol = cfg.synthesis.feas_tol;
  qo.kkt_tol = cfg.synthesis.kkt_tol;
  qo.max_iters = cfg.synthesis.max_iters;
  t.result = solve_qp(qp, qo);
  t.seconds = since(t0);
  auto lm = std::make_shared<LearnedModel>();
  lm->basis = basis;
  lm->theta = t.result.theta;
  t.model = lm;
  return t;
}

Outcome c1_sample_size() {
  const auto t0 = Clock::now();
  const long a = min_samples(0.2, 1e-10, 75);
  const long b = min_samples(0.1, 1e-10, 75);
  const long c = min_samples(0.05, 1e-10, 75);
  const double secs = since(t0);
  bool bracket = true;
  for (auto [eps, m] : {std::pair{0.2, a}, std::pair{0.1, b}, std::pair{0.05, c}}) {
    bracket = bracket && oracle::exact_tail_at_most(eps, m, 75, 1e-10) &&
              !oracle::exact_tail_at_most(eps, m - 1, 75, 1e-10);
  }
  Outcome o;
  o.pass = a == 683 && b == 1403 && c == 2842 && bracket && secs < 1.0;
  o.detail = "M = " + std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c) +
             "; exact bracketing " + (bracket ? "holds" : "fails") + "; " + fmt("%.3f s", secs);
  return o;
}

Outcome c2_binomial_tail() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  long cases = 0;
  for (double eps : {0.05, 0.1, 0.2, 0.5}) {
    for (long m = 0; m <= 200; ++m) {
      const std::vector<double> exact = oracle::exact_binomial_tail(eps, m, 50);
      for (long d = 1; d <= 50; ++d) {
        const double want = exact[static_cast<std::size_t>(d - 1)];
        worst = std::max(worst, std::abs(beta_bound(eps, m, d) - want) / want);
        ++cases;
      }
    }
  }
  const double secs = since(t0);
  return {worst <= 1e-10 && secs < 10.0, std::to_string(cases) + " cases, max relative error " +
                                             fmt("%.2e", worst) + "; " + fmt("%.2f s", secs)};
}

Outcome c3_fixed_point(const RunConfig& cfg) {
  const StateVec x = hold_step(cfg.stage.x_sp, cfg.stage.u_sp, cfg.grid, cfg.model);
  const double drift = (x - cfg.stage.x_sp).lpNorm<Eigen::Infinity>();
  return {drift <= 1e-3, "|hold_step(x_sp, u_sp) - x_sp|_inf = " + fmt("%.3e", drift) +
                             " (x_sp is rounded to 4 decimals and is not an exact equilibrium)"};
}

Outcome c4_ocp_oracle(const RunConfig& cfg, std::shared_ptr<const LearnedModel> model) {
  const OcpSpec one = cfg.proposed_spec(model);
  OcpSolver solver(one);
  const auto xs = sample_uniform_states(100, cfg.bounds, 404);
  double worst_gap = -1e300, worst_abs = 0.0;
  for (const auto& x : xs) {
    const OcpSolution s = solver.solve(x);
    const auto g = oracle::grid_search(
        [&](double u) { return solver.objective(x, Eigen::VectorXd::Constant(1, u)); }, 0.0, 2.0, 1e-4);
    worst_gap = std::max(worst_gap, s.value - g.value);
    worst_abs = std::max(worst_abs, std::abs(s.value - g.value));
  }

  std::mt19937_64 rng(405);
  std::uniform_real_distribution<double> uu(0.0, 2.0);
  const int horizons[] = {1, 2, 5, 20, 50};
  double worst_fd = 0.0;
  for (int i = 0; i < 100; ++i) {
    OcpSpec s = cfg.expert_spec();
    s.horizon = horizons[i % 5];
    if (i % 3 == 1) s.terminal = TerminalCost::learned(model);
    if (i % 3 == 2) s.soft_state_weight = 0.0;
    OcpSolver sv(s);
    const StateVec x0 = sample_uniform_states(1, cfg.bounds, 1000 + static_cast<std::uint64_t>(i))[0];
    Eigen::VectorXd us(s.horizon);
    for (auto& v : us) v = uu(rng);
    const ObjectiveEval e = sv.objective_and_gradient(x0, us);
    const Eigen::VectorXd fd =
        oracle::central_difference([&](const Eigen::VectorXd& v) { return sv.objective(x0, v); }, us, 1e-6);
    worst_fd = std::max(worst_fd, oracle::rel_error(e.grad, fd, 1e-8));
  }
  return {worst_gap <= 1e-8 && worst_fd <= 1e-5,
          "N=1 objective minus grid minimum at most " + fmt("%.2e", worst_gap) + " (max |diff| " +
              fmt("%.2e", worst_abs) + "); adjoint vs central difference " + fmt("%.2e", worst_fd) + " relative"};
}

Outcome c5_qp_oracle() {
  std::mt19937_64 rng(505);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> dn(1, 10), dm(0, 20);
  std::uniform_real_distribution<double> slack(0.0, 1.0);
  double worst_obj = 0.0, worst_kkt = 0.0;
  int optimal = 0;
  for (int k = 0; k < 200; ++k) {
    const int n = dn(rng), m = dm(rng);
    Eigen::MatrixXd L(n, n), A(m, n);
    for (auto& v : L.reshaped()) v = n01(rng);
    for (auto& v : A.reshaped()) v = n01(rng);
    const Eigen::MatrixXd H = L * L.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g(n), x0(n);
    for (auto& v : g) v = n01(rng);
    for (auto& v : x0) v = 0.3 * n01(rng);
    Eigen::VectorXd b = A * x0;
    for (auto& v : b) v += slack(rng);
    const QpSolution s = solve_dense_qp(H, g, A, b);
    const auto ref = oracle::brute_force_qp(H, g, A, b);
    if (s.status != QpStatus::optimal || !ref.found) continue;
    ++optimal;
    const double obj = 0.5 * s.x.dot(H * s.x) + g.dot(s.x);
    worst_obj = std::max(worst_obj, std::abs(obj - ref.objective) / std::max(1.0, std::abs(ref.objective)));
    const Eigen::VectorXd r = H * s.x + g + A.transpose() * s.mu;
    double kkt = r.lpNorm<Eigen::Infinity>();
    if (m > 0) {
      const Eigen::VectorXd slackv = A * s.x - b;
      kkt = std::max({kkt, slackv.maxCoeff(), -s.mu.minCoeff(), s.mu.cwiseProduct(slackv).cwiseAbs().maxCoeff()});
    }
    worst_kkt = std::max(worst_kkt, kkt);
  }
  return {optimal == 200 && worst_obj <= 1e-8 && worst_kkt <= 1e-6,
          std::to_string(optimal) + "/200 optimal; objective gap " + fmt("%.2e", worst_obj) + "; KKT residual " +
              fmt("%.2e", worst_kkt)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> expect_fail;
  app.add_option("--expect-fail", expect_fail, "Criteria whose failure is documented and tolerated");
  CLI11_PARSE(app, argc, argv);
  const std::set<int> tolerated(expect_fail.begin(), expect_fail.end());

  const RunConfig cfg;
  std::set<int> failed;
  auto report = [&](int id, const Outcome& o) {
    if (!o.pass) failed.insert(id);
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << o.detail
              << (!o.pass && tolerated.count(id) ? " [expected]" : "") << std::endl;
  };

  report(1, c1_sample_size());
  report(2, c2_binomial_tail());
  report(3, c3_fixed_point(cfg));

  // Shared data: labelled demonstrations and a fresh held-out test set.
  const auto t_data = Clock::now();
  const DemoSet demos = generate_demos(sample_uniform_states(3000, cfg.bounds, cfg.seeds.data), cfg.demo_spec(), 0);
  const std::vector<DemoTuple> rows = demos.converged();
  const DemoSet test = generate_demos(sample_uniform_states(2000, cfg.bounds, cfg.seeds.test), cfg.demo_spec(), 0);
  std::cerr << "data: " << rows.size() << "/3000 training and " << test.tuples.size() - test.failures()
            << "/2000 test demonstrations converged, " << fmt("%.1f s", since(t_data)) << "\n";

  const int m683 = static_cast<int>(min_samples(cfg.certificate.eps, cfg.certificate.beta, cfg.basis.d));
  const Trained main_model = synthesize(cfg, rows, m683, cfg.seeds.subsample, true);

  report(4, c4_ocp_oracle(cfg, main_model.model));
  report(5, c5_qp_oracle());

  {
    const SynthesisResult& r = main_model.result;
    Outcome o;
    o.pass = r.status == QpStatus::optimal && r.max_descent_residual <= 1e-6 && main_model.seconds <= 300.0;
    o.detail = "M = " + std::to_string(m683) + ", d = " + std::to_string(main_model.model->theta.size()) +
               ", status " + to_string(r.status) + ", max descent residual " + fmt("%.2e", r.max_descent_residual) +
               ", training MSE " + fmt("%.4f", r.training_mse) + ", " + fmt("%.1f s", main_model.seconds);
    report(6, o);
  }

  {
    bool ok = true;
    std::string detail;
    for (long m : {683L, 1403L, 2842L}) {
      for (std::uint64_t seed : {3ULL, 4ULL}) {
        if (static_cast<long>(rows.size()) < m) {
          ok = false;
          continue;
        }
        const Trained con = m == m683 && seed == cfg.seeds.subsample
                                ? main_model
                                : synthesize(cfg, rows, static_cast<int>(m), seed, true);
        const Trained unc = synthesize(cfg, rows, static_cast<int>(m), seed, false);
        ok = ok && con.result.status == QpStatus::optimal && unc.result.status == QpStatus::optimal &&
             unc.result.training_mse <= con.result.training_mse + 1e-12;
        detail += " (M=" + std::to_string(m) + ", seed " + std::to_string(seed) + ": " +
                  fmt("%.4f", unc.result.training_mse) + " <= " + fmt("%.4f", con.result.training_mse) + ")";
      }
    }
    report(7, {ok, "unconstrained <= constrained MSE" + detail});
  }

  {
    OcpSpec one = cfg.proposed_spec(main_model.model);
    one.horizon = 1;
    const ViolationReport mpc = verify_descent(test.tuples, one, VerifyMode::mpc_one_step, cfg.evaluation.tol, 0);
    const ViolationReport exp =
        verify_descent(test.converged(), one, VerifyMode::expert_action, cfg.evaluation.tol, 0);
    const double eps = cfg.certificate.eps;
    report(8, {mpc.eps_hat <= eps && exp.eps_hat <= eps,
               "eps_hat = " + fmt("%.4f", mpc.eps_hat) + " (mpc_one_step, " + std::to_string(mpc.m_test) +
                   " points), " + fmt("%.4f", exp.eps_hat) + " (expert_action, " + std::to_string(exp.m_test) +
                   " points) against eps = " + fmt("%.2f", eps) + "; reference 0.1091"});
  }

  const auto x0s = twelve_initial_conditions(cfg.bounds);
  const int steps = cfg.evaluation.steps;
  const double conv = cfg.evaluation.conv_tol;
  const Comparison cmp =
      compare_policies(cfg.expert_spec(), cfg.proposed_spec(main_model.model), x0s, steps, conv, 1);
  {
    const Trained baseline = synthesize(cfg, rows, m683, cfg.seeds.subsample, false);
    const PolicySummary b = summarize(simulate_many(cfg.proposed_spec(baseline.model), x0s, steps, conv, 0));
    report(9, {cmp.proposed.converged >= 11 && cmp.expert.converged == 12,
               "proposed " + std::to_string(cmp.proposed.converged) + "/12, expert " +
                   std::to_string(cmp.expert.converged) + "/12 converged; unconstrained baseline " +
                   std::to_string(b.converged) + "/12 (recorded only); total cost proposed " +
                   fmt("%.3f", cmp.proposed.total_cost) + ", expert " + fmt("%.3f", cmp.expert.total_cost)});
  }
  {
    const double speedup = cmp.expert.avg_solve_ms / cmp.proposed.avg_solve_ms;
    report(10, {speedup >= 3.0, "avg solve " + fmt("%.3f", cmp.expert.avg_solve_ms) + " ms (expert) vs " +
                                    fmt("%.3f", cmp.proposed.avg_solve_ms) + " ms (proposed), " +
                                    fmt("%.1fx", speedup)});
  }

  {
    Bounds tight = cfg.bounds;
    tight.x_lo[1] = cfg.evaluation.tightened_x2_lo;
    const Adaptation ad = adaptation_experiment(cfg.expert_spec(), cfg.proposed_spec(main_model.model),
                                                tight.x_lo[1], twelve_initial_conditions(tight), steps, conv, 1);
    const PolicySummary& p = ad.comparison.proposed;
    report(11, {ad.proposed_x2_excess <= 0.01 && p.converged >= 11,
                "x2 >= " + fmt("%.2f", tight.x_lo[1]) + ": proposed max shortfall " +
                    fmt("%.2e", ad.proposed_x2_excess) + ", " + std::to_string(p.converged) +
                    "/12 converged; expert shortfall " + fmt("%.2e", ad.expert_x2_excess) + ", " +
                    std::to_string(ad.comparison.expert.converged) + "/12 converged"});
  }

  {
    // gen-data -> synth -> verify twice with different worker counts.
    const fs::path root = fs::temp_directory_path() / "vfsynth_acceptance";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cfg_path = (root / "config.json").string();
    RunConfig small = cfg;
    small.data.count = 760;
    small.evaluation.m_test = 200;
    write_file(cfg_path, to_json(small).dump(2));
    std::vector<std::string> csv;
    std::vector<ThetaVec> theta;
    std::vector<double> eps_hat;
    for (int jobs : {1, 4}) {
      CommonArgs c;
      c.config_path = cfg_path;
      c.out_dir = (root / ("jobs" + std::to_string(jobs))).string();
      c.jobs = jobs;
      GenDataArgs g{c, 0, ""};
      const CommandOutput gd = cmd_gen_data(g);
      const std::string data = gd.summary["path"].get<std::string>();
      csv.push_back(read_file(data));
      SynthArgs s;
      s.common = c;
      s.data = data;
      const CommandOutput sy = cmd_synth(s);
      theta.push_back(load_artifact(sy.summary["path"].get<std::string>()).theta);
      VerifyArgs v;
      v.common = c;
      v.model = sy.summary["path"].get<std::string>();
      eps_hat.push_back(cmd_verify(v).summary["eps_hat"].get<double>());
    }
    const double dtheta = (theta[0] - theta[1]).lpNorm<Eigen::Infinity>();
    report(12, {csv[0] == csv[1] && dtheta <= 1e-12 && eps_hat[0] == eps_hat[1],
                std::string("dataset CSV ") + (csv[0] == csv[1] ? "byte-identical" : "differs") +
                    " for --jobs 1 and 4 (" + std::to_string(small.data.count) + " rows), max |dtheta| " +
                    fmt("%.1e", dtheta) + ", eps_hat " + fmt("%.4f", eps_hat[0]) + " vs " + fmt("%.4f", eps_hat[1])});
  }

  bool ok = true;
  for (int id : failed) ok = ok && tolerated.count(id) > 0;
  std::cout << (ok ? "acceptance: all failures are documented" : "acceptance: unexpected failure") << std::endl;
  return ok ? 0 : 1;
}
