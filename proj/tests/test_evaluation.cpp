#include <cmath>
#include <memory>

#include "doctest.h"
#include "vfsynth/config.hpp"
#include "vfsynth/dataset.hpp"
#include "vfsynth/error.hpp"
#include "vfsynth/evaluation.hpp"
#include "vfsynth/scenario.hpp"

using namespace vfsynth;

namespace {

struct Fixture {
  RunConfig cfg;
  std::vector<DemoTuple> train;
  std::shared_ptr<const LearnedModel> model;
};

// A small descent-constrained model trained once and shared by the cases.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    const DemoSet set = generate_demos(sample_uniform_states(400, x.cfg.bounds, 5), x.cfg.demo_spec(), 0);
    x.train = set.converged();
    BasisSpec b;
    b.d = 25;
    std::vector<StateVec> xs;
    for (const auto& t : x.train) xs.push_back(t.x);
    const Basis basis = fit_basis(b, xs, x.cfg.bounds, x.cfg.stage.x_sp);
    const QpProblem qp = assemble_qp(x.train, basis, x.cfg.stage, x.cfg.grid, x.cfg.model, 1e-8, {}, 0);
    const SynthesisResult r = solve_qp(qp);
    REQUIRE(r.status == QpStatus::optimal);
    auto m = std::make_shared<LearnedModel>();
    m->basis = basis;
    m->theta = r.theta;
    x.model = m;
    return x;
  }();
  return f;
}

}  // namespace

TEST_CASE("training tuples satisfy descent") {
  const Fixture& f = fixture();
  OcpSpec one = f.cfg.proposed_spec(f.model);
  one.horizon = 1;
  const ViolationReport r = verify_descent(f.train, one, VerifyMode::expert_action, 1e-9, 0);
  CHECK(r.eps_hat == 0.0);
  CHECK(r.violations.empty());
  CHECK(r.m_test == static_cast<int>(f.train.size()));
  const ViolationReport s = verify_descent_serial(f.train, one, VerifyMode::expert_action, 1e-9);
  CHECK(s.residuals == r.residuals);
}

TEST_CASE("one-step MPC does no worse than the expert action") {
  const Fixture& f = fixture();
  OcpSpec one = f.cfg.proposed_spec(f.model);
  one.horizon = 1;
  const std::vector<DemoTuple> test(f.train.begin(), f.train.begin() + 60);
  const ViolationReport e = verify_descent(test, one, VerifyMode::expert_action, 1e-9, 0);
  const ViolationReport m = verify_descent(test, one, VerifyMode::mpc_one_step, 1e-9, 0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    CHECK(m.one_step_objective[i] <= e.one_step_objective[i] + 1e-8 * (1.0 + std::abs(e.one_step_objective[i])));
  }
  const ViolationReport ms = verify_descent_serial(test, one, VerifyMode::mpc_one_step, 1e-9);
  CHECK(ms.residuals == m.residuals);
  // Replaying the reported violations reproduces their residuals.
  OcpSolver solver(one);
  for (const auto& v : m.violations) {
    const MpcStep st = mpc_step(solver, v.x);
    const StateVec xp = hold_step(v.x, st.u0, one.grid, one.params);
    const double r = one.terminal.value(xp) - one.terminal.value(v.x) + one.stage(v.x, st.u0);
    CHECK(r == doctest::Approx(v.residual).epsilon(1e-12));
  }
  OcpSpec two = one;
  two.horizon = 2;
  CHECK_THROWS_AS(verify_descent(test, two, VerifyMode::mpc_one_step, 1e-9, 1), DomainError);
  CHECK_THROWS_AS(verify_descent(test, f.cfg.expert_spec(), VerifyMode::mpc_one_step, 1e-9, 1), DomainError);
}

TEST_CASE("closed loop from the setpoint and from the boundary") {
  const Fixture& f = fixture();
  const OcpSpec p = f.cfg.proposed_spec(f.model);
  const ClosedLoopRun at = simulate_closed_loop(p, f.cfg.stage.x_sp, 20, 0.02);
  CHECK(at.converged);
  CHECK(at.steps_to_converge == 0);
  CHECK(at.x_traj.size() == 21);
  CHECK(at.u_traj.size() == 20);
  CHECK(at.error.empty());

  const auto x0s = twelve_initial_conditions(f.cfg.bounds);
  REQUIRE(x0s.size() == 12);
  for (const auto& x : x0s) CHECK(f.cfg.bounds.state_excess_max(x) == 0.0);
  const auto a = simulate_many(p, x0s, 30, 0.02, 4);
  const auto b = simulate_many_serial(p, x0s, 30, 0.02);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x_traj == b[i].x_traj);
    CHECK(a[i].stage_cost_sum == b[i].stage_cost_sum);
    double sum = 0.0;
    for (double c : a[i].stage_costs) sum += c;
    CHECK(sum == a[i].stage_cost_sum);
  }
  const PolicySummary s = summarize(a);
  CHECK(s.runs == 12);
  CHECK(s.avg_solve_ms > 0.0);
  CHECK_THROWS_AS(simulate_closed_loop(p, f.cfg.stage.x_sp, 0, 0.02), DomainError);
}

TEST_CASE("identical policies give identical trajectories") {
  const Fixture& f = fixture();
  const OcpSpec p = f.cfg.proposed_spec(f.model);
  const std::vector<StateVec> x0s = {Eigen::Vector2d(0.1, 0.8), Eigen::Vector2d(0.4, 0.5)};
  const Comparison c = compare_policies(p, p, x0s, 25, 0.02);
  for (std::size_t i = 0; i < x0s.size(); ++i) {
    CHECK(c.expert_runs[i].x_traj == c.proposed_runs[i].x_traj);
    CHECK(c.expert_runs[i].u_traj == c.proposed_runs[i].u_traj);
  }
  CHECK(c.expert.total_cost == c.proposed.total_cost);
}

TEST_CASE("adaptation at the original bound is a plain comparison") {
  const Fixture& f = fixture();
  const OcpSpec p = f.cfg.proposed_spec(f.model);
  const OcpSpec e = f.cfg.expert_spec();
  const std::vector<StateVec> x0s = {Eigen::Vector2d(0.2, 0.7)};
  const Adaptation a = adaptation_experiment(e, p, f.cfg.bounds.x_lo[1], x0s, 15, 0.02);
  const Comparison c = compare_policies(e, p, x0s, 15, 0.02);
  CHECK(a.comparison.proposed_runs[0].x_traj == c.proposed_runs[0].x_traj);
  CHECK(a.comparison.expert_runs[0].x_traj == c.expert_runs[0].x_traj);
  CHECK(lower_bound_excess(c.expert_runs, 1, -1.0) == 0.0);
  CHECK_THROWS(adaptation_experiment(e, p, 0.9, x0s, 15, 0.02));
}

TEST_CASE("verification report formats") {
  CHECK(verify_mode_from_string("expert_action") == VerifyMode::expert_action);
  CHECK(to_string(VerifyMode::mpc_one_step) == "mpc_one_step");
  CHECK_THROWS_AS(verify_mode_from_string("both"), DomainError);
  ViolationReport r;
  r.violations.push_back({3, Eigen::Vector2d(0.1, 0.2), 1e-3});
  CHECK(violations_csv(r) == "index,x1,x2,residual\n3,0.10000000000000001,0.20000000000000001,0.001\n");
}
