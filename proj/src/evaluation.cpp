#include "vfsynth/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>

#include <omp.h>

#include "vfsynth/dataset.hpp"
#include "vfsynth/error.hpp"
#include "vfsynth/parallel.hpp"

namespace vfsynth {

std::string to_string(VerifyMode m) {
  return m == VerifyMode::expert_action ? "expert_action" : "mpc_one_step";
}

VerifyMode verify_mode_from_string(const std::string& s) {
  if (s == "expert_action") return VerifyMode::expert_action;
  if (s == "mpc_one_step") return VerifyMode::mpc_one_step;
  throw DomainError("unknown verification mode '" + s + "'");
}

namespace {

struct PointCheck {
  double residual = 0.0;
  double objective = 0.0;
  double v_x = 0.0;
  bool failed = false;
};

void check_one_step_spec(const OcpSpec& spec) {
  if (spec.terminal.kind() != TerminalCost::Kind::learned) {
    throw DomainError("verification needs a learned terminal cost");
  }
  if (spec.horizon != 1) throw DomainError("verification uses the one-step (N = 1) problem");
}

PointCheck check_point(OcpSolver& solver, const DemoTuple& t, VerifyMode mode) {
  const OcpSpec& spec = solver.spec();
  PointCheck pc;
  InputVec u = t.u;
  if (mode == VerifyMode::mpc_one_step) {
    const MpcStep step = mpc_step(solver, t.x);
    u = step.u0;
    pc.failed = step.diag.status != SolveStatus::converged;
  }
  const StateVec xp = hold_step(t.x, u, spec.grid, spec.params);
  pc.v_x = spec.terminal.value(t.x);
  const double v_xp = spec.terminal.value(xp);
  const double l = spec.stage(t.x, u);
  pc.residual = v_xp - pc.v_x + l;
  pc.objective = solver.objective(t.x, u);
  return pc;
}

ViolationReport collect(const std::vector<DemoTuple>& test, const std::vector<PointCheck>& checks,
                        VerifyMode mode, double tol) {
  ViolationReport r;
  r.mode = mode;
  r.m_test = static_cast<int>(test.size());
  r.tolerance = tol;
  r.max_residual = test.empty() ? 0.0 : -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const PointCheck& c = checks[i];
    r.residuals.push_back(c.residual);
    r.one_step_objective.push_back(c.objective);
    r.solver_failures += c.failed;
    r.max_residual = std::max(r.max_residual, c.residual);
    if (!(c.residual <= tol * (1.0 + std::abs(c.v_x)))) {
      r.violations.push_back({static_cast<int>(i), test[i].x, c.residual});
    }
  }
  r.eps_hat = test.empty() ? 0.0 : static_cast<double>(r.violations.size()) / static_cast<double>(test.size());
  return r;
}

}  // namespace

ViolationReport verify_descent_serial(const std::vector<DemoTuple>& test, const OcpSpec& one_step,
                                      VerifyMode mode, double tol) {
  check_one_step_spec(one_step);
  OcpSolver solver(one_step);
  std::vector<PointCheck> checks;
  checks.reserve(test.size());
  for (const auto& t : test) checks.push_back(check_point(solver, t, mode));
  return collect(test, checks, mode, tol);
}

ViolationReport verify_descent(const std::vector<DemoTuple>& test, const OcpSpec& one_step, VerifyMode mode,
                               double tol, int jobs) {
  check_one_step_spec(one_step);
  jobs = resolve_jobs(jobs);
  if (jobs <= 1) return verify_descent_serial(test, one_step, mode, tol);
  std::vector<PointCheck> checks(test.size());
  const long n = static_cast<long>(test.size());
  std::exception_ptr err;
#pragma omp parallel num_threads(jobs)
  {
    OcpSolver solver(one_step);
#pragma omp for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) {
      try {
        checks[static_cast<std::size_t>(i)] = check_point(solver, test[static_cast<std::size_t>(i)], mode);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
  return collect(test, checks, mode, tol);
}

ClosedLoopRun simulate_closed_loop(const OcpSpec& policy, const StateVec& x0, int steps, double conv_tol) {
  if (steps < 1) throw DomainError("closed loop needs at least one step");
  if (!(conv_tol > 0.0)) throw DomainError("convergence tolerance must be positive");
  OcpSolver solver(policy);
  const int m = policy.bounds.input_dim();
  ClosedLoopRun run;
  run.x_traj.push_back(x0);
  std::optional<Eigen::VectorXd> warm;
  for (int t = 0; t < steps; ++t) {
    const StateVec& x = run.x_traj.back();
    const MpcStep step = mpc_step(solver, x, warm);
    if (step.diag.status == SolveStatus::numeric_error) {
      run.error = "solver numeric error at step " + std::to_string(t);
      break;
    }
    run.solver_failures += step.diag.status != SolveStatus::converged;
    StateVec next;
    try {
      next = hold_step(x, step.u0, policy.grid, policy.params);
    } catch (const NumericDomainError& e) {
      run.error = std::string("plant step failed: ") + e.what();
      break;
    }
    run.u_traj.push_back(step.u0);
    run.stage_costs.push_back(policy.stage(x, step.u0));
    run.stage_cost_sum += run.stage_costs.back();
    run.solve_times.push_back(step.diag.solve_time);
    run.x_traj.push_back(std::move(next));
    warm = shift_warm_start(step.diag.u_seq, m);
  }
  for (const auto& x : run.x_traj) {
    run.constraint_violation_max = std::max(run.constraint_violation_max, policy.bounds.state_excess_max(x));
  }
  int first = -1;
  for (int k = static_cast<int>(run.x_traj.size()) - 1; k >= 0; --k) {
    if ((run.x_traj[static_cast<std::size_t>(k)] - policy.stage.x_sp).norm() <= conv_tol) {
      first = k;
    } else {
      break;
    }
  }
  run.converged = run.error.empty() && first >= 0;
  run.steps_to_converge = run.converged ? first : -1;
  return run;
}

std::vector<ClosedLoopRun> simulate_many_serial(const OcpSpec& policy, const std::vector<StateVec>& x0s,
                                                int steps, double conv_tol) {
  std::vector<ClosedLoopRun> runs;
  for (const auto& x0 : x0s) runs.push_back(simulate_closed_loop(policy, x0, steps, conv_tol));
  return runs;
}

std::vector<ClosedLoopRun> simulate_many(const OcpSpec& policy, const std::vector<StateVec>& x0s, int steps,
                                         double conv_tol, int jobs) {
  jobs = resolve_jobs(jobs);
  if (jobs <= 1) return simulate_many_serial(policy, x0s, steps, conv_tol);
  std::vector<ClosedLoopRun> runs(x0s.size());
  const long n = static_cast<long>(x0s.size());
  std::exception_ptr err;
#pragma omp parallel for num_threads(jobs) schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    try {
      runs[static_cast<std::size_t>(i)] =
          simulate_closed_loop(policy, x0s[static_cast<std::size_t>(i)], steps, conv_tol);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
  return runs;
}

PolicySummary summarize(const std::vector<ClosedLoopRun>& runs) {
  PolicySummary s;
  s.runs = static_cast<int>(runs.size());
  double total_time = 0.0;
  std::size_t solves = 0;
  for (const auto& r : runs) {
    for (double t : r.solve_times) {
      total_time += t;
      s.max_solve_ms = std::max(s.max_solve_ms, 1e3 * t);
    }
    solves += r.solve_times.size();
    s.total_cost += r.stage_cost_sum;
    s.converged += r.converged;
    s.max_violation = std::max(s.max_violation, r.constraint_violation_max);
    s.solver_failures += r.solver_failures;
  }
  s.avg_solve_ms = solves ? 1e3 * total_time / static_cast<double>(solves) : 0.0;
  return s;
}

Comparison compare_policies(const OcpSpec& expert, const OcpSpec& proposed, const std::vector<StateVec>& x0s,
                            int steps, double conv_tol, int jobs) {
  Comparison c;
  c.x0s = x0s;
  c.expert_runs = simulate_many(expert, x0s, steps, conv_tol, jobs);
  c.proposed_runs = simulate_many(proposed, x0s, steps, conv_tol, jobs);
  c.expert = summarize(c.expert_runs);
  c.proposed = summarize(c.proposed_runs);
  return c;
}

Adaptation adaptation_experiment(const OcpSpec& expert, const OcpSpec& proposed, double tightened_x2_lo,
                                 const std::vector<StateVec>& x0s, int steps, double conv_tol, int jobs) {
  OcpSpec e = expert;
  OcpSpec p = proposed;
  e.bounds.x_lo[1] = tightened_x2_lo;
  p.bounds.x_lo[1] = tightened_x2_lo;
  e.bounds.validate();
  p.bounds.validate();
  Adaptation a;
  a.tightened_x2_lo = tightened_x2_lo;
  a.comparison = compare_policies(e, p, x0s, steps, conv_tol, jobs);
  a.expert_x2_excess = lower_bound_excess(a.comparison.expert_runs, 1, tightened_x2_lo);
  a.proposed_x2_excess = lower_bound_excess(a.comparison.proposed_runs, 1, tightened_x2_lo);
  return a;
}

double lower_bound_excess(const std::vector<ClosedLoopRun>& runs, int i, double lo) {
  double m = 0.0;
  for (const auto& r : runs) {
    for (const auto& x : r.x_traj) m = std::max(m, lo - x[i]);
  }
  return m;
}

std::vector<StateVec> twelve_initial_conditions(const Bounds& box) {
  box.validate();
  if (box.state_dim() != 2) throw DimensionError("boundary initial conditions need a 2-D state box");
  const double x1lo = box.x_lo[0], x1hi = box.x_hi[0];
  const double x2lo = box.x_lo[1], x2hi = box.x_hi[1];
  std::vector<StateVec> out;
  for (double x2 : {x2lo, x2hi}) {
    for (int k = 1; k <= 4; ++k) out.push_back(Eigen::Vector2d(x1lo + (x1hi - x1lo) * k / 5.0, x2));
  }
  for (double x1 : {x1lo, x1hi}) {
    for (int k = 1; k <= 2; ++k) out.push_back(Eigen::Vector2d(x1, x2lo + (x2hi - x2lo) * k / 3.0));
  }
  return out;
}

std::string trajectory_csv(const ClosedLoopRun& run) {
  std::string out = "step,x1,x2,u,stage_cost,solve_ms\n";
  for (std::size_t k = 0; k < run.x_traj.size(); ++k) {
    const StateVec& x = run.x_traj[k];
    out += std::to_string(k) + "," + format_double(x[0]) + "," + format_double(x[1]) + ",";
    if (k < run.u_traj.size()) {
      out += format_double(run.u_traj[k][0]) + "," + format_double(run.stage_costs[k]) + "," +
             format_double(1e3 * run.solve_times[k]);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  return out;
}

std::string violations_csv(const ViolationReport& r) {
  std::string out = "index,x1,x2,residual\n";
  for (const auto& v : r.violations) {
    out += std::to_string(v.index) + "," + format_double(v.x[0]) + "," + format_double(v.x[1]) + "," +
           format_double(v.residual) + "\n";
  }
  return out;
}

}  // namespace vfsynth
