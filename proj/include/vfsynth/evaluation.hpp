#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vfsynth/dataset.hpp"
#include "vfsynth/ocp.hpp"

namespace vfsynth {

enum class VerifyMode { expert_action, mpc_one_step };
std::string to_string(VerifyMode m);
VerifyMode verify_mode_from_string(const std::string& s);

struct Violation {
  int index = 0;
  StateVec x;
  double residual = 0.0;
};

struct ViolationReport {
  VerifyMode mode = VerifyMode::mpc_one_step;
  int m_test = 0;
  double eps_hat = 0.0;
  std::vector<Violation> violations;
  double tolerance = 0.0;
  /// Residual V(f(x,u)) - V(x) + l(x,u) per test point.
  std::vector<double> residuals;
  /// One-step objective l(x,u) + V(f(x,u)) + penalty at the checked action.
  std::vector<double> one_step_objective;
  /// Test points whose one-step solve did not converge (still checked).
  int solver_failures = 0;
  double max_residual = 0.0;
};

/// Checks the descent condition on held-out tuples. `one_step` supplies the
/// stage cost, model, grid and the N = 1 solver settings; its terminal cost
/// must be the learned model under test. A point violates when
/// r > tol * (1 + |V(x)|).
ViolationReport verify_descent(const std::vector<DemoTuple>& test, const OcpSpec& one_step,
                               VerifyMode mode, double tol, int jobs);
/// Single-threaded reference for verify_descent.
ViolationReport verify_descent_serial(const std::vector<DemoTuple>& test, const OcpSpec& one_step,
                                      VerifyMode mode, double tol);

struct ClosedLoopRun {
  std::vector<StateVec> x_traj;  // steps + 1 states
  std::vector<InputVec> u_traj;  // steps inputs
  std::vector<double> stage_costs;
  double stage_cost_sum = 0.0;
  /// The final state is within conv_tol and every state from
  /// steps_to_converge onwards stays there.
  bool converged = false;
  int steps_to_converge = -1;
  std::vector<double> solve_times;  // seconds
  /// Largest per-coordinate excess over the policy's state box.
  double constraint_violation_max = 0.0;
  int solver_failures = 0;
  /// Set when a numeric error ended the run early.
  std::string error;
};

ClosedLoopRun simulate_closed_loop(const OcpSpec& policy, const StateVec& x0, int steps, double conv_tol);

/// Independent closed-loop runs, parallel over initial conditions.
std::vector<ClosedLoopRun> simulate_many(const OcpSpec& policy, const std::vector<StateVec>& x0s, int steps,
                                         double conv_tol, int jobs);
std::vector<ClosedLoopRun> simulate_many_serial(const OcpSpec& policy, const std::vector<StateVec>& x0s,
                                                int steps, double conv_tol);

struct PolicySummary {
  double avg_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  double total_cost = 0.0;
  int converged = 0;
  int runs = 0;
  double max_violation = 0.0;
  int solver_failures = 0;
};

PolicySummary summarize(const std::vector<ClosedLoopRun>& runs);

struct Comparison {
  std::vector<StateVec> x0s;
  std::vector<ClosedLoopRun> expert_runs;
  std::vector<ClosedLoopRun> proposed_runs;
  PolicySummary expert;
  PolicySummary proposed;
};

/// Runs both policies from every initial condition. Runs execute one at a
/// time by default so solve times are not distorted by contention.
Comparison compare_policies(const OcpSpec& expert, const OcpSpec& proposed, const std::vector<StateVec>& x0s,
                            int steps, double conv_tol, int jobs = 1);

struct Adaptation {
  double tightened_x2_lo = 0.0;
  Comparison comparison;
  /// Largest shortfall below the tightened x2 bound over all runs.
  double expert_x2_excess = 0.0;
  double proposed_x2_excess = 0.0;
};

/// Largest amount by which any state of any run falls below lo in coordinate i.
double lower_bound_excess(const std::vector<ClosedLoopRun>& runs, int i, double lo);

/// Reruns both policies with the x2 lower bound raised (soft), model untouched.
Adaptation adaptation_experiment(const OcpSpec& expert, const OcpSpec& proposed, double tightened_x2_lo,
                                 const std::vector<StateVec>& x0s, int steps, double conv_tol, int jobs = 1);

/// Twelve points on the boundary of the state box: four on each x2 edge
/// (x1 at 1/5 .. 4/5 of its range) and two on each x1 edge (x2 at 1/3, 2/3).
std::vector<StateVec> twelve_initial_conditions(const Bounds& box);

/// `step,x1,x2,u,stage_cost,solve_ms`; the final state row leaves u and cost empty.
std::string trajectory_csv(const ClosedLoopRun& run);
/// `index,x1,x2,residual`.
std::string violations_csv(const ViolationReport& r);

}  // namespace vfsynth
