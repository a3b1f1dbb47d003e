#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vfsynth/dynamics.hpp"
#include "vfsynth/value_function.hpp"

namespace vfsynth {

/// l(x, u) = sum_i q_i (x_i - x_sp_i)^2 + sum_j r_j (u_j - u_sp_j)^2.
struct StageCost {
  Eigen::VectorXd q_weight = Eigen::Vector2d(1.0, 1.0);
  Eigen::VectorXd r_weight = Eigen::VectorXd::Constant(1, 1e-4);
  StateVec x_sp = Eigen::Vector2d(0.2632, 0.6519);
  InputVec u_sp = Eigen::VectorXd::Constant(1, 0.7853);

  double operator()(const StateVec& x, const InputVec& u) const;
  double eval(const double* x, const double* u) const;
  void validate() const;
  bool operator==(const StageCost& o) const {
    return q_weight == o.q_weight && r_weight == o.r_weight && x_sp == o.x_sp && u_sp == o.u_sp;
  }
};

/// A learned terminal cost theta^T phi(x).
struct LearnedModel {
  Basis basis;
  ThetaVec theta;
};

/// Terminal cost V(x): zero, |x - x_sp|^2, or a learned model.
class TerminalCost {
 public:
  enum class Kind { zero, quadratic, learned };

  static TerminalCost zero();
  static TerminalCost quadratic(StateVec x_sp);
  static TerminalCost learned(std::shared_ptr<const LearnedModel> model);

  Kind kind() const { return kind_; }
  const LearnedModel* model() const { return model_.get(); }
  const StateVec& x_sp() const { return x_sp_; }

  double value(const StateVec& x) const;
  StateVec gradient(const StateVec& x) const;
  /// Value with gradient written to grad (state-dimension entries).
  double value_and_gradient(const double* x, int n, double* grad) const;

 private:
  Kind kind_ = Kind::zero;
  StateVec x_sp_;
  std::shared_ptr<const LearnedModel> model_;
};

std::string to_string(TerminalCost::Kind k);

enum class SolveStatus { converged, max_iters, numeric_error };
std::string to_string(SolveStatus s);
SolveStatus solve_status_from_string(const std::string& s);

struct OcpSpec {
  int horizon = 1;
  StageCost stage;
  TerminalCost terminal = TerminalCost::zero();
  Bounds bounds = Bounds::cstr_default();
  SimGrid grid;
  ModelParams params;
  /// Quadratic penalty weight on state-box excess of x_1..x_N (0 disables).
  double soft_state_weight = 1e4;
  double solver_tol = 1e-8;
  int max_iters = 500;
  /// Equispaced input candidates tried before local refinement when N = 1.
  int multistart_grid = 21;
  /// Gain K of the cold-start feedback rollout u = u_sp + K (x - x_sp),
  /// tried against the box midpoint when N > 1. All-zero disables it.
  Eigen::VectorXd init_feedback_gain = Eigen::Vector2d(0.0, 15.0);

  void validate() const;
  int num_vars() const { return horizon * bounds.input_dim(); }
};

/// Expert long-horizon configuration: N = T, quadratic terminal cost.
OcpSpec expert_spec(int horizon = 50);

/// Short-horizon configuration with a learned terminal cost.
OcpSpec proposed_spec(std::shared_ptr<const LearnedModel> model, int horizon = 1);

struct OcpSolution {
  Eigen::VectorXd u_seq;  // N*m, stacked
  std::vector<StateVec> x_seq;
  double value = 0.0;
  double stationarity = 0.0;
  int iters = 0;
  double solve_time = 0.0;  // seconds
  SolveStatus status = SolveStatus::numeric_error;

  InputVec input(int k, int m) const { return u_seq.segment(static_cast<Eigen::Index>(k) * m, m); }
};

/// Objective (stage + terminal + soft penalty) and its adjoint gradient with
/// respect to the stacked input sequence.
struct ObjectiveEval {
  double value = 0.0;
  Eigen::VectorXd grad;
};

/// Finite-horizon single-shooting OCP. Owns a mutable workspace, so use one
/// instance per thread.
class OcpSolver {
 public:
  explicit OcpSolver(OcpSpec spec);

  const OcpSpec& spec() const { return spec_; }

  double objective(const StateVec& x0, const Eigen::VectorXd& u_seq);
  ObjectiveEval objective_and_gradient(const StateVec& x0, const Eigen::VectorXd& u_seq);

  /// Control-limited iLQR followed by a projected Newton polish with the
  /// exact Hessian; a multistart grid replaces the iLQR phase when N = 1.
  /// Never throws on numeric trouble; reports it through status instead.
  OcpSolution solve(const StateVec& x0, const std::optional<Eigen::VectorXd>& warm_start = {});

 private:
  double forward(const double* x0, const double* u);
  double forward_backward(const double* x0, const double* u, double* grad);
  void hessian(const double* u, Eigen::MatrixXd& hess);
  double ilqr(const StateVec& x0, Eigen::VectorXd& u, int* evals, int* iters);
  double stationarity_tol(double f) const;
  Eigen::VectorXd feedback_guess(const StateVec& x0) const;
  OcpSolution local_solve(const StateVec& x0, Eigen::VectorXd u, int* evals);
  Eigen::VectorXd project(Eigen::VectorXd u) const;
  double projected_gradient_norm(const Eigen::VectorXd& u, const Eigen::VectorXd& g) const;

  OcpSpec spec_;
  std::vector<double> traj_;     // substep states, (N*substeps + 1) x n
  std::vector<double> costate_;  // adjoint of each substep's successor state
};

ObjectiveEval objective_and_gradient(const OcpSpec& spec, const StateVec& x0,
                                     const Eigen::VectorXd& u_seq);
OcpSolution solve_ocp(const OcpSpec& spec, const StateVec& x0,
                      const std::optional<Eigen::VectorXd>& warm_start = {});

struct MpcStep {
  InputVec u0;
  double value = 0.0;
  OcpSolution diag;
};

MpcStep mpc_step(OcpSolver& solver, const StateVec& x0,
                 const std::optional<Eigen::VectorXd>& warm = {});
MpcStep mpc_step(const OcpSpec& spec, const StateVec& x0,
                 const std::optional<Eigen::VectorXd>& warm = {});

/// Drop the first input and repeat the last one.
Eigen::VectorXd shift_warm_start(const Eigen::VectorXd& u_seq, int m);

}  // namespace vfsynth
