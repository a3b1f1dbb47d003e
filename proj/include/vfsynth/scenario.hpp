#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "vfsynth/dataset.hpp"
#include "vfsynth/ocp.hpp"
#include "vfsynth/qp_solver.hpp"
#include "vfsynth/value_function.hpp"

namespace vfsynth {

struct SynthesisFlags {
  /// Descent rows theta'(phi(x+) - phi(x)) <= -l(x, u).
  bool descent = true;
  /// Sample-wise nonnegativity rows -phi(x)'theta <= 0.
  bool nonneg = false;
};

/// min 0.5 theta'H theta + g'theta + const subject to A theta <= b, which
/// equals (1/M) |Phi theta - J|^2 + lambda |theta|^2.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd constraint_matrix;
  Eigen::VectorXd constraint_rhs;
  double reg = 0.0;
  double const_term = 0.0;
  /// Feature matrix Phi (M x d) and targets J, kept for the training MSE.
  Eigen::MatrixXd phi;
  Eigen::VectorXd targets;
  /// Descent rows and right-hand sides, assembled even when not imposed.
  Eigen::MatrixXd descent_matrix;
  Eigen::VectorXd descent_rhs;
  /// Sample index of each constraint row.
  std::vector<int> row_sample;

  double objective(const Eigen::VectorXd& theta) const;
};

QpProblem assemble_qp(const std::vector<DemoTuple>& data, const Basis& basis, const StageCost& stage,
                      const SimGrid& grid, const ModelParams& params, double lambda,
                      SynthesisFlags flags = {}, int jobs = 1);
/// Single-threaded reference for assemble_qp.
QpProblem assemble_qp_serial(const std::vector<DemoTuple>& data, const Basis& basis,
                             const StageCost& stage, const SimGrid& grid, const ModelParams& params,
                             double lambda, SynthesisFlags flags = {});

struct SolveQpOptions {
  double feas_tol = 1e-8;
  double kkt_tol = 1e-6;
  int max_iters = 20000;
  QpSelection selection = QpSelection::most_violated;
};

struct RowResidual {
  int row = 0;
  int sample = 0;
  double residual = 0.0;
};

struct SynthesisResult {
  ThetaVec theta;
  Eigen::VectorXd mu;
  double training_mse = 0.0;
  /// Largest residual a_i'theta - b_i over the imposed rows (0 without rows).
  double max_constraint_residual = 0.0;
  /// Largest descent-row residual, whether or not the rows were imposed.
  double max_descent_residual = 0.0;
  double kkt_stationarity = 0.0;
  double kkt_complementarity = 0.0;
  double dual_min = 0.0;
  int active_count = 0;
  int iters = 0;
  QpStatus status = QpStatus::max_iters;
  /// On infeasibility: the ten worst rows at the unconstrained ridge solution.
  std::vector<RowResidual> worst_rows;
  std::string message;
};

SynthesisResult solve_qp(const QpProblem& qp, const SolveQpOptions& opts = {});

struct ScenarioCertificate {
  double eps = 0.2;
  double beta = 1e-10;
  long m_samples = 0;
  long dim = 0;

  bool valid() const;
};

/// sum_{i=0}^{d-1} C(M, i) eps^i (1 - eps)^(M - i), evaluated in the log domain.
double beta_bound(double eps, long m_samples, long dim);
/// Smallest M with beta_bound(eps, M, dim) <= beta.
long min_samples(double eps, double beta, long dim);

}  // namespace vfsynth
