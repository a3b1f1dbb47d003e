#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace vfsynth {

enum class QpStatus { optimal, infeasible, max_iters };
std::string to_string(QpStatus s);
QpStatus qp_status_from_string(const std::string& s);

/// Which violated constraint enters the active set next.
enum class QpSelection { most_violated, first_violated };

struct QpOptions {
  int max_iters = 10000;
  QpSelection selection = QpSelection::most_violated;
  /// A constraint counts as violated when its normalized residual exceeds this.
  double add_tol = 1e-12;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd mu;  // one multiplier per row of A, zero when inactive
  std::vector<int> active;
  QpStatus status = QpStatus::max_iters;
  int iters = 0;
};

/// Dense strictly convex QP: min 0.5 x'Hx + g'x subject to A x <= b.
/// Goldfarb-Idnani dual active-set method: starts from the unconstrained
/// minimizer and adds violated constraints while keeping dual feasibility,
/// so every iterate is optimal for the constraints added so far. Rows are
/// scaled to unit norm internally; all-zero rows are checked for consistency
/// and skipped. H must be positive definite.
QpSolution solve_dense_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                          const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                          const QpOptions& opts = {});

}  // namespace vfsynth
