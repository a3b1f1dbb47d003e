#include "vfsynth/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <omp.h>

#include "vfsynth/error.hpp"
#include "vfsynth/parallel.hpp"

namespace vfsynth {

int resolve_jobs(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("VFSYNTH_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1, omp_get_max_threads());
}

double QpProblem::objective(const Eigen::VectorXd& theta) const {
  return 0.5 * theta.dot(hessian * theta) + linear.dot(theta) + const_term;
}

namespace {

struct Rows {
  Eigen::MatrixXd phi;   // M x d
  Eigen::MatrixXd desc;  // M x d
  Eigen::VectorXd rhs;   // M
};

void check_inputs(const std::vector<DemoTuple>& data, const Basis& basis) {
  if (data.empty()) throw DimensionError("assemble_qp: dataset is empty");
  if (basis.size() < 1) throw BasisError("assemble_qp: basis is empty");
  for (const auto& t : data) {
    if (t.x.size() != basis.state_dim || t.u.size() != kCstrInputDim) {
      throw DimensionError("assemble_qp: sample dimension does not match the basis");
    }
  }
}

void fill_row(const DemoTuple& t, const Basis& basis, const StageCost& stage, const SimGrid& grid,
              const ModelParams& params, Rows& rows, Eigen::Index i, Eigen::VectorXd& fx,
              Eigen::VectorXd& fp) {
  const StateVec xp = hold_step(t.x, t.u, grid, params);
  features_into(basis, t.x.data(), fx.data());
  features_into(basis, xp.data(), fp.data());
  if (!fx.allFinite() || !fp.allFinite()) throw NumericDomainError("non-finite features in QP assembly");
  rows.phi.row(i) = fx.transpose();
  rows.desc.row(i) = (fp - fx).transpose();
  rows.rhs[i] = -stage(t.x, t.u);
}

Rows build_rows_serial(const std::vector<DemoTuple>& data, const Basis& basis, const StageCost& stage,
                       const SimGrid& grid, const ModelParams& params) {
  const Eigen::Index M = static_cast<Eigen::Index>(data.size());
  const int d = basis.size();
  Rows rows{Eigen::MatrixXd(M, d), Eigen::MatrixXd(M, d), Eigen::VectorXd(M)};
  Eigen::VectorXd fx(d), fp(d);
  for (Eigen::Index i = 0; i < M; ++i) {
    fill_row(data[static_cast<std::size_t>(i)], basis, stage, grid, params, rows, i, fx, fp);
  }
  return rows;
}

Rows build_rows_parallel(const std::vector<DemoTuple>& data, const Basis& basis,
                         const StageCost& stage, const SimGrid& grid, const ModelParams& params,
                         int jobs) {
  const Eigen::Index M = static_cast<Eigen::Index>(data.size());
  const int d = basis.size();
  Rows rows{Eigen::MatrixXd(M, d), Eigen::MatrixXd(M, d), Eigen::VectorXd(M)};
  std::exception_ptr err;
#pragma omp parallel num_threads(jobs)
  {
    Eigen::VectorXd fx(d), fp(d);
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < M; ++i) {
      try {
        fill_row(data[static_cast<std::size_t>(i)], basis, stage, grid, params, rows, i, fx, fp);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
  return rows;
}

QpProblem finish(Rows rows, const std::vector<DemoTuple>& data, double lambda, SynthesisFlags flags) {
  if (!(lambda >= 0.0)) throw DomainError("regularization must be nonnegative");
  const Eigen::Index M = rows.phi.rows();
  const Eigen::Index d = rows.phi.cols();
  QpProblem qp;
  qp.reg = lambda;
  qp.targets.resize(M);
  for (Eigen::Index i = 0; i < M; ++i) qp.targets[i] = data[static_cast<std::size_t>(i)].j_value;
  const double inv_m = 1.0 / static_cast<double>(M);
  qp.hessian = 2.0 * inv_m * (rows.phi.transpose() * rows.phi);
  qp.hessian.diagonal().array() += 2.0 * lambda;
  qp.hessian = 0.5 * (qp.hessian + qp.hessian.transpose()).eval();
  qp.linear = -2.0 * inv_m * (rows.phi.transpose() * qp.targets);
  qp.const_term = inv_m * qp.targets.squaredNorm();

  const Eigen::Index nrows = (flags.descent ? M : 0) + (flags.nonneg ? M : 0);
  qp.constraint_matrix.resize(nrows, d);
  qp.constraint_rhs.resize(nrows);
  Eigen::Index r = 0;
  if (flags.descent) {
    qp.constraint_matrix.topRows(M) = rows.desc;
    qp.constraint_rhs.head(M) = rows.rhs;
    for (Eigen::Index i = 0; i < M; ++i) qp.row_sample.push_back(static_cast<int>(i));
    r = M;
  }
  if (flags.nonneg) {
    qp.constraint_matrix.middleRows(r, M) = -rows.phi;
    qp.constraint_rhs.segment(r, M).setZero();
    for (Eigen::Index i = 0; i < M; ++i) qp.row_sample.push_back(static_cast<int>(i));
  }
  qp.phi = std::move(rows.phi);
  qp.descent_matrix = std::move(rows.desc);
  qp.descent_rhs = std::move(rows.rhs);
  return qp;
}

}  // namespace

QpProblem assemble_qp(const std::vector<DemoTuple>& data, const Basis& basis, const StageCost& stage,
                      const SimGrid& grid, const ModelParams& params, double lambda,
                      SynthesisFlags flags, int jobs) {
  check_inputs(data, basis);
  jobs = resolve_jobs(jobs);
  Rows rows = jobs > 1 ? build_rows_parallel(data, basis, stage, grid, params, jobs)
                       : build_rows_serial(data, basis, stage, grid, params);
  return finish(std::move(rows), data, lambda, flags);
}

QpProblem assemble_qp_serial(const std::vector<DemoTuple>& data, const Basis& basis,
                             const StageCost& stage, const SimGrid& grid, const ModelParams& params,
                             double lambda, SynthesisFlags flags) {
  check_inputs(data, basis);
  return finish(build_rows_serial(data, basis, stage, grid, params), data, lambda, flags);
}

namespace {

struct Kkt {
  double stationarity = 0.0;
  double complementarity = 0.0;
  double max_residual = -std::numeric_limits<double>::infinity();
  double dual_min = 0.0;
};

Kkt kkt_residuals(const QpProblem& qp, const Eigen::VectorXd& theta, const Eigen::VectorXd& mu) {
  Kkt k;
  Eigen::VectorXd st = qp.hessian * theta + qp.linear;
  if (qp.constraint_matrix.rows() > 0) st += qp.constraint_matrix.transpose() * mu;
  k.stationarity = st.lpNorm<Eigen::Infinity>();
  for (Eigen::Index i = 0; i < qp.constraint_matrix.rows(); ++i) {
    const double res = qp.constraint_matrix.row(i).dot(theta) - qp.constraint_rhs[i];
    k.max_residual = std::max(k.max_residual, res);
    k.complementarity = std::max(k.complementarity, std::abs(mu[i] * res));
    k.dual_min = std::min(k.dual_min, mu[i]);
  }
  return k;
}

// Re-solves the equality-constrained problem on the active set for a more
// accurate primal-dual pair.
bool polish(const QpProblem& qp, const std::vector<int>& active, Eigen::VectorXd& theta,
            Eigen::VectorXd& mu) {
  const Eigen::Index d = qp.hessian.rows();
  const Eigen::Index q = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(d + q, d + q);
  Eigen::VectorXd rhs(d + q);
  K.topLeftCorner(d, d) = qp.hessian;
  rhs.head(d) = -qp.linear;
  for (Eigen::Index j = 0; j < q; ++j) {
    const auto row = qp.constraint_matrix.row(active[static_cast<std::size_t>(j)]);
    K.block(0, d + j, d, 1) = row.transpose();
    K.block(d + j, 0, 1, d) = row;
    rhs[d + j] = qp.constraint_rhs[active[static_cast<std::size_t>(j)]];
  }
  const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
  if (!sol.allFinite()) return false;
  Eigen::VectorXd new_mu = Eigen::VectorXd::Zero(mu.size());
  for (Eigen::Index j = 0; j < q; ++j) {
    if (sol[d + j] < 0.0) return false;
    new_mu[active[static_cast<std::size_t>(j)]] = sol[d + j];
  }
  theta = sol.head(d);
  mu = new_mu;
  return true;
}

}  // namespace

SynthesisResult solve_qp(const QpProblem& qp, const SolveQpOptions& opts) {
  QpOptions qo;
  qo.max_iters = opts.max_iters;
  qo.selection = opts.selection;
  const QpSolution s = solve_dense_qp(qp.hessian, qp.linear, qp.constraint_matrix, qp.constraint_rhs, qo);

  SynthesisResult res;
  res.theta = s.x;
  res.mu = s.mu;
  res.iters = s.iters;
  res.active_count = static_cast<int>(s.active.size());
  res.status = s.status;

  if (s.status == QpStatus::optimal) {
    Kkt k = kkt_residuals(qp, res.theta, res.mu);
    if (k.stationarity > opts.kkt_tol || k.complementarity > opts.kkt_tol || k.max_residual > opts.feas_tol) {
      Eigen::VectorXd th = res.theta, mu = res.mu;
      if (polish(qp, s.active, th, mu)) {
        const Kkt k2 = kkt_residuals(qp, th, mu);
        if (std::max({k2.stationarity, k2.complementarity, k2.max_residual}) <
            std::max({k.stationarity, k.complementarity, k.max_residual})) {
          res.theta = th;
          res.mu = mu;
          k = k2;
        }
      }
    }
    res.kkt_stationarity = k.stationarity;
    res.kkt_complementarity = k.complementarity;
    res.dual_min = k.dual_min;
    if (k.stationarity > opts.kkt_tol || k.complementarity > opts.kkt_tol ||
        k.max_residual > opts.feas_tol || k.dual_min < -1e-12) {
      res.status = QpStatus::max_iters;
      res.message = "KKT certification failed";
    }
  } else if (s.status == QpStatus::infeasible) {
    // Diagnose at the unconstrained ridge solution.
    const Eigen::VectorXd ridge = qp.hessian.llt().solve(-qp.linear);
    std::vector<RowResidual> all;
    for (Eigen::Index i = 0; i < qp.constraint_matrix.rows(); ++i) {
      const double r = qp.constraint_matrix.row(i).dot(ridge) - qp.constraint_rhs[i];
      all.push_back({static_cast<int>(i), qp.row_sample[static_cast<std::size_t>(i)], r});
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const RowResidual& a, const RowResidual& b) { return a.residual > b.residual; });
    if (all.size() > 10) all.resize(10);
    res.worst_rows = all;
    res.message = "scenario QP is infeasible; the basis cannot satisfy every descent row. Worst samples:";
    for (const auto& w : res.worst_rows) res.message += " " + std::to_string(w.sample);
  } else {
    res.message = "QP iteration limit reached";
  }

  const Eigen::VectorXd err = qp.phi * res.theta - qp.targets;
  res.training_mse = err.squaredNorm() / static_cast<double>(qp.phi.rows());
  res.max_descent_residual = (qp.descent_matrix * res.theta - qp.descent_rhs).maxCoeff();
  res.max_constraint_residual =
      qp.constraint_matrix.rows() > 0
          ? (qp.constraint_matrix * res.theta - qp.constraint_rhs).maxCoeff()
          : 0.0;
  return res;
}

}  // namespace vfsynth
