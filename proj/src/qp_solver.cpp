#include "vfsynth/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "vfsynth/error.hpp"

namespace vfsynth {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal:
      return "optimal";
    case QpStatus::infeasible:
      return "infeasible";
    case QpStatus::max_iters:
      return "max_iters";
  }
  return "unknown";
}

QpStatus qp_status_from_string(const std::string& s) {
  if (s == "optimal") return QpStatus::optimal;
  if (s == "infeasible") return QpStatus::infeasible;
  if (s == "max_iters") return QpStatus::max_iters;
  throw FormatError("unknown QP status '" + s + "'");
}

QpSolution solve_dense_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
                          const Eigen::MatrixXd& A, const Eigen::VectorXd& b,
                          const QpOptions& opts) {
  const Eigen::Index n = g.size();
  const Eigen::Index m = A.rows();
  if (H.rows() != n || H.cols() != n) throw DimensionError("QP: Hessian size mismatch");
  if (m > 0 && A.cols() != n) throw DimensionError("QP: constraint matrix column mismatch");
  if (b.size() != m) throw DimensionError("QP: right-hand side length mismatch");

  QpSolution sol;
  sol.mu = Eigen::VectorXd::Zero(m);
  Eigen::LLT<Eigen::MatrixXd> llt(H);
  if (llt.info() != Eigen::Success) throw DomainError("QP: Hessian is not positive definite");

  // Internal form: N^T x >= c with unit-norm columns n_i = -a_i / |a_i|.
  Eigen::VectorXd norms = A.rowwise().norm();
  const double max_norm = m > 0 ? norms.maxCoeff() : 0.0;
  std::vector<char> usable(m, 0);
  Eigen::MatrixXd N(n, m);
  Eigen::VectorXd c(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    if (norms[i] > 1e-14 * max_norm && norms[i] > 0.0) {
      usable[i] = 1;
      N.col(i) = -A.row(i).transpose() / norms[i];
      c[i] = -b[i] / norms[i];
    } else if (b[i] < -opts.add_tol) {
      // 0 <= b_i cannot hold for a zero row
      sol.x = -llt.solve(g);
      sol.status = QpStatus::infeasible;
      return sol;
    }
  }

  // J0 = L^{-T}, so that H^{-1} = J0 J0^T.
  const Eigen::MatrixXd L = llt.matrixL();
  const Eigen::MatrixXd J0 =
      L.transpose().triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(n, n));

  Eigen::VectorXd x = -llt.solve(g);
  std::vector<int> W;   // active constraint indices
  std::vector<double> u;  // their multipliers (internal scaling)
  std::vector<char> in_w(m, 0);

  auto select = [&]() -> int {
    int p = -1;
    double worst = -opts.add_tol;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!usable[i] || in_w[i]) continue;
      const double s = N.col(i).dot(x) - c[i];
      if (s < worst) {
        p = static_cast<int>(i);
        if (opts.selection == QpSelection::first_violated) break;
        worst = s;
      }
    }
    return p;
  };

  auto drop = [&](std::size_t pos) {
    in_w[W[pos]] = 0;
    W.erase(W.begin() + static_cast<std::ptrdiff_t>(pos));
    u.erase(u.begin() + static_cast<std::ptrdiff_t>(pos));
  };

  const double inf = std::numeric_limits<double>::infinity();
  int iters = 0;
  sol.status = QpStatus::max_iters;
  while (iters < opts.max_iters) {
    const int p = select();
    if (p < 0) {
      sol.status = QpStatus::optimal;
      break;
    }
    double up = 0.0;
    bool added = false;
    while (!added && iters < opts.max_iters) {
      ++iters;
      const Eigen::Index q = static_cast<Eigen::Index>(W.size());
      // Factor J0^T N_W = Q [R; 0]; then J = J0 Q splits into range and null parts.
      Eigen::MatrixXd J = J0;
      Eigen::MatrixXd R;
      if (q > 0) {
        Eigen::MatrixXd NW(n, q);
        for (Eigen::Index j = 0; j < q; ++j) NW.col(j) = N.col(W[j]);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(J0.transpose() * NW);
        J = J0 * qr.householderQ();
        R = qr.matrixQR().topLeftCorner(q, q).triangularView<Eigen::Upper>();
      }
      const Eigen::VectorXd np = N.col(p);
      const Eigen::VectorXd d = J.transpose() * np;
      const Eigen::VectorXd z = J.rightCols(n - q) * d.tail(n - q);
      Eigen::VectorXd r;
      if (q > 0) r = R.triangularView<Eigen::Upper>().solve(d.head(q));

      // Largest dual step keeping active multipliers nonnegative.
      double t1 = inf;
      std::size_t l = 0;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (r[j] > 0.0) {
          const double ratio = u[j] / r[j];
          if (ratio < t1) {
            t1 = ratio;
            l = static_cast<std::size_t>(j);
          }
        }
      }
      // Primal step that makes constraint p active.
      const double zn = z.dot(np);
      const bool dependent = !(zn > 1e-14 * d.squaredNorm());
      const double t2 = dependent ? inf : -(np.dot(x) - c[p]) / zn;
      const double t = std::min(t1, t2);
      if (t == inf) {
        sol.status = QpStatus::infeasible;
        sol.x = x;
        sol.iters = iters;
        return sol;
      }
      if (!dependent) x += t * z;
      for (Eigen::Index j = 0; j < q; ++j) u[j] -= t * r[j];
      up += t;
      if (t2 <= t1) {
        W.push_back(p);
        u.push_back(up);
        in_w[p] = 1;
        added = true;
      } else {
        drop(l);
      }
    }
    if (!added) break;
  }

  sol.x = x;
  sol.iters = iters;
  sol.active = W;
  for (std::size_t j = 0; j < W.size(); ++j) sol.mu[W[j]] = std::max(u[j], 0.0) / norms[W[j]];
  std::sort(sol.active.begin(), sol.active.end());
  return sol;
}

}  // namespace vfsynth
