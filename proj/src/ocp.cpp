#include "vfsynth/ocp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "vfsynth/error.hpp"

namespace vfsynth {

double StageCost::eval(const double* x, const double* u) const {
  double c = 0.0;
  for (Eigen::Index i = 0; i < x_sp.size(); ++i) {
    const double e = x[i] - x_sp[i];
    c += q_weight[i] * e * e;
  }
  for (Eigen::Index j = 0; j < u_sp.size(); ++j) {
    const double e = u[j] - u_sp[j];
    c += r_weight[j] * e * e;
  }
  return c;
}

double StageCost::operator()(const StateVec& x, const InputVec& u) const {
  if (x.size() != x_sp.size() || u.size() != u_sp.size()) {
    throw DimensionError("stage cost dimension mismatch");
  }
  return eval(x.data(), u.data());
}

void StageCost::validate() const {
  if (q_weight.size() != x_sp.size() || r_weight.size() != u_sp.size()) {
    throw DimensionError("stage cost weights do not match setpoint dimensions");
  }
  if ((q_weight.array() < 0.0).any() || (r_weight.array() < 0.0).any()) {
    throw DomainError("stage cost weights must be nonnegative");
  }
}

TerminalCost TerminalCost::zero() { return TerminalCost{}; }

TerminalCost TerminalCost::quadratic(StateVec x_sp) {
  TerminalCost t;
  t.kind_ = Kind::quadratic;
  t.x_sp_ = std::move(x_sp);
  return t;
}

TerminalCost TerminalCost::learned(std::shared_ptr<const LearnedModel> model) {
  if (!model) throw DomainError("learned terminal cost needs a model");
  if (model->theta.size() != model->basis.size()) {
    throw DimensionError("learned model theta does not match basis size");
  }
  TerminalCost t;
  t.kind_ = Kind::learned;
  t.model_ = std::move(model);
  return t;
}

double TerminalCost::value_and_gradient(const double* x, int n, double* grad) const {
  switch (kind_) {
    case Kind::zero:
      std::fill(grad, grad + n, 0.0);
      return 0.0;
    case Kind::quadratic: {
      double v = 0.0;
      for (int i = 0; i < n; ++i) {
        const double e = x[i] - x_sp_[i];
        v += e * e;
        grad[i] = 2.0 * e;
      }
      return v;
    }
    case Kind::learned:
      return evaluate_with_gradient(model_->basis, model_->theta, x, grad);
  }
  return 0.0;
}

double TerminalCost::value(const StateVec& x) const {
  StateVec g(x.size());
  return value_and_gradient(x.data(), static_cast<int>(x.size()), g.data());
}

StateVec TerminalCost::gradient(const StateVec& x) const {
  StateVec g(x.size());
  value_and_gradient(x.data(), static_cast<int>(x.size()), g.data());
  return g;
}

std::string to_string(TerminalCost::Kind k) {
  switch (k) {
    case TerminalCost::Kind::zero:
      return "zero";
    case TerminalCost::Kind::quadratic:
      return "quadratic";
    case TerminalCost::Kind::learned:
      return "learned";
  }
  return "?";
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged:
      return "converged";
    case SolveStatus::max_iters:
      return "max_iters";
    case SolveStatus::numeric_error:
      return "numeric_error";
  }
  return "?";
}

SolveStatus solve_status_from_string(const std::string& s) {
  if (s == "converged") return SolveStatus::converged;
  if (s == "max_iters") return SolveStatus::max_iters;
  if (s == "numeric_error") return SolveStatus::numeric_error;
  throw FormatError("unknown solver status '" + s + "'");
}

void OcpSpec::validate() const {
  if (horizon < 1) throw DomainError("OCP horizon must be >= 1");
  if (!(soft_state_weight >= 0.0)) throw DomainError("soft_state_weight must be >= 0");
  if (!(solver_tol > 0.0)) throw DomainError("solver_tol must be > 0");
  if (max_iters < 0) throw DomainError("max_iters must be >= 0");
  if (multistart_grid < 1) throw DomainError("multistart_grid must be >= 1");
  bounds.validate();
  grid.validate();
  params.validate();
  stage.validate();
  if (bounds.state_dim() != kCstrStateDim || bounds.input_dim() != kCstrInputDim) {
    throw DimensionError("the OCP solver is instantiated for the 2-state, 1-input CSTR");
  }
  if (stage.x_sp.size() != bounds.state_dim() || stage.u_sp.size() != bounds.input_dim()) {
    throw DimensionError("stage cost and bounds disagree on dimensions");
  }
  if (terminal.kind() == TerminalCost::Kind::learned &&
      terminal.model()->basis.state_dim != bounds.state_dim()) {
    throw DimensionError("learned terminal cost has the wrong state dimension");
  }
}

OcpSpec expert_spec(int horizon) {
  OcpSpec s;
  s.horizon = horizon;
  s.terminal = TerminalCost::quadratic(s.stage.x_sp);
  return s;
}

OcpSpec proposed_spec(std::shared_ptr<const LearnedModel> model, int horizon) {
  OcpSpec s;
  s.horizon = horizon;
  s.terminal = TerminalCost::learned(std::move(model));
  return s;
}

OcpSolver::OcpSolver(OcpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  traj_.resize(static_cast<std::size_t>(spec_.horizon * spec_.grid.substeps + 1) * kCstrStateDim);
  costate_.resize(static_cast<std::size_t>(spec_.horizon * spec_.grid.substeps) * kCstrStateDim);
}

namespace {

constexpr double kPenaltyCurvatureMargin = 1e-3;

// Adds rho * |excess(x)|^2 and optionally its gradient.
double soft_penalty(const Bounds& b, double rho, const double* x, double* grad) {
  if (rho == 0.0) return 0.0;
  double p = 0.0;
  for (int i = 0; i < kCstrStateDim; ++i) {
    double e = 0.0;
    if (x[i] < b.x_lo[i]) e = x[i] - b.x_lo[i];
    if (x[i] > b.x_hi[i]) e = x[i] - b.x_hi[i];
    p += e * e;
    if (grad) grad[i] += 2.0 * rho * e;
  }
  return rho * p;
}

// Projected-stationarity threshold, relative to the objective scale so that
// penalty-dominated problems are not held to an unrepresentable tolerance.
}  // namespace

double OcpSolver::stationarity_tol(double f) const {
  return spec_.solver_tol * std::max(1.0, std::abs(f));
}

namespace {

Eigen::Matrix2d learned_state_hessian(const LearnedModel& m, const double* x) {
  return state_hessian(m.basis, m.theta, x);
}

}  // namespace

double OcpSolver::forward(const double* x0, const double* u) {
  const int n = kCstrStateDim;
  const int S = spec_.grid.substeps;
  const double h = spec_.grid.h;
  double* z = traj_.data();
  z[0] = x0[0];
  z[1] = x0[1];
  double cost = 0.0;
  double dz[2];
  for (int k = 0; k < spec_.horizon; ++k) {
    const double* xk = traj_.data() + static_cast<std::size_t>(k) * S * n;
    cost += spec_.stage.eval(xk, u + k);
    if (k > 0) cost += soft_penalty(spec_.bounds, spec_.soft_state_weight, xk, nullptr);
    for (int s = 0; s < S; ++s) {
      cstr::derivative(z, u[k], spec_.params, dz);
      z[2] = z[0] + h * dz[0];
      z[3] = z[1] + h * dz[1];
      z += n;
    }
  }
  const double* xN = traj_.data() + static_cast<std::size_t>(spec_.horizon) * S * n;
  cost += soft_penalty(spec_.bounds, spec_.soft_state_weight, xN, nullptr);
  double tg[2];
  cost += spec_.terminal.value_and_gradient(xN, n, tg);
  return std::isfinite(cost) ? cost : std::numeric_limits<double>::quiet_NaN();
}

double OcpSolver::forward_backward(const double* x0, const double* u, double* grad) {
  const double cost = forward(x0, u);
  if (!std::isfinite(cost)) return cost;
  const int n = kCstrStateDim;
  const int S = spec_.grid.substeps;
  const double h = spec_.grid.h;
  const double rho = spec_.soft_state_weight;
  const double* xN = traj_.data() + static_cast<std::size_t>(spec_.horizon) * S * n;

  double lam[2];
  spec_.terminal.value_and_gradient(xN, n, lam);
  soft_penalty(spec_.bounds, rho, xN, lam);

  double jx[4], ju[2];
  for (int k = spec_.horizon - 1; k >= 0; --k) {
    double gu = 0.0;
    for (int s = S - 1; s >= 0; --s) {
      const std::size_t idx = static_cast<std::size_t>(k) * S + s;
      const double* z = traj_.data() + idx * n;
      double* lam_store = costate_.data() + idx * n;
      lam_store[0] = lam[0];
      lam_store[1] = lam[1];
      cstr::jacobians(z, u[k], spec_.params, jx, ju);
      gu += h * (ju[0] * lam[0] + ju[1] * lam[1]);
      const double l0 = lam[0] + h * (jx[0] * lam[0] + jx[2] * lam[1]);
      const double l1 = lam[1] + h * (jx[1] * lam[0] + jx[3] * lam[1]);
      lam[0] = l0;
      lam[1] = l1;
    }
    grad[k] = gu + 2.0 * spec_.stage.r_weight[0] * (u[k] - spec_.stage.u_sp[0]);
    const double* xk = traj_.data() + static_cast<std::size_t>(k) * S * n;
    for (int i = 0; i < n; ++i) lam[i] += 2.0 * spec_.stage.q_weight[i] * (xk[i] - spec_.stage.x_sp[i]);
    if (k > 0) soft_penalty(spec_.bounds, rho, xk, lam);
  }
  for (int k = 0; k < spec_.horizon; ++k) {
    if (!std::isfinite(grad[k])) return std::numeric_limits<double>::quiet_NaN();
  }
  return cost;
}

double OcpSolver::objective(const StateVec& x0, const Eigen::VectorXd& u_seq) {
  if (x0.size() != kCstrStateDim || u_seq.size() != spec_.num_vars()) {
    throw DimensionError("objective: dimension mismatch");
  }
  const double v = forward(x0.data(), u_seq.data());
  if (!std::isfinite(v)) throw NumericDomainError("non-finite OCP objective");
  return v;
}

ObjectiveEval OcpSolver::objective_and_gradient(const StateVec& x0, const Eigen::VectorXd& u_seq) {
  if (x0.size() != kCstrStateDim || u_seq.size() != spec_.num_vars()) {
    throw DimensionError("objective_and_gradient: dimension mismatch");
  }
  ObjectiveEval e;
  e.grad.resize(spec_.num_vars());
  e.value = forward_backward(x0.data(), u_seq.data(), e.grad.data());
  if (!std::isfinite(e.value)) throw NumericDomainError("non-finite OCP objective or gradient");
  return e;
}

Eigen::VectorXd OcpSolver::feedback_guess(const StateVec& x0) const {
  const int S = spec_.grid.substeps;
  const double h = spec_.grid.h;
  const double lo = spec_.bounds.u_lo[0];
  const double hi = spec_.bounds.u_hi[0];
  Eigen::VectorXd u(spec_.num_vars());
  double z[2] = {x0[0], x0[1]};
  double dz[2];
  for (int k = 0; k < spec_.horizon; ++k) {
    double uk = spec_.stage.u_sp[0];
    for (int i = 0; i < kCstrStateDim; ++i) {
      uk += spec_.init_feedback_gain[i] * (z[i] - spec_.stage.x_sp[i]);
    }
    u[k] = std::isfinite(uk) ? std::clamp(uk, lo, hi) : 0.5 * (lo + hi);
    for (int s = 0; s < S; ++s) {
      cstr::derivative(z, u[k], spec_.params, dz);
      z[0] += h * dz[0];
      z[1] += h * dz[1];
    }
  }
  return u;
}

Eigen::VectorXd OcpSolver::project(Eigen::VectorXd u) const {
  const double lo = spec_.bounds.u_lo[0];
  const double hi = spec_.bounds.u_hi[0];
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = std::clamp(u[i], lo, hi);
  return u;
}

double OcpSolver::projected_gradient_norm(const Eigen::VectorXd& u,
                                          const Eigen::VectorXd& g) const {
  return (project(u - g) - u).lpNorm<Eigen::Infinity>();
}

void OcpSolver::hessian(const double* u, Eigen::MatrixXd& hess) {
  // Exact Hessian by forward sensitivities: the Gauss-Newton part from the
  // quadratic cost terms plus the costate-weighted curvature of the dynamics.
  // traj_ and costate_ must correspond to u (last call forward_backward at u).
  const int n = kCstrStateDim;
  const int N = spec_.horizon;
  const int S = spec_.grid.substeps;
  const double h = spec_.grid.h;
  const double rho = spec_.soft_state_weight;
  hess.setZero(N, N);
  Eigen::Matrix<double, 2, Eigen::Dynamic> sens = Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, N);
  double jx[4], ju[2], m[3];

  for (int k = 0; k <= N; ++k) {
    const double* xk = traj_.data() + static_cast<std::size_t>(k) * S * n;
    if (k > 0) {
      Eigen::Matrix2d w = Eigen::Matrix2d::Zero();
      if (k < N) {
        w(0, 0) = 2.0 * spec_.stage.q_weight[0];
        w(1, 1) = 2.0 * spec_.stage.q_weight[1];
      }
      if (rho > 0.0) {
        // Penalty curvature also counts just inside the box so the model
        // does not flip when an iterate crosses the boundary.
        for (int i = 0; i < n; ++i) {
          if (xk[i] < spec_.bounds.x_lo[i] + kPenaltyCurvatureMargin ||
              xk[i] > spec_.bounds.x_hi[i] - kPenaltyCurvatureMargin) {
            w(i, i) += 2.0 * rho;
          }
        }
      }
      if (k == N) {
        if (spec_.terminal.kind() == TerminalCost::Kind::quadratic) {
          w(0, 0) += 2.0;
          w(1, 1) += 2.0;
        } else if (spec_.terminal.kind() == TerminalCost::Kind::learned) {
          w += learned_state_hessian(*spec_.terminal.model(), xk);
        }
      }
      const auto sk = sens.leftCols(k);
      hess.topLeftCorner(k, k).noalias() += sk.transpose() * w * sk;
    }
    if (k == N) break;
    hess(k, k) += 2.0 * spec_.stage.r_weight[0];
    for (int s = 0; s < S; ++s) {
      const std::size_t idx = static_cast<std::size_t>(k) * S + s;
      const double* z = traj_.data() + idx * n;
      cstr::weighted_hessian(z, costate_.data() + idx * n, spec_.params, m);
      const double hm0 = h * m[0], hm1 = h * m[1], hm2 = h * m[2];
      for (int a = 0; a <= k; ++a) {
        const double s0a = sens(0, a), s1a = sens(1, a);
        const double ea = a == k ? 1.0 : 0.0;
        for (int b = a; b <= k; ++b) {
          const double s0b = sens(0, b), s1b = sens(1, b);
          const double eb = b == k ? 1.0 : 0.0;
          const double v = hm0 * (s0a * s1b + s1a * s0b) + hm1 * s1a * s1b + hm2 * (s1a * eb + ea * s1b);
          hess(a, b) += v;
          if (b != a) hess(b, a) += v;
        }
      }
      cstr::jacobians(z, u[k], spec_.params, jx, ju);
      for (int c = 0; c <= k; ++c) {
        const double s0 = sens(0, c);
        const double s1 = sens(1, c);
        sens(0, c) = s0 + h * (jx[0] * s0 + jx[1] * s1);
        sens(1, c) = s1 + h * (jx[2] * s0 + jx[3] * s1);
      }
      sens(0, k) += h * ju[0];
      sens(1, k) += h * ju[1];
    }
  }
}

namespace {

// min 0.5 d'Hd + g'd subject to lo <= d <= hi, for positive definite H.
// Projected Newton on the free set with backtracking; exact for this convex QP.
Eigen::VectorXd box_qp(const Eigen::MatrixXd& H, const Eigen::VectorXd& g, const Eigen::VectorXd& lo,
                       const Eigen::VectorXd& hi) {
  const Eigen::Index n = g.size();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n).cwiseMax(lo).cwiseMin(hi);
  auto value = [&](const Eigen::VectorXd& v) { return 0.5 * v.dot(H * v) + g.dot(v); };
  double fx = value(x);
  std::vector<char> clamped(n, 0);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd grad = g + H * x;
    std::vector<Eigen::Index> fr;
    for (Eigen::Index i = 0; i < n; ++i) {
      clamped[i] = (x[i] <= lo[i] && grad[i] > 0.0) || (x[i] >= hi[i] && grad[i] < 0.0);
      if (!clamped[i]) fr.push_back(i);
    }
    if (fr.empty()) break;
    const Eigen::Index nf = static_cast<Eigen::Index>(fr.size());
    Eigen::MatrixXd hff(nf, nf);
    Eigen::VectorXd gf(nf);
    double gnorm = 0.0;
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf[a] = grad[fr[a]];
      gnorm = std::max(gnorm, std::abs(gf[a]));
      for (Eigen::Index b = 0; b < nf; ++b) hff(a, b) = H(fr[a], fr[b]);
    }
    if (gnorm <= 1e-14 * (1.0 + g.lpNorm<Eigen::Infinity>())) break;
    Eigen::LLT<Eigen::MatrixXd> llt(hff);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd step_f = -llt.solve(gf);
    Eigen::VectorXd search = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < nf; ++a) search[fr[a]] = step_f[a];
    const double slope = grad.dot(search);
    if (!(slope < 0.0)) break;
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
      const Eigen::VectorXd xc = (x + t * search).cwiseMax(lo).cwiseMin(hi);
      const double fc = value(xc);
      if (fc <= fx + 1e-4 * grad.dot(xc - x)) {
        moved = (xc - x).lpNorm<Eigen::Infinity>() > 0.0;
        x = xc;
        fx = fc;
        break;
      }
    }
    if (!moved) break;
    if (t == 1.0) {
      // Full Newton step on an unchanged free set solves the QP exactly.
      bool same = true;
      for (Eigen::Index a = 0; a < nf && same; ++a) {
        same = x[fr[a]] > lo[fr[a]] && x[fr[a]] < hi[fr[a]];
      }
      if (same) break;
    }
  }
  return x;
}

}  // namespace

double OcpSolver::ilqr(const StateVec& x0, Eigen::VectorXd& u, int* evals, int* iters) {
  // Control-limited iterative LQR with a feedback forward pass; the feedback
  // keeps line-search trials near the unstable equilibrium well conditioned.
  const int n = kCstrStateDim;
  const int N = spec_.horizon;
  const int S = spec_.grid.substeps;
  const double h = spec_.grid.h;
  const double rho = spec_.soft_state_weight;
  const double lo = spec_.bounds.u_lo[0];
  const double hi = spec_.bounds.u_hi[0];
  const double r2 = 2.0 * spec_.stage.r_weight[0];

  std::vector<Eigen::Matrix2d> A(N);
  std::vector<Eigen::Vector2d> B(N);
  std::vector<Eigen::Vector2d> xs(N + 1);
  std::vector<Eigen::RowVector2d> K(N);
  Eigen::VectorXd kff(N), unew(N);
  double jx[4], ju[2], dz[2];

  auto node_state = [&](int k) {
    const double* z = traj_.data() + static_cast<std::size_t>(k) * S * n;
    return Eigen::Vector2d(z[0], z[1]);
  };
  auto penalty_terms = [&](const Eigen::Vector2d& x, Eigen::Vector2d& gx, Eigen::Matrix2d& hx) {
    if (!(rho > 0.0)) return;
    for (int i = 0; i < n; ++i) {
      double e = 0.0;
      if (x[i] < spec_.bounds.x_lo[i]) e = x[i] - spec_.bounds.x_lo[i];
      if (x[i] > spec_.bounds.x_hi[i]) e = x[i] - spec_.bounds.x_hi[i];
      gx[i] += 2.0 * rho * e;
      if (x[i] < spec_.bounds.x_lo[i] + kPenaltyCurvatureMargin ||
          x[i] > spec_.bounds.x_hi[i] - kPenaltyCurvatureMargin) {
        hx(i, i) += 2.0 * rho;
      }
    }
  };

  double f = forward(x0.data(), u.data());
  ++*evals;
  if (!std::isfinite(f)) return f;
  double mu = 0.0;
  for (int it = 0; it < spec_.max_iters; ++it, ++*iters) {
    // Linearize the sampled map around the current trajectory in traj_.
    for (int k = 0; k <= N; ++k) xs[k] = node_state(k);
    for (int k = 0; k < N; ++k) {
      Eigen::Matrix2d phi = Eigen::Matrix2d::Identity();
      Eigen::Vector2d gam = Eigen::Vector2d::Zero();
      for (int s = 0; s < S; ++s) {
        const double* z = traj_.data() + (static_cast<std::size_t>(k) * S + s) * n;
        cstr::jacobians(z, u[k], spec_.params, jx, ju);
        Eigen::Matrix2d m;
        m << 1.0 + h * jx[0], h * jx[1], h * jx[2], 1.0 + h * jx[3];
        phi = m * phi;
        gam = m * gam + h * Eigen::Vector2d(ju[0], ju[1]);
      }
      A[k] = phi;
      B[k] = gam;
    }

    // Backward pass; retried with more regularization if Q_uu is not positive.
    double dv1 = 0.0, dv2 = 0.0;
    bool ok = false;
    for (int tries = 0; tries < 20 && !ok; ++tries) {
      Eigen::Vector2d vx = Eigen::Vector2d::Zero();
      Eigen::Matrix2d vxx = Eigen::Matrix2d::Zero();
      const Eigen::Vector2d& xN = xs[N];
      if (spec_.terminal.kind() == TerminalCost::Kind::quadratic) {
        vx = 2.0 * (xN - spec_.terminal.x_sp());
        vxx = 2.0 * Eigen::Matrix2d::Identity();
      } else if (spec_.terminal.kind() == TerminalCost::Kind::learned) {
        spec_.terminal.value_and_gradient(xN.data(), n, vx.data());
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(learned_state_hessian(*spec_.terminal.model(), xN.data()));
        vxx = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
      }
      penalty_terms(xN, vx, vxx);
      dv1 = dv2 = 0.0;
      ok = true;
      for (int k = N - 1; k >= 0; --k) {
        Eigen::Vector2d lx(2.0 * spec_.stage.q_weight[0] * (xs[k][0] - spec_.stage.x_sp[0]),
                           2.0 * spec_.stage.q_weight[1] * (xs[k][1] - spec_.stage.x_sp[1]));
        Eigen::Matrix2d lxx = Eigen::Vector2d(2.0 * spec_.stage.q_weight[0], 2.0 * spec_.stage.q_weight[1]).asDiagonal();
        if (k > 0) penalty_terms(xs[k], lx, lxx);
        const Eigen::Vector2d qx = lx + A[k].transpose() * vx;
        const double qu = r2 * (u[k] - spec_.stage.u_sp[0]) + B[k].dot(vx);
        const Eigen::Matrix2d qxx = lxx + A[k].transpose() * vxx * A[k];
        const double quu = r2 + B[k].dot(vxx * B[k]);
        const Eigen::RowVector2d qux = B[k].transpose() * vxx * A[k];
        const double quu_reg = quu + mu;
        if (!(quu_reg > 0.0)) {
          ok = false;
          break;
        }
        const double target = std::clamp(u[k] - qu / quu_reg, lo, hi);
        kff[k] = target - u[k];
        const bool clamped = target <= lo || target >= hi;
        K[k] = clamped ? Eigen::RowVector2d::Zero() : Eigen::RowVector2d(-qux / quu_reg);
        dv1 += kff[k] * qu;
        dv2 += 0.5 * kff[k] * quu * kff[k];
        vx = qx + K[k].transpose() * (quu * kff[k] + qu) + qux.transpose() * kff[k];
        vxx = qxx + K[k].transpose() * quu * K[k] + K[k].transpose() * qux + qux.transpose() * K[k];
        vxx = 0.5 * (vxx + vxx.transpose()).eval();
      }
      if (!ok) mu = std::max(mu * 10.0, 1e-8);
    }
    if (!ok) break;
    if (-(dv1 + dv2) <= 1e-13 * (1.0 + std::abs(f))) break;

    // Forward pass with feedback on the deviation from the nominal states.
    bool accepted = false;
    for (double alpha = 1.0; alpha > 1e-4; alpha *= 0.5) {
      double z[2] = {x0[0], x0[1]};
      for (int k = 0; k < N; ++k) {
        const double du = alpha * kff[k] + K[k][0] * (z[0] - xs[k][0]) + K[k][1] * (z[1] - xs[k][1]);
        unew[k] = std::clamp(u[k] + (std::isfinite(du) ? du : 0.0), lo, hi);
        for (int s = 0; s < S; ++s) {
          cstr::derivative(z, unew[k], spec_.params, dz);
          z[0] += h * dz[0];
          z[1] += h * dz[1];
        }
      }
      const double fc = forward(x0.data(), unew.data());
      ++*evals;
      const double expected = alpha * dv1 + alpha * alpha * dv2;
      if (std::isfinite(fc) && fc < f && (f - fc) >= -0.1 * expected) {
        u = unew;
        f = fc;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      forward(x0.data(), u.data());
      if (mu >= 1e6) break;
      mu = std::max(mu * 10.0, 1e-6);
      continue;
    }
    mu *= 0.1;
    if (mu < 1e-10) mu = 0.0;
  }
  return f;
}

OcpSolution OcpSolver::local_solve(const StateVec& x0, Eigen::VectorXd u, int* evals) {
  const int nv = spec_.num_vars();
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(nv, spec_.bounds.u_lo[0]);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(nv, spec_.bounds.u_hi[0]);

  OcpSolution sol;
  u = project(std::move(u));
  int outer = 0;
  if (spec_.horizon > 1 && !std::isfinite(ilqr(x0, u, evals, &outer))) {
    sol.u_seq = u;
    sol.status = SolveStatus::numeric_error;
    return sol;
  }
  Eigen::VectorXd g(nv), g_new(nv);
  double f = forward_backward(x0.data(), u.data(), g.data());
  ++*evals;
  if (!std::isfinite(f)) {
    sol.u_seq = u;
    sol.status = SolveStatus::numeric_error;
    return sol;
  }

  Eigen::MatrixXd hess(nv, nv), hmod(nv, nv);
  double damping = 0.0;
  bool fresh = false;  // hmod is current for u
  sol.status = SolveStatus::max_iters;
  int it = 0;
  for (; it < spec_.max_iters; ++it) {
    const double pgn = projected_gradient_norm(u, g);
    if (pgn <= stationarity_tol(f)) {
      sol.status = SolveStatus::converged;
      break;
    }
    if (!fresh) {
      // Newton model with eigenvalues replaced by max(|lambda|, floor).
      hessian(u.data(), hess);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hess);
      Eigen::VectorXd ev = es.eigenvalues().cwiseAbs();
      const double top = std::max(ev.maxCoeff(), 1e-12);
      ev = ev.cwiseMax(1e-12 * top);
      hmod = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      hmod = 0.5 * (hmod + hmod.transpose()).eval();
      fresh = true;
    }
    Eigen::MatrixXd hd = hmod;
    if (damping > 0.0) hd.diagonal() += damping * hmod.diagonal();
    const Eigen::VectorXd d = box_qp(hd, g, lo - u, hi - u);

    // Armijo backtracking on the feasible segment; the slack absorbs roundoff
    // in f once the predicted decrease is at machine-precision level.
    const double slope = g.dot(d);
    // The Newton decrement is below the roundoff of f: the gradient left over
    // is noise from the unstable rollout, not a descent direction.
    if (-slope <= 1e-16 * (1.0 + std::abs(f)) && pgn <= 1e3 * stationarity_tol(f)) {
      sol.status = SolveStatus::converged;
      break;
    }
    bool accepted = false;
    Eigen::VectorXd cand(nv);
    double fc = 0.0;
    double t = 1.0;
    const double slack = 1e-14 * (1.0 + std::abs(f));
    if (slope < 0.0) {
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        cand = project(u + t * d);
        fc = forward(x0.data(), cand.data());
        ++*evals;
        if (std::isfinite(fc) && fc <= f + 1e-4 * t * slope + slack) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      if (damping < 1e8) {
        damping = std::max(damping * 100.0, 1e-6);
        continue;
      }
      break;  // no representable decrease left
    }
    damping = t == 1.0 ? damping * 0.1 : std::max(damping * 4.0, 1e-6);
    if (damping < 1e-10) damping = 0.0;
    fc = forward_backward(x0.data(), cand.data(), g_new.data());
    ++*evals;
    if (!std::isfinite(fc)) {
      sol.status = SolveStatus::numeric_error;
      break;
    }
    const bool stalled = (cand - u).lpNorm<Eigen::Infinity>() == 0.0;
    u = cand;
    f = fc;
    g = g_new;
    fresh = false;
    if (stalled) break;
  }
  sol.u_seq = u;
  sol.value = f;
  sol.iters = it + outer;
  sol.stationarity = projected_gradient_norm(u, g);
  if (sol.status != SolveStatus::numeric_error && sol.stationarity <= stationarity_tol(f)) {
    sol.status = SolveStatus::converged;
  }
  return sol;
}

OcpSolution OcpSolver::solve(const StateVec& x0, const std::optional<Eigen::VectorXd>& warm_start) {
  const auto t0 = std::chrono::steady_clock::now();
  const int nv = spec_.num_vars();
  const double lo = spec_.bounds.u_lo[0];
  const double hi = spec_.bounds.u_hi[0];
  if (x0.size() != kCstrStateDim) throw DimensionError("solve: x0 has wrong dimension");
  if (warm_start && warm_start->size() != nv) throw DimensionError("warm start has wrong length");

  OcpSolution best;
  best.status = SolveStatus::numeric_error;
  best.u_seq = Eigen::VectorXd::Constant(nv, 0.5 * (lo + hi));
  best.value = std::numeric_limits<double>::infinity();
  int evals = 0;
  int total_iters = 0;

  if (!x0.allFinite()) {
    best.value = std::numeric_limits<double>::quiet_NaN();
  } else if (spec_.horizon == 1 && spec_.multistart_grid > 1) {
    // Multistart: score grid candidates (plus the warm start), refine the best few.
    std::vector<std::pair<double, double>> scored;  // (value, u)
    const int G = spec_.multistart_grid;
    for (int i = 0; i < G; ++i) {
      const double ui = lo + (hi - lo) * i / (G - 1);
      const double v = forward(x0.data(), &ui);
      ++evals;
      if (std::isfinite(v)) scored.emplace_back(v, ui);
    }
    if (warm_start) {
      const double uw = std::clamp((*warm_start)[0], lo, hi);
      const double v = forward(x0.data(), &uw);
      ++evals;
      if (std::isfinite(v)) scored.emplace_back(v, uw);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    const std::size_t refine = std::min<std::size_t>(3, scored.size());
    for (std::size_t r = 0; r < refine; ++r) {
      OcpSolution cand = local_solve(x0, Eigen::VectorXd::Constant(1, scored[r].second), &evals);
      total_iters += cand.iters;
      if (cand.status == SolveStatus::numeric_error) continue;
      if (best.status == SolveStatus::numeric_error || cand.value < best.value) best = cand;
    }
  } else {
    Eigen::VectorXd init = warm_start ? project(*warm_start) : Eigen::VectorXd::Constant(nv, 0.5 * (lo + hi));
    if (!warm_start && spec_.init_feedback_gain.size() == kCstrStateDim &&
        spec_.init_feedback_gain.any()) {
      // Second cold-start candidate: roll out a proportional feedback law.
      Eigen::VectorXd fb = feedback_guess(x0);
      const double f_mid = forward(x0.data(), init.data());
      const double f_fb = forward(x0.data(), fb.data());
      evals += 2;
      if (std::isfinite(f_fb) && !(f_mid <= f_fb)) init = std::move(fb);
    }
    best = local_solve(x0, std::move(init), &evals);
    total_iters = best.iters;
  }

  if (best.status != SolveStatus::numeric_error) {
    // Final pass so that value and x_seq correspond exactly to u_seq.
    best.value = forward(x0.data(), best.u_seq.data());
    if (!std::isfinite(best.value)) best.status = SolveStatus::numeric_error;
  }
  best.iters = total_iters;
  best.x_seq.clear();
  if (best.status != SolveStatus::numeric_error) {
    const int S = spec_.grid.substeps;
    for (int k = 0; k <= spec_.horizon; ++k) {
      const double* xk = traj_.data() + static_cast<std::size_t>(k) * S * kCstrStateDim;
      best.x_seq.push_back(Eigen::Vector2d(xk[0], xk[1]));
    }
  }
  best.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return best;
}

ObjectiveEval objective_and_gradient(const OcpSpec& spec, const StateVec& x0,
                                     const Eigen::VectorXd& u_seq) {
  OcpSolver solver(spec);
  return solver.objective_and_gradient(x0, u_seq);
}

OcpSolution solve_ocp(const OcpSpec& spec, const StateVec& x0,
                      const std::optional<Eigen::VectorXd>& warm_start) {
  OcpSolver solver(spec);
  return solver.solve(x0, warm_start);
}

MpcStep mpc_step(OcpSolver& solver, const StateVec& x0, const std::optional<Eigen::VectorXd>& warm) {
  MpcStep step;
  step.diag = solver.solve(x0, warm);
  step.u0 = step.diag.input(0, solver.spec().bounds.input_dim());
  step.value = step.diag.value;
  return step;
}

MpcStep mpc_step(const OcpSpec& spec, const StateVec& x0, const std::optional<Eigen::VectorXd>& warm) {
  OcpSolver solver(spec);
  return mpc_step(solver, x0, warm);
}

Eigen::VectorXd shift_warm_start(const Eigen::VectorXd& u_seq, int m) {
  const Eigen::Index len = u_seq.size();
  if (len < m || m < 1) throw DimensionError("shift_warm_start: sequence shorter than one input");
  Eigen::VectorXd out(len);
  out.head(len - m) = u_seq.tail(len - m);
  out.tail(m) = u_seq.tail(m);
  return out;
}

}  // namespace vfsynth
