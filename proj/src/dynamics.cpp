#include "vfsynth/dynamics.hpp"

#include <cmath>
#include <string>

#include "vfsynth/error.hpp"

namespace vfsynth {

namespace {

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

void check_cstr_dims(const StateVec& x, const InputVec& u) {
  if (x.size() != kCstrStateDim || u.size() != kCstrInputDim) {
    throw DimensionError("CSTR expects a 2-state, 1-input system, got n=" +
                         std::to_string(x.size()) + " m=" + std::to_string(u.size()));
  }
}

}  // namespace

void ModelParams::validate() const {
  for (double v : {tau, k_rate, b_act, x_f, x_c, a_coef}) {
    if (!std::isfinite(v)) throw DomainError("model parameters must be finite");
  }
  if (tau <= 0.0) throw DomainError("tau must be positive");
}

Bounds Bounds::cstr_default() {
  Bounds b;
  b.x_lo = Eigen::Vector2d(0.0632, 0.4519);
  b.x_hi = Eigen::Vector2d(0.4632, 0.8519);
  b.u_lo = Eigen::VectorXd::Constant(1, 0.0);
  b.u_hi = Eigen::VectorXd::Constant(1, 2.0);
  return b;
}

void Bounds::validate() const {
  if (x_lo.size() != x_hi.size() || u_lo.size() != u_hi.size() || x_lo.size() == 0 ||
      u_lo.size() == 0) {
    throw DimensionError("bounds have inconsistent dimensions");
  }
  if (!all_finite(x_lo) || !all_finite(x_hi) || !all_finite(u_lo) || !all_finite(u_hi)) {
    throw DomainError("bounds must be finite");
  }
  if ((x_lo.array() >= x_hi.array()).any() || (u_lo.array() >= u_hi.array()).any()) {
    throw DomainError("bounds require lo < hi elementwise");
  }
}

bool Bounds::contains_state(const StateVec& x) const {
  return (x.array() >= x_lo.array()).all() && (x.array() <= x_hi.array()).all();
}

double Bounds::state_excess_sq(const StateVec& x) const {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double e = 0.0;
    if (x[i] < x_lo[i]) e = x_lo[i] - x[i];
    if (x[i] > x_hi[i]) e = x[i] - x_hi[i];
    s += e * e;
  }
  return s;
}

double Bounds::state_excess_max(const StateVec& x) const {
  double m = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    m = std::max({m, x_lo[i] - x[i], x[i] - x_hi[i]});
  }
  return m;
}

SimGrid SimGrid::make(double h, double t_s) {
  SimGrid g;
  g.h = h;
  g.t_s = t_s;
  g.substeps = static_cast<int>(std::lround(t_s / h));
  g.validate();
  return g;
}

void SimGrid::validate() const {
  if (!(h > 0.0) || !std::isfinite(h)) throw DomainError("grid step h must be positive");
  if (substeps < 1) throw DomainError("grid needs at least one substep");
  if (std::abs(substeps * h - t_s) > 1e-9 * std::max(1.0, t_s)) {
    throw DomainError("control interval t_s must be an integer multiple of h");
  }
}

namespace cstr {

void derivative(const double* x, double u, const ModelParams& p, double* dx) {
  const double rate = p.k_rate * std::exp(-p.b_act / x[1]);
  dx[0] = (1.0 / p.tau) * (1.0 - x[0]) - x[0] * rate;
  dx[1] = (1.0 / p.tau) * (p.x_f - x[1]) + x[0] * rate - p.a_coef * u * (x[1] - p.x_c);
}

void jacobians(const double* x, double u, const ModelParams& p, double* jx, double* ju) {
  const double rate = p.k_rate * std::exp(-p.b_act / x[1]);
  const double drate = rate * p.b_act / (x[1] * x[1]);
  jx[0] = -1.0 / p.tau - rate;
  jx[1] = -x[0] * drate;
  jx[2] = rate;
  jx[3] = -1.0 / p.tau + x[0] * drate - p.a_coef * u;
  ju[0] = 0.0;
  ju[1] = -p.a_coef * (x[1] - p.x_c);
}

void weighted_hessian(const double* x, const double* w, const ModelParams& p, double* m) {
  // sum_i w_i d2F_i / d(x1, x2, u)^2; the only nonzero entries are
  // (x1,x2), (x2,x2) and (x2,u).
  const double rate = p.k_rate * std::exp(-p.b_act / x[1]);
  const double x2sq = x[1] * x[1];
  const double d1 = rate * p.b_act / x2sq;
  const double d2 = rate * (p.b_act * p.b_act / (x2sq * x2sq) - 2.0 * p.b_act / (x2sq * x[1]));
  const double dw = w[1] - w[0];
  m[0] = dw * d1;
  m[1] = dw * x[0] * d2;
  m[2] = -p.a_coef * w[1];
}

}  // namespace cstr

StateVec cstr_derivative(const StateVec& x, const InputVec& u, const ModelParams& p) {
  check_cstr_dims(x, u);
  StateVec dx(kCstrStateDim);
  cstr::derivative(x.data(), u[0], p, dx.data());
  if (!all_finite(dx)) throw NumericDomainError("non-finite CSTR derivative");
  return dx;
}

StateVec euler_step(const StateVec& x, const InputVec& u, double h, const ModelParams& p) {
  if (!(h >= 0.0)) throw DomainError("Euler step length must be nonnegative");
  return x + h * cstr_derivative(x, u, p);
}

StateVec hold_step(const StateVec& x, const InputVec& u, const SimGrid& grid,
                   const ModelParams& p) {
  check_cstr_dims(x, u);
  double z[2] = {x[0], x[1]};
  double dz[2];
  for (int s = 0; s < grid.substeps; ++s) {
    cstr::derivative(z, u[0], p, dz);
    z[0] += grid.h * dz[0];
    z[1] += grid.h * dz[1];
  }
  StateVec out(2);
  out << z[0], z[1];
  if (!all_finite(out)) throw NumericDomainError("non-finite state after control interval");
  return out;
}

std::vector<StateVec> rollout(const StateVec& x0, const std::vector<InputVec>& u_seq,
                              const SimGrid& grid, const ModelParams& p) {
  if (u_seq.empty()) throw DomainError("rollout needs a nonempty input sequence");
  std::vector<StateVec> xs;
  xs.reserve(u_seq.size() + 1);
  xs.push_back(x0);
  for (const auto& u : u_seq) xs.push_back(hold_step(xs.back(), u, grid, p));
  return xs;
}

}  // namespace vfsynth
