#pragma once

#include <vector>

#include <Eigen/Core>

namespace vfsynth {

using StateVec = Eigen::VectorXd;
using InputVec = Eigen::VectorXd;

/// CSTR model constants. Defaults are the benchmark values.
struct ModelParams {
  double tau = 20.0;
  double k_rate = 300.0;
  double b_act = 5.0;
  double x_f = 0.3947;
  double x_c = 0.3816;
  double a_coef = 0.117;

  void validate() const;
  bool operator==(const ModelParams&) const = default;
};

inline constexpr int kCstrStateDim = 2;
inline constexpr int kCstrInputDim = 1;

/// State and input boxes.
struct Bounds {
  StateVec x_lo;
  StateVec x_hi;
  InputVec u_lo;
  InputVec u_hi;

  static Bounds cstr_default();
  int state_dim() const { return static_cast<int>(x_lo.size()); }
  int input_dim() const { return static_cast<int>(u_lo.size()); }
  void validate() const;
  bool contains_state(const StateVec& x) const;
  /// Squared Euclidean distance of x to the state box.
  double state_excess_sq(const StateVec& x) const;
  /// Largest per-coordinate distance of x outside the state box (0 inside).
  double state_excess_max(const StateVec& x) const;
  bool operator==(const Bounds& o) const {
    return x_lo == o.x_lo && x_hi == o.x_hi && u_lo == o.u_lo && u_hi == o.u_hi;
  }
};

/// Integration step h and control interval t_s = substeps * h.
struct SimGrid {
  double h = 0.1;
  double t_s = 3.0;
  int substeps = 30;

  /// Builds a grid, checking that t_s is an integer multiple of h.
  static SimGrid make(double h, double t_s);
  void validate() const;
  bool operator==(const SimGrid&) const = default;
};

// Raw kernels on the two-state CSTR. These are the hot path of the OCP
// solver; the Eigen-facing functions below wrap them.
namespace cstr {

void derivative(const double* x, double u, const ModelParams& p, double* dx);

/// Jacobian of the continuous-time vector field. jx is row-major 2x2, ju is 2x1.
void jacobians(const double* x, double u, const ModelParams& p, double* jx, double* ju);
/// Contracted second derivatives sum_i w_i d2F_i. Writes the three nonzero
/// entries m = (d2/dx1dx2, d2/dx2^2, d2/dx2du).
void weighted_hessian(const double* x, const double* w, const ModelParams& p, double* m);

}  // namespace cstr

/// Continuous-time CSTR vector field. Throws NumericDomainError on a
/// non-finite result.
StateVec cstr_derivative(const StateVec& x, const InputVec& u, const ModelParams& p);

/// One explicit Euler step of length h. No clipping.
StateVec euler_step(const StateVec& x, const InputVec& u, double h, const ModelParams& p);

/// One control interval: grid.substeps Euler steps with u held constant.
/// This is the discrete-time map f(x, u) used throughout.
StateVec hold_step(const StateVec& x, const InputVec& u, const SimGrid& grid,
                   const ModelParams& p);

/// Iterated hold_step; element 0 is x0, result has u_seq.size() + 1 states.
std::vector<StateVec> rollout(const StateVec& x0, const std::vector<InputVec>& u_seq,
                              const SimGrid& grid, const ModelParams& p);

}  // namespace vfsynth
