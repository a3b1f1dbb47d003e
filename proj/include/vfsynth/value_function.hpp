#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vfsynth/dynamics.hpp"

namespace vfsynth {

enum class BasisKind { gaussian_rbf, quadratic, polynomial };
enum class CenterStrategy { kmeans_on_training_states, uniform_grid };

std::string to_string(BasisKind k);
std::string to_string(CenterStrategy s);
BasisKind basis_kind_from_string(const std::string& s);
CenterStrategy center_strategy_from_string(const std::string& s);

struct BasisSpec {
  BasisKind kind = BasisKind::gaussian_rbf;
  int d = 75;
  CenterStrategy center_strategy = CenterStrategy::kmeans_on_training_states;
  double width_factor = 1.0;
  std::uint64_t seed = 1;
  /// Appends a constant feature (d + 1 parameters in total).
  bool include_bias = false;
  /// Total degree for the polynomial family; quadratic fixes it at 2.
  int degree = 4;
  int kmeans_iters = 50;

  void validate() const;
};

/// A fitted feature map phi: R^n -> R^d.
///
/// Gaussian: phi_j(x) = exp(-|x - c_j|^2 / (2 sigma_j^2)).
/// Quadratic / polynomial: monomials of (x - origin) up to the given total
/// degree, in graded lexicographic order.
struct Basis {
  BasisKind kind = BasisKind::gaussian_rbf;
  Eigen::MatrixXd centers;  // d x n (gaussian only)
  Eigen::VectorXd widths;   // d (gaussian only)
  Eigen::VectorXd origin;   // n (monomial families only)
  std::vector<std::vector<int>> exponents;  // per monomial, length n
  bool include_bias = false;
  int state_dim = 0;

  /// Number of features, including the optional bias.
  int size() const;
  bool operator==(const Basis& o) const;
};

using ThetaVec = Eigen::VectorXd;

/// Builds the feature map. `box` bounds the uniform-grid centers; `origin`
/// is the expansion point for monomial families.
Basis fit_basis(const BasisSpec& spec, const std::vector<StateVec>& states, const Bounds& box,
                const StateVec& origin);

Eigen::VectorXd features(const Basis& basis, const StateVec& x);

/// Writes phi(x) into out (size basis.size()) without allocating.
void features_into(const Basis& basis, const double* x, double* out);

/// theta^T phi(x), summed left to right.
double evaluate(const Basis& basis, const ThetaVec& theta, const StateVec& x);

/// grad_x of theta^T phi(x).
StateVec gradient(const Basis& basis, const ThetaVec& theta, const StateVec& x);

/// Value and gradient in one pass; grad has basis.state_dim entries.
double evaluate_with_gradient(const Basis& basis, const ThetaVec& theta, const double* x,
                              double* grad);

/// Hessian of theta^T phi with respect to x.
Eigen::MatrixXd state_hessian(const Basis& basis, const ThetaVec& theta, const double* x);

/// phi(x_plus) - phi(x); theta^T of it is V(x_plus) - V(x).
Eigen::VectorXd descent_feature(const Basis& basis, const StateVec& x, const StateVec& x_plus);

/// Left-to-right dot product. Evaluation and QP assembly share it so that
/// sums are reproducible regardless of vectorization.
double ordered_dot(const double* a, const double* b, int n);

}  // namespace vfsynth
