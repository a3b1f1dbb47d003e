#include "vfsynth/value_function.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vfsynth/error.hpp"
#include "vfsynth/random.hpp"

namespace vfsynth {

std::string to_string(BasisKind k) {
  switch (k) {
    case BasisKind::gaussian_rbf:
      return "gaussian_rbf";
    case BasisKind::quadratic:
      return "quadratic";
    case BasisKind::polynomial:
      return "polynomial";
  }
  return "?";
}

std::string to_string(CenterStrategy s) {
  return s == CenterStrategy::uniform_grid ? "uniform_grid" : "kmeans_on_training_states";
}

BasisKind basis_kind_from_string(const std::string& s) {
  if (s == "gaussian_rbf") return BasisKind::gaussian_rbf;
  if (s == "quadratic") return BasisKind::quadratic;
  if (s == "polynomial") return BasisKind::polynomial;
  throw FormatError("unknown basis kind '" + s + "'");
}

CenterStrategy center_strategy_from_string(const std::string& s) {
  if (s == "kmeans_on_training_states") return CenterStrategy::kmeans_on_training_states;
  if (s == "uniform_grid") return CenterStrategy::uniform_grid;
  throw FormatError("unknown center strategy '" + s + "'");
}

void BasisSpec::validate() const {
  if (d < 1) throw DomainError("basis needs d >= 1");
  if (!(width_factor > 0.0) || !std::isfinite(width_factor)) {
    throw DomainError("width_factor must be positive");
  }
  if (degree < 0) throw DomainError("polynomial degree must be nonnegative");
  if (kmeans_iters < 0) throw DomainError("kmeans_iters must be nonnegative");
}

int Basis::size() const {
  const int core = kind == BasisKind::gaussian_rbf ? static_cast<int>(centers.rows())
                                                   : static_cast<int>(exponents.size());
  return core + (include_bias ? 1 : 0);
}

bool Basis::operator==(const Basis& o) const {
  return kind == o.kind && centers == o.centers && widths == o.widths && origin == o.origin &&
         exponents == o.exponents && include_bias == o.include_bias &&
         state_dim == o.state_dim;
}

double ordered_dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

namespace {

double squared_distance(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double t = a[i] - b[i];
    s += t * t;
  }
  return s;
}

// Graded lexicographic enumeration of exponent vectors with total degree <= deg.
std::vector<std::vector<int>> monomial_exponents(int n, int deg) {
  std::vector<std::vector<int>> out;
  for (int total = 0; total <= deg; ++total) {
    std::vector<int> e(n, 0);
    // Recursive fill: distribute `total` over n slots, first slot largest first.
    auto fill = [&](auto&& self, int slot, int remaining) -> void {
      if (slot == n - 1) {
        e[slot] = remaining;
        out.push_back(e);
        return;
      }
      for (int k = remaining; k >= 0; --k) {
        e[slot] = k;
        self(self, slot + 1, remaining - k);
      }
    };
    fill(fill, 0, total);
  }
  return out;
}

Eigen::MatrixXd grid_centers(int d, const Bounds& box) {
  const int n = box.state_dim();
  std::vector<int> counts(n, 1);
  const int root = static_cast<int>(std::lround(std::pow(d, 1.0 / n)));
  int prod = 1;
  for (int i = 0; i < n; ++i) prod *= root;
  if (prod == d) {
    std::fill(counts.begin(), counts.end(), root);
  } else if (n == 2) {
    // most balanced factor pair a * b = d with a <= b
    int a = static_cast<int>(std::floor(std::sqrt(static_cast<double>(d))));
    while (d % a != 0) --a;
    counts = {a, d / a};
  } else {
    throw BasisError("uniform_grid needs d to be a perfect n-th power for n != 2");
  }
  Eigen::MatrixXd c(d, n);
  std::vector<int> idx(n, 0);
  for (int row = 0; row < d; ++row) {
    for (int i = 0; i < n; ++i) {
      const double frac = (idx[i] + 0.5) / counts[i];
      c(row, i) = box.x_lo[i] + frac * (box.x_hi[i] - box.x_lo[i]);
    }
    // last coordinate fastest
    for (int i = n - 1; i >= 0; --i) {
      if (++idx[i] < counts[i]) break;
      idx[i] = 0;
    }
  }
  return c;
}

Eigen::MatrixXd kmeans_centers(const BasisSpec& spec, const std::vector<StateVec>& states) {
  const int d = spec.d;
  const int n = static_cast<int>(states.front().size());
  const auto count = states.size();
  std::mt19937_64 rng = stream_for(spec.seed, 0);

  // k-means++ seeding
  Eigen::MatrixXd c(d, n);
  std::vector<double> dist(count, std::numeric_limits<double>::infinity());
  std::uint64_t first = uniform_below(rng, count);
  c.row(0) = states[first].transpose();
  for (int j = 1; j < d; ++j) {
    double total = 0.0;
    Eigen::VectorXd prev = c.row(j - 1).transpose();
    for (std::size_t i = 0; i < count; ++i) {
      dist[i] = std::min(dist[i], squared_distance(states[i].data(), prev.data(), n));
      total += dist[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = count - 1;
      for (std::size_t i = 0; i < count; ++i) {
        acc += dist[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_below(rng, count);
    }
    c.row(j) = states[pick].transpose();
  }

  // Lloyd iterations, fixed count
  std::vector<int> assign(count, 0);
  Eigen::MatrixXd sums(d, n);
  std::vector<int> members(d);
  for (int it = 0; it < spec.kmeans_iters; ++it) {
    for (std::size_t i = 0; i < count; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < d; ++j) {
        Eigen::VectorXd cj = c.row(j).transpose();
        const double dd = squared_distance(states[i].data(), cj.data(), n);
        if (dd < best) {
          best = dd;
          assign[i] = j;
        }
      }
    }
    sums.setZero();
    std::fill(members.begin(), members.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      sums.row(assign[i]) += states[i].transpose();
      ++members[assign[i]];
    }
    for (int j = 0; j < d; ++j) {
      if (members[j] > 0) c.row(j) = sums.row(j) / members[j];
    }
  }
  return c;
}

Eigen::VectorXd median_nn_widths(const Eigen::MatrixXd& c, double factor, const Bounds& box) {
  const auto d = c.rows();
  if (d == 1) {
    const double half_side = 0.5 * (box.x_hi - box.x_lo).mean();
    return Eigen::VectorXd::Constant(1, factor * half_side);
  }
  std::vector<double> nn(d, std::numeric_limits<double>::infinity());
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index k = 0; k < d; ++k) {
      if (k == j) continue;
      nn[j] = std::min(nn[j], (c.row(j) - c.row(k)).norm());
    }
  }
  std::vector<double> sorted = nn;
  std::sort(sorted.begin(), sorted.end());
  const double med = d % 2 == 1 ? sorted[d / 2] : 0.5 * (sorted[d / 2 - 1] + sorted[d / 2]);
  if (!(med > 0.0)) {
    throw BasisError("degenerate basis width: centers coincide (median nearest-center distance is 0)");
  }
  return Eigen::VectorXd::Constant(d, factor * med);
}

}  // namespace

Basis fit_basis(const BasisSpec& spec, const std::vector<StateVec>& states, const Bounds& box,
                const StateVec& origin) {
  spec.validate();
  Basis b;
  b.kind = spec.kind;
  b.include_bias = spec.include_bias;
  b.state_dim = box.state_dim();
  switch (spec.kind) {
    case BasisKind::gaussian_rbf: {
      if (spec.center_strategy == CenterStrategy::uniform_grid) {
        b.centers = grid_centers(spec.d, box);
      } else {
        if (static_cast<int>(states.size()) < spec.d) {
          throw BasisError("k-means needs at least d = " + std::to_string(spec.d) +
                           " states, got " + std::to_string(states.size()));
        }
        b.centers = kmeans_centers(spec, states);
      }
      b.widths = median_nn_widths(b.centers, spec.width_factor, box);
      break;
    }
    case BasisKind::quadratic:
    case BasisKind::polynomial: {
      if (origin.size() != b.state_dim) throw DimensionError("basis origin has wrong dimension");
      b.origin = origin;
      b.exponents =
          monomial_exponents(b.state_dim, spec.kind == BasisKind::quadratic ? 2 : spec.degree);
      break;
    }
  }
  return b;
}

void features_into(const Basis& basis, const double* x, double* out) {
  const int n = basis.state_dim;
  int j = 0;
  if (basis.kind == BasisKind::gaussian_rbf) {
    const auto d = basis.centers.rows();
    for (; j < d; ++j) {
      double r2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const double t = x[i] - basis.centers(j, i);
        r2 += t * t;
      }
      const double s = basis.widths[j];
      out[j] = std::exp(-r2 / (2.0 * s * s));
    }
  } else {
    for (const auto& e : basis.exponents) {
      double v = 1.0;
      for (int i = 0; i < n; ++i) {
        for (int p = 0; p < e[i]; ++p) v *= x[i] - basis.origin[i];
      }
      out[j++] = v;
    }
  }
  if (basis.include_bias) out[j] = 1.0;
}

Eigen::VectorXd features(const Basis& basis, const StateVec& x) {
  if (x.size() != basis.state_dim) throw DimensionError("state dimension does not match basis");
  Eigen::VectorXd phi(basis.size());
  features_into(basis, x.data(), phi.data());
  return phi;
}

double evaluate_with_gradient(const Basis& basis, const ThetaVec& theta, const double* x,
                              double* grad) {
  const int n = basis.state_dim;
  for (int i = 0; i < n; ++i) grad[i] = 0.0;
  double v = 0.0;
  int j = 0;
  if (basis.kind == BasisKind::gaussian_rbf) {
    const auto d = basis.centers.rows();
    double diff[8];
    for (; j < d; ++j) {
      double r2 = 0.0;
      for (int i = 0; i < n; ++i) {
        diff[i] = x[i] - basis.centers(j, i);
        r2 += diff[i] * diff[i];
      }
      const double s2 = basis.widths[j] * basis.widths[j];
      const double phi = std::exp(-r2 / (2.0 * s2));
      v += theta[j] * phi;
      const double w = -theta[j] * phi / s2;
      for (int i = 0; i < n; ++i) grad[i] += w * diff[i];
    }
  } else {
    for (const auto& e : basis.exponents) {
      double m = 1.0;
      for (int i = 0; i < n; ++i) {
        for (int p = 0; p < e[i]; ++p) m *= x[i] - basis.origin[i];
      }
      v += theta[j] * m;
      for (int k = 0; k < n; ++k) {
        if (e[k] == 0) continue;
        double dm = static_cast<double>(e[k]);
        for (int i = 0; i < n; ++i) {
          const int pw = i == k ? e[i] - 1 : e[i];
          for (int p = 0; p < pw; ++p) dm *= x[i] - basis.origin[i];
        }
        grad[k] += theta[j] * dm;
      }
      ++j;
    }
  }
  if (basis.include_bias) v += theta[j];
  return v;
}

Eigen::MatrixXd state_hessian(const Basis& basis, const ThetaVec& theta, const double* x) {
  const int n = basis.state_dim;
  Eigen::MatrixXd hess = Eigen::MatrixXd::Zero(n, n);
  if (basis.kind == BasisKind::gaussian_rbf) {
    Eigen::VectorXd diff(n);
    for (Eigen::Index j = 0; j < basis.centers.rows(); ++j) {
      for (int i = 0; i < n; ++i) diff[i] = x[i] - basis.centers(j, i);
      const double s2 = basis.widths[j] * basis.widths[j];
      const double w = theta[j] * std::exp(-diff.squaredNorm() / (2.0 * s2)) / s2;
      hess.noalias() += (w / s2) * diff * diff.transpose();
      hess.diagonal().array() -= w;
    }
    return hess;
  }
  int j = 0;
  for (const auto& e : basis.exponents) {
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        std::vector<int> pw = e;
        double coef = pw[a];
        --pw[a];
        coef *= pw[b];
        --pw[b];
        if (coef == 0.0) continue;
        double m = coef;
        for (int i = 0; i < n; ++i) {
          for (int p = 0; p < pw[i]; ++p) m *= x[i] - basis.origin[i];
        }
        hess(a, b) += theta[j] * m;
      }
    }
    ++j;
  }
  return hess;
}

double evaluate(const Basis& basis, const ThetaVec& theta, const StateVec& x) {
  if (theta.size() != basis.size()) throw DimensionError("theta dimension does not match basis");
  const Eigen::VectorXd phi = features(basis, x);
  return ordered_dot(theta.data(), phi.data(), basis.size());
}

StateVec gradient(const Basis& basis, const ThetaVec& theta, const StateVec& x) {
  if (theta.size() != basis.size()) throw DimensionError("theta dimension does not match basis");
  if (x.size() != basis.state_dim) throw DimensionError("state dimension does not match basis");
  if (basis.state_dim > 8) throw DimensionError("gradient supports state dimension <= 8");
  StateVec g(basis.state_dim);
  evaluate_with_gradient(basis, theta, x.data(), g.data());
  return g;
}

Eigen::VectorXd descent_feature(const Basis& basis, const StateVec& x, const StateVec& x_plus) {
  return features(basis, x_plus) - features(basis, x);
}

}  // namespace vfsynth
