#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "vfsynth/error.hpp"
#include "vfsynth/scenario.hpp"

namespace vfsynth {

namespace {

void check_eps(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("eps must lie in (0, 1)");
}

}  // namespace

double beta_bound(double eps, long m_samples, long dim) {
  check_eps(eps);
  if (m_samples < 0) throw DomainError("sample count must be nonnegative");
  if (dim < 1) throw DomainError("dimension must be at least 1");
  if (dim - 1 >= m_samples) return 1.0;  // the full binomial sum

  const double lm = std::lgamma(static_cast<double>(m_samples) + 1.0);
  const double le = std::log(eps);
  const double l1e = std::log1p(-eps);
  std::vector<double> logs(static_cast<std::size_t>(dim));
  double top = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < dim; ++i) {
    const double di = static_cast<double>(i);
    const double dm = static_cast<double>(m_samples - i);
    const double v = lm - std::lgamma(di + 1.0) - std::lgamma(dm + 1.0) + di * le + dm * l1e;
    logs[static_cast<std::size_t>(i)] = v;
    top = std::max(top, v);
  }
  double acc = 0.0;
  for (double v : logs) acc += std::exp(v - top);
  return std::min(1.0, std::exp(top + std::log(acc)));
}

long min_samples(double eps, double beta, long dim) {
  check_eps(eps);
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("beta must lie in (0, 1)");
  if (dim < 1) throw DomainError("dimension must be at least 1");
  // beta_bound is 1 for M <= dim - 1 and strictly decreasing afterwards.
  long lo = dim - 1;  // beta_bound(lo) > beta
  long hi = std::max(2 * dim, 1L);
  while (beta_bound(eps, hi, dim) > beta) {
    lo = hi;
    hi *= 2;
    if (hi > (1L << 40)) throw DomainError("required sample count is out of range");
  }
  while (hi - lo > 1) {
    const long mid = lo + (hi - lo) / 2;
    if (beta_bound(eps, mid, dim) <= beta) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return hi;
}

bool ScenarioCertificate::valid() const {
  return eps > 0.0 && eps < 1.0 && beta > 0.0 && beta < 1.0 && dim >= 1 && m_samples >= 0 &&
         beta_bound(eps, m_samples, dim) <= beta;
}

}  // namespace vfsynth
