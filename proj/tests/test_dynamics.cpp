#include <cmath>
#include <random>

#include "doctest.h"
#include "vfsynth/dynamics.hpp"
#include "vfsynth/error.hpp"

using namespace vfsynth;

namespace {

const StateVec kXsp = Eigen::Vector2d(0.2632, 0.6519);
const InputVec kUsp = Eigen::VectorXd::Constant(1, 0.7853);

InputVec u1(double v) { return Eigen::VectorXd::Constant(1, v); }

// Hand-written vector field used as an arithmetic oracle.
Eigen::Vector2d field(double x1, double x2, double u, const ModelParams& p) {
  const double r = p.k_rate * x1 * std::exp(-p.b_act / x2);
  return {(1.0 - x1) / p.tau - r, (p.x_f - x2) / p.tau + r - p.a_coef * u * (x2 - p.x_c)};
}

}  // namespace

TEST_CASE("default parameters and boxes") {
  const ModelParams p;
  CHECK(p.tau == 20.0);
  CHECK(p.k_rate == 300.0);
  CHECK(p.b_act == 5.0);
  CHECK(p.x_f == 0.3947);
  CHECK(p.x_c == 0.3816);
  CHECK(p.a_coef == 0.117);
  const Bounds b = Bounds::cstr_default();
  CHECK(b.x_lo == Eigen::Vector2d(0.0632, 0.4519));
  CHECK(b.x_hi == Eigen::Vector2d(0.4632, 0.8519));
  CHECK(b.u_lo[0] == 0.0);
  CHECK(b.u_hi[0] == 2.0);
  const SimGrid g;
  CHECK(g.h == 0.1);
  CHECK(g.substeps == 30);
}

TEST_CASE("derivative matches the hand-written field") {
  const ModelParams p;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> x1(0.0632, 0.4632), x2(0.4519, 0.8519), uu(0.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double a = x1(rng), b = x2(rng), u = uu(rng);
    const StateVec d = cstr_derivative(Eigen::Vector2d(a, b), u1(u), p);
    const Eigen::Vector2d ref = field(a, b, u, p);
    CHECK(d[0] == doctest::Approx(ref[0]).epsilon(1e-14));
    CHECK(d[1] == doctest::Approx(ref[1]).epsilon(1e-14));
  }
}

TEST_CASE("derivative at the setpoint") {
  const ModelParams p;
  const StateVec d = cstr_derivative(kXsp, kUsp, p);
  CHECK(d.lpNorm<Eigen::Infinity>() <= 2e-3);
  const StateVec d0 = cstr_derivative(kXsp, u1(0.0), p);
  CHECK(d0[1] == doctest::Approx(0.02397).epsilon(1e-3));
}

TEST_CASE("input has no effect when a_coef is zero") {
  ModelParams p;
  p.a_coef = 0.0;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> x(0.1, 0.8), u(-5.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    const StateVec s = Eigen::Vector2d(x(rng), x(rng));
    CHECK(cstr_derivative(s, u1(u(rng)), p) == cstr_derivative(s, u1(u(rng)), p));
  }
}

TEST_CASE("euler_step identities") {
  const ModelParams p;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> x(0.1, 0.8), u(0.0, 2.0), h(0.0, 0.5);
  for (int i = 0; i < 100; ++i) {
    const StateVec s = Eigen::Vector2d(x(rng), x(rng));
    const InputVec in = u1(u(rng));
    CHECK(euler_step(s, in, 0.0, p) == s);
    const double hh = h(rng);
    const StateVec d = cstr_derivative(s, in, p);
    const StateVec step = euler_step(s, in, hh, p);
    // x + h f is the definition; compare in the same arithmetic order.
    CHECK(step == s + hh * d);
    if (hh > 0.0) CHECK(((step - s) / hh - d).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  CHECK((euler_step(kXsp, kUsp, 0.1, p) - kXsp).lpNorm<Eigen::Infinity>() <= 1e-4);
  CHECK_THROWS_AS(euler_step(kXsp, kUsp, -0.1, p), DomainError);
}

TEST_CASE("hold_step composes Euler steps") {
  const ModelParams p;
  const StateVec x = Eigen::Vector2d(0.3, 0.7);
  const InputVec u = u1(1.3);
  SimGrid one = SimGrid::make(0.1, 0.1);
  CHECK(one.substeps == 1);
  CHECK(hold_step(x, u, one, p) == euler_step(x, u, 0.1, p));
  SimGrid two = SimGrid::make(0.1, 0.2);
  CHECK(hold_step(x, u, two, p) == euler_step(euler_step(x, u, 0.1, p), u, 0.1, p));
  StateVec y = x;
  for (int i = 0; i < 30; ++i) y = euler_step(y, u, 0.1, p);
  CHECK(hold_step(x, u, SimGrid{}, p) == y);
  CHECK_THROWS(SimGrid::make(0.1, 0.25));
  CHECK_THROWS(SimGrid::make(-0.1, 3.0));
}

TEST_CASE("setpoint drift over one control interval") {
  // The setpoint is only approximately an equilibrium of the Euler map. The
  // measured drift is reported here; the acceptance binary holds the 1e-3 bar.
  const double drift = (hold_step(kXsp, kUsp, SimGrid{}, ModelParams{}) - kXsp).lpNorm<Eigen::Infinity>();
  MESSAGE("hold_step drift at the setpoint: " << drift);
  CHECK(drift < 1e-2);
}

TEST_CASE("rollout") {
  const ModelParams p;
  const SimGrid g;
  const StateVec x0 = Eigen::Vector2d(0.2, 0.7);
  std::vector<InputVec> us = {u1(0.5)};
  auto r = rollout(x0, us, g, p);
  REQUIRE(r.size() == 2);
  CHECK(r[0] == x0);
  CHECK(r[1] == hold_step(x0, us[0], g, p));

  std::vector<InputVec> a = {u1(0.1), u1(1.9), u1(0.7)}, b = {u1(1.2), u1(0.0)};
  std::vector<InputVec> ab = a;
  ab.insert(ab.end(), b.begin(), b.end());
  const auto ra = rollout(x0, a, g, p);
  const auto rb = rollout(ra.back(), b, g, p);
  const auto rab = rollout(x0, ab, g, p);
  REQUIRE(rab.size() == 6);
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(rab[i] == ra[i]);
  for (std::size_t i = 0; i < rb.size(); ++i) CHECK(rab[ra.size() - 1 + i] == rb[i]);
  CHECK_THROWS(rollout(x0, {}, g, p));

  // Constant u_sp from the setpoint: the drift accumulates along the unstable
  // direction, so only the first steps stay close.
  const auto rs = rollout(kXsp, std::vector<InputVec>(5, kUsp), g, p);
  CHECK((rs[1] - kXsp).lpNorm<Eigen::Infinity>() <= 1e-2);
  for (const auto& x : rs) CHECK((x - kXsp).lpNorm<Eigen::Infinity>() <= 1e-1);
}

TEST_CASE("numeric domain errors and determinism") {
  const ModelParams p;
  CHECK_THROWS_AS(cstr_derivative(Eigen::Vector2d(0.3, -1e-3), u1(0.0), p), NumericDomainError);
  CHECK_THROWS_AS(cstr_derivative(Eigen::Vector2d(NAN, 0.6), u1(0.0), p), NumericDomainError);
  const StateVec x = Eigen::Vector2d(0.31, 0.66);
  CHECK(hold_step(x, u1(0.9), SimGrid{}, p) == hold_step(x, u1(0.9), SimGrid{}, p));
}

TEST_CASE("bounds helpers") {
  const Bounds b = Bounds::cstr_default();
  CHECK(b.contains_state(kXsp));
  CHECK_FALSE(b.contains_state(Eigen::Vector2d(0.5, 0.6)));
  CHECK(b.state_excess_max(Eigen::Vector2d(0.5, 0.6)) == doctest::Approx(0.5 - 0.4632));
  CHECK(b.state_excess_max(kXsp) == 0.0);
  Bounds bad = b;
  bad.x_lo[0] = 0.9;
  CHECK_THROWS(bad.validate());
  ModelParams mp;
  mp.tau = 0.0;
  CHECK_THROWS(mp.validate());
}
