#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "vfsynth/error.hpp"
#include "vfsynth/qp_solver.hpp"

using namespace vfsynth;

namespace {

struct RandomQp {
  Eigen::MatrixXd H, A;
  Eigen::VectorXd g, b;
};

RandomQp random_qp(std::mt19937_64& rng, int n, int m) {
  std::normal_distribution<double> n01;
  RandomQp q;
  Eigen::MatrixXd L(n, n);
  for (auto& v : L.reshaped()) v = n01(rng);
  q.H = L * L.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  q.g.resize(n);
  for (auto& v : q.g) v = n01(rng);
  q.A.resize(m, n);
  for (auto& v : q.A.reshaped()) v = n01(rng);
  // A feasible interior point keeps every instance feasible.
  Eigen::VectorXd x0(n);
  for (auto& v : x0) v = 0.3 * n01(rng);
  q.b = q.A * x0;
  std::uniform_real_distribution<double> slack(0.0, 1.0);
  for (auto& v : q.b) v += slack(rng);
  return q;
}

}  // namespace

TEST_CASE("dense QP agrees with active-set enumeration") {
  std::mt19937_64 rng(42);
  int checked = 0;
  for (int k = 0; k < 200; ++k) {
    const int n = 2 + k % 4;
    const int m = 1 + (k * 7) % 8;
    const RandomQp q = random_qp(rng, n, m);
    for (QpSelection sel : {QpSelection::most_violated, QpSelection::first_violated}) {
      QpOptions o;
      o.selection = sel;
      const QpSolution s = solve_dense_qp(q.H, q.g, q.A, q.b, o);
      const auto ref = oracle::brute_force_qp(q.H, q.g, q.A, q.b);
      REQUIRE(ref.found);
      REQUIRE(s.status == QpStatus::optimal);
      CHECK(oracle::rel_error(s.x, ref.x, 1.0) <= 1e-8);
      CHECK((q.A * s.x - q.b).maxCoeff() <= 1e-9);
      CHECK(s.mu.minCoeff() >= 0.0);
      // Stationarity and complementarity.
      const Eigen::VectorXd r = q.H * s.x + q.g + q.A.transpose() * s.mu;
      CHECK(r.lpNorm<Eigen::Infinity>() <= 1e-8 * (1.0 + q.g.lpNorm<Eigen::Infinity>()));
      CHECK(std::abs(s.mu.dot(q.A * s.x - q.b)) <= 1e-8);
      ++checked;
    }
  }
  CHECK(checked == 400);
}

TEST_CASE("no constraints gives the Newton point") {
  const Eigen::Matrix2d H{{2.0, 0.5}, {0.5, 1.0}};
  const Eigen::Vector2d g(1.0, -1.0);
  const QpSolution s = solve_dense_qp(H, g, Eigen::MatrixXd(0, 2), Eigen::VectorXd(0));
  CHECK(s.status == QpStatus::optimal);
  CHECK(oracle::rel_error(s.x, Eigen::Vector2d(H.ldlt().solve(-g))) <= 1e-14);
  CHECK(s.active.empty());
}

TEST_CASE("one-dimensional example") {
  // min theta^2 - 2 theta  s.t.  theta <= 0: theta = 0 with multiplier 2.
  const Eigen::MatrixXd H = Eigen::MatrixXd::Constant(1, 1, 2.0);
  const Eigen::VectorXd g = Eigen::VectorXd::Constant(1, -2.0);
  const Eigen::MatrixXd A = Eigen::MatrixXd::Constant(1, 1, 1.0);
  const Eigen::VectorXd b = Eigen::VectorXd::Zero(1);
  const QpSolution s = solve_dense_qp(H, g, A, b);
  CHECK(s.status == QpStatus::optimal);
  CHECK(std::abs(s.x[0]) <= 1e-15);
  CHECK(s.mu[0] == doctest::Approx(2.0));
}

TEST_CASE("zero rows and infeasibility") {
  const Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::Vector2d g(-1.0, -1.0);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(1, 2);
  SUBCASE("consistent zero row is ignored") {
    const QpSolution s = solve_dense_qp(H, g, A, Eigen::VectorXd::Constant(1, 0.0));
    CHECK(s.status == QpStatus::optimal);
    CHECK(s.x.isApprox(Eigen::Vector2d(1.0, 1.0)));
  }
  SUBCASE("inconsistent zero row") {
    const QpSolution s = solve_dense_qp(H, g, A, Eigen::VectorXd::Constant(1, -1.0));
    CHECK(s.status == QpStatus::infeasible);
  }
  SUBCASE("contradictory rows") {
    Eigen::MatrixXd B(2, 2);
    B << 1.0, 0.0, -1.0, 0.0;
    const QpSolution s = solve_dense_qp(H, g, B, Eigen::Vector2d(-1.0, -1.0));
    CHECK(s.status == QpStatus::infeasible);
  }
  SUBCASE("bad inputs") {
    CHECK_THROWS_AS(solve_dense_qp(-H, g, A, Eigen::VectorXd::Zero(1)), DomainError);
    CHECK_THROWS_AS(solve_dense_qp(H, g, A, Eigen::VectorXd::Zero(2)), DimensionError);
  }
}

TEST_CASE("status strings") {
  for (QpStatus s : {QpStatus::optimal, QpStatus::infeasible, QpStatus::max_iters}) {
    CHECK(qp_status_from_string(to_string(s)) == s);
  }
  CHECK_THROWS(qp_status_from_string("done"));
}
