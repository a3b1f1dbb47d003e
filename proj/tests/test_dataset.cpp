#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "vfsynth/config.hpp"
#include "vfsynth/dataset.hpp"
#include "vfsynth/error.hpp"

using namespace vfsynth;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("vfsynth_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Two-sided Kolmogorov-Smirnov statistic against U(0, 1).
double ks_uniform(std::vector<double> u) {
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - u[i], u[i] - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace

TEST_CASE("uniform state sampling") {
  const Bounds box = Bounds::cstr_default();
  const auto a = sample_uniform_states(4000, box, 7);
  CHECK(a == sample_uniform_states(4000, box, 7));
  CHECK(a != sample_uniform_states(4000, box, 8));
  // Prefix stability: index i depends only on (seed, i).
  const auto pre = sample_uniform_states(10, box, 7);
  CHECK(std::equal(pre.begin(), pre.end(), a.begin()));
  for (int k = 0; k < 2; ++k) {
    std::vector<double> u;
    double mean = 0.0;
    for (const auto& x : a) {
      CHECK(box.contains_state(x));
      u.push_back((x[k] - box.x_lo[k]) / (box.x_hi[k] - box.x_lo[k]));
      mean += u.back();
    }
    mean /= static_cast<double>(a.size());
    CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / 4000.0));
    // 1.63 / sqrt(n) is the 1 percent critical value.
    CHECK(ks_uniform(u) < 1.63 / std::sqrt(4000.0));
  }
  CHECK(sample_uniform_states(0, box, 1).empty());
  CHECK_THROWS_AS(sample_uniform_states(-1, box, 1), DomainError);
}

TEST_CASE("demonstrations at the setpoint and in parallel") {
  const RunConfig cfg;
  const OcpSpec expert = cfg.demo_spec();
  std::vector<StateVec> xs = {Eigen::Vector2d(0.2632, 0.6519)};
  const auto more = sample_uniform_states(23, cfg.bounds, 11);
  xs.insert(xs.end(), more.begin(), more.end());
  const DemoSet s = generate_demos_serial(xs, expert);
  REQUIRE(s.tuples.size() == xs.size());
  CHECK(s.tuples[0].j_value <= 1e-4);
  CHECK(s.tuples[0].status == SolveStatus::converged);
  CHECK(std::abs(s.tuples[0].u[0] - 0.7853) <= 5e-2);
  for (const auto& t : s.tuples) {
    CHECK(t.u[0] >= 0.0);
    CHECK(t.u[0] <= 2.0);
    CHECK(t.j_value >= 0.0);
  }
  CHECK(s.expert_config_digest == ocp_digest(expert));
  const DemoSet p = generate_demos(xs, expert, 4);
  CHECK(p.tuples == s.tuples);
  CHECK(check_digest(s, expert).empty());
}

TEST_CASE("CSV round trip and digests") {
  const fs::path dir = scratch("dataset");
  DemoSet s;
  s.seed = 99;
  s.expert_config_digest = "0123456789abcdef";
  for (int i = 0; i < 5; ++i) {
    DemoTuple t;
    t.x = Eigen::Vector2d(0.1 + 0.0123456789 * i, 0.5 + 1.0 / 3.0 * 0.1 * i);
    t.u = Eigen::VectorXd::Constant(1, std::sqrt(2.0) / (i + 1));
    t.j_value = std::exp(-i) * 1e-7;
    t.status = i == 3 ? SolveStatus::max_iters : SolveStatus::converged;
    s.tuples.push_back(t);
  }
  const std::string csv = (dir / "d.csv").string();
  save_demos(s, csv);
  CHECK(fs::exists(dir / "d.meta.json"));
  const DemoSet r = load_demos(csv);
  CHECK(r.tuples == s.tuples);
  CHECK(r.seed == 99);
  CHECK(r.failures() == 1);
  CHECK(r.converged().size() == 4);
  save_demos(r, (dir / "e.csv").string());
  CHECK(read_file(csv) == read_file((dir / "e.csv").string()));

  const OcpSpec expert = RunConfig{}.demo_spec();
  CHECK(check_digest(r, expert).size() == 1);
  DemoSet bare = r;
  bare.expert_config_digest.clear();
  CHECK(check_digest(bare, expert).size() == 1);

  CHECK_THROWS_AS(check_failure_budget(r, 0.1), Error);
  CHECK_NOTHROW(check_failure_budget(r, 0.2));
}

TEST_CASE("malformed CSV files") {
  const fs::path dir = scratch("malformed");
  auto load = [&](const std::string& body) {
    const std::string p = (dir / "m.csv").string();
    write_file(p, body);
    return load_demos(p);
  };
  CHECK_THROWS_AS(load(""), FormatError);
  CHECK_THROWS_AS(load("a,b\n"), FormatError);
  CHECK_THROWS_AS(load("x1,x2,u,j,status\n0.1,0.5,1\n"), FormatError);
  CHECK_THROWS_AS(load("x1,x2,u,j,status\n0.1,0.5,abc,1,converged\n"), FormatError);
  CHECK_THROWS_AS(load("x1,x2,u,j,status\n0.1,nan,1,1,converged\n"), FormatError);
  CHECK_THROWS_AS(load("x1,x2,u,j,status\n0.1,0.5,1,1,happy\n"), FormatError);
  CHECK(load("x1,x2,u,j,status\n0.1,0.5,1,1,converged\n").tuples.size() == 1);
  CHECK_THROWS(load_demos((dir / "missing.csv").string()));
}

TEST_CASE("format_double is lossless") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.7853}) CHECK(std::stod(format_double(v)) == v);
}
