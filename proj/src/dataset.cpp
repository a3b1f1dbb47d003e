#include "vfsynth/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>

#include <omp.h>

#include "vfsynth/config.hpp"
#include "vfsynth/error.hpp"
#include "vfsynth/parallel.hpp"
#include "vfsynth/random.hpp"

namespace vfsynth {

std::size_t DemoSet::failures() const {
  std::size_t n = 0;
  for (const auto& t : tuples) n += t.status != SolveStatus::converged;
  return n;
}

std::vector<DemoTuple> DemoSet::converged() const {
  std::vector<DemoTuple> out;
  for (const auto& t : tuples) {
    if (t.status == SolveStatus::converged) out.push_back(t);
  }
  return out;
}

std::vector<StateVec> sample_uniform_states(int count, const Bounds& box, std::uint64_t seed) {
  if (count < 0) throw DomainError("sample count must be nonnegative");
  box.validate();
  const int n = box.state_dim();
  std::vector<StateVec> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto rng = stream_for(seed, static_cast<std::uint64_t>(i));
    StateVec x(n);
    for (int k = 0; k < n; ++k) x[k] = box.x_lo[k] + (box.x_hi[k] - box.x_lo[k]) * uniform01(rng);
    out[static_cast<std::size_t>(i)] = std::move(x);
  }
  return out;
}

namespace {

DemoTuple demo_at(OcpSolver& solver, const StateVec& x) {
  DemoTuple t;
  t.x = x;
  const OcpSolution sol = solver.solve(x);
  t.u = sol.input(0, kCstrInputDim);
  t.j_value = sol.value;
  t.status = sol.status;
  if (!t.u.allFinite() || !std::isfinite(t.j_value)) t.status = SolveStatus::numeric_error;
  return t;
}

DemoSet empty_set(const OcpSpec& expert) {
  DemoSet set;
  set.box = expert.bounds;
  set.expert_config_digest = ocp_digest(expert);
  set.created = utc_timestamp();
  return set;
}

}  // namespace

DemoSet generate_demos_serial(const std::vector<StateVec>& states, const OcpSpec& expert) {
  DemoSet set = empty_set(expert);
  OcpSolver solver(expert);
  for (const auto& x : states) set.tuples.push_back(demo_at(solver, x));
  return set;
}

DemoSet generate_demos(const std::vector<StateVec>& states, const OcpSpec& expert, int jobs) {
  jobs = resolve_jobs(jobs);
  if (jobs <= 1) return generate_demos_serial(states, expert);
  DemoSet set = empty_set(expert);
  const long n = static_cast<long>(states.size());
  set.tuples.resize(states.size());
  std::exception_ptr err;
#pragma omp parallel num_threads(jobs)
  {
    OcpSolver solver(expert);
#pragma omp for schedule(dynamic, 4)
    for (long i = 0; i < n; ++i) {
      try {
        set.tuples[static_cast<std::size_t>(i)] = demo_at(solver, states[static_cast<std::size_t>(i)]);
      } catch (...) {
#pragma omp critical
        if (!err) err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
  return set;
}

void check_failure_budget(const DemoSet& set, double max_fraction) {
  const std::size_t f = set.failures();
  if (set.tuples.empty()) return;
  if (static_cast<double>(f) > max_fraction * static_cast<double>(set.tuples.size())) {
    throw Error(std::to_string(f) + " of " + std::to_string(set.tuples.size()) +
                " expert solves failed, above the allowed fraction");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string meta_path_for(const std::string& csv_path) {
  const std::string ext = ".csv";
  std::string stem = csv_path;
  if (stem.size() >= ext.size() && stem.compare(stem.size() - ext.size(), ext.size(), ext) == 0) {
    stem.resize(stem.size() - ext.size());
  }
  return stem + ".meta.json";
}

void save_demos(const DemoSet& set, const std::string& csv_path) {
  std::string out = "x1,x2,u,j,status\n";
  for (const auto& t : set.tuples) {
    if (t.x.size() != 2 || t.u.size() != 1) throw DimensionError("dataset CSV holds 2 states and 1 input");
    out += format_double(t.x[0]) + "," + format_double(t.x[1]) + "," + format_double(t.u[0]) + "," +
           format_double(t.j_value) + "," + to_string(t.status) + "\n";
  }
  write_file(csv_path, out);
  Json meta;
  meta["seed"] = set.seed;
  meta["box"] = {{"x_lo", vector_to_json(set.box.x_lo)},
                 {"x_hi", vector_to_json(set.box.x_hi)},
                 {"u_lo", vector_to_json(set.box.u_lo)},
                 {"u_hi", vector_to_json(set.box.u_hi)}};
  meta["digest"] = set.expert_config_digest;
  meta["created"] = set.created;
  meta["rows"] = set.tuples.size();
  meta["failures"] = set.failures();
  write_file(meta_path_for(csv_path), meta.dump(2) + "\n");
}

namespace {

double parse_double(const std::string& s, std::size_t line) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) {
    throw FormatError("line " + std::to_string(line) + ": malformed number '" + s + "'");
  }
  if (!std::isfinite(v)) throw FormatError("line " + std::to_string(line) + ": non-finite field");
  return v;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

DemoSet load_demos(const std::string& csv_path) {
  std::istringstream in(read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(csv_path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x1,x2,u,j,status") throw FormatError(csv_path + ": malformed header '" + line + "'");
  DemoSet set;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != 5) {
      throw FormatError(csv_path + ": line " + std::to_string(lineno) + " has " + std::to_string(f.size()) +
                        " columns, expected 5");
    }
    DemoTuple t;
    t.x = Eigen::Vector2d(parse_double(f[0], lineno), parse_double(f[1], lineno));
    t.u = Eigen::VectorXd::Constant(1, parse_double(f[2], lineno));
    t.j_value = parse_double(f[3], lineno);
    t.status = solve_status_from_string(f[4]);
    set.tuples.push_back(std::move(t));
  }
  const std::string meta_path = meta_path_for(csv_path);
  std::ifstream probe(meta_path);
  if (probe) {
    try {
      const Json meta = Json::parse(read_file(meta_path));
      set.seed = meta.value("seed", std::uint64_t{0});
      set.expert_config_digest = meta.value("digest", std::string{});
      set.created = meta.value("created", std::string{});
      if (meta.contains("box")) {
        const Json& b = meta["box"];
        set.box.x_lo = vector_from_json(b.at("x_lo"));
        set.box.x_hi = vector_from_json(b.at("x_hi"));
        set.box.u_lo = vector_from_json(b.at("u_lo"));
        set.box.u_hi = vector_from_json(b.at("u_hi"));
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(meta_path + ": " + e.what());
    }
  }
  return set;
}

std::vector<std::string> check_digest(const DemoSet& set, const OcpSpec& expert) {
  std::vector<std::string> warnings;
  const std::string want = ocp_digest(expert);
  if (set.expert_config_digest.empty()) {
    warnings.push_back("dataset has no expert digest; cannot confirm it matches the expert configuration");
  } else if (set.expert_config_digest != want) {
    warnings.push_back("dataset expert digest " + set.expert_config_digest +
                       " does not match the configured expert " + want);
  }
  return warnings;
}

}  // namespace vfsynth
