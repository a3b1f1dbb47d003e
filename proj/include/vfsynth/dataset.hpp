#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vfsynth/dynamics.hpp"
#include "vfsynth/ocp.hpp"

namespace vfsynth {

/// One expert demonstration (x, kappa(x), J(x)).
struct DemoTuple {
  StateVec x;
  InputVec u;
  double j_value = 0.0;
  SolveStatus status = SolveStatus::converged;

  bool operator==(const DemoTuple& o) const {
    return x == o.x && u == o.u && j_value == o.j_value && status == o.status;
  }
};

struct DemoSet {
  std::vector<DemoTuple> tuples;
  std::uint64_t seed = 0;
  Bounds box = Bounds::cstr_default();
  std::string expert_config_digest;
  std::string created;  // ISO-8601 UTC; kept out of the CSV so bytes stay reproducible

  std::size_t failures() const;
  /// Tuples whose expert solve converged, in index order.
  std::vector<DemoTuple> converged() const;
};

/// Uniform i.i.d. states in the box; index i draws from stream (seed, i).
std::vector<StateVec> sample_uniform_states(int count, const Bounds& box, std::uint64_t seed);

/// Solves the expert OCP at every state. Parallel over states with one solver
/// per worker; output is identical for every job count.
DemoSet generate_demos(const std::vector<StateVec>& states, const OcpSpec& expert, int jobs);
/// Single-threaded reference for generate_demos.
DemoSet generate_demos_serial(const std::vector<StateVec>& states, const OcpSpec& expert);

/// Throws if more than max_fraction of the solves failed.
void check_failure_budget(const DemoSet& set, double max_fraction = 0.01);

/// Writes the CSV and the sidecar `<stem>.meta.json`.
void save_demos(const DemoSet& set, const std::string& csv_path);
DemoSet load_demos(const std::string& csv_path);
std::string meta_path_for(const std::string& csv_path);

/// Warnings (possibly none) when the set's digest differs from the expert's.
std::vector<std::string> check_digest(const DemoSet& set, const OcpSpec& expert);

/// Bitwise-lossless decimal form of a double (17 significant digits).
std::string format_double(double v);

}  // namespace vfsynth
