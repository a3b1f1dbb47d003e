#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vfsynth/artifact.hpp"
#include "vfsynth/config.hpp"

namespace vfsynth {

/// Flags shared by every subcommand.
struct CommonArgs {
  std::string config_path;  // empty: built-in defaults (or the artifact's embedded config)
  std::string out_dir;      // empty: the config's out_dir
  std::optional<std::uint64_t> seed;
  int jobs = 0;  // 0: VFSYNTH_JOBS, else all available threads
};

/// What a command produced. Contract failures are thrown as vfsynth::Error.
struct CommandOutput {
  Json summary;
  std::string text;
  std::vector<std::string> files;
  std::vector<std::string> warnings;
};

struct SampleSizeArgs {
  double eps = 0.2;
  double beta = 1e-10;
  long dim = 75;
};
CommandOutput cmd_sample_size(const SampleSizeArgs& a);

struct GenDataArgs {
  CommonArgs common;
  int count = 0;  // 0: config value
  std::string out;  // empty: <out_dir>/demos.csv
};
CommandOutput cmd_gen_data(const GenDataArgs& a);

struct SynthArgs {
  CommonArgs common;
  std::string data;
  std::optional<double> eps;
  std::optional<double> beta;
  bool descent = true;
  std::optional<bool> nonneg;
  std::string out;  // empty: <out_dir>/model.json
};
CommandOutput cmd_synth(const SynthArgs& a);

struct VerifyArgs {
  CommonArgs common;
  std::string model;
  std::string data;  // empty: fresh uniform test set solved by the expert
  int m_test = 0;    // 0: config value
  std::string mode;  // empty: config value
  std::optional<double> tol;
};
CommandOutput cmd_verify(const VerifyArgs& a);

struct SimulateArgs {
  CommonArgs common;
  std::string model;            // required for the proposed policy
  std::string policy = "proposed";  // proposed | expert
  std::optional<StateVec> x0;   // empty: the twelve boundary states
  int steps = 0;                // 0: config value
};
CommandOutput cmd_simulate(const SimulateArgs& a);

struct CompareArgs {
  CommonArgs common;
  std::string model;
  int steps = 0;
};
CommandOutput cmd_compare(const CompareArgs& a);

struct AdaptArgs {
  CompareArgs compare;
  std::optional<double> x2_lo;  // empty: config value
};
CommandOutput cmd_adapt(const AdaptArgs& a);

/// Default config merged with --config, --out-dir and validated.
RunConfig resolve_config(const CommonArgs& c, const RunConfig* fallback = nullptr);

/// Picks exactly m of n indices without replacement, sorted; seeded.
std::vector<int> subsample_indices(int n, int m, std::uint64_t seed);

}  // namespace vfsynth
