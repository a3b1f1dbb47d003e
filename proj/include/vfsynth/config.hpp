#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "json.hpp"
#include "vfsynth/dynamics.hpp"
#include "vfsynth/ocp.hpp"
#include "vfsynth/value_function.hpp"

namespace vfsynth {

using Json = nlohmann::json;

struct ExpertConfig {
  int horizon = 50;
  TerminalCost::Kind terminal = TerminalCost::Kind::quadratic;
  /// Penalty weight in closed loop; 0 disables the state constraints entirely.
  double soft_state_weight = 1e4;
  /// Penalty weight when generating demonstrations. Data states lie inside
  /// the box, so 0 keeps the value targets free of penalty terms.
  double data_soft_state_weight = 0.0;
  double solver_tol = 1e-8;
  int max_iters = 500;
};

struct ProposedConfig {
  int horizon = 1;
  double soft_state_weight = 1e4;
  double solver_tol = 1e-8;
  int max_iters = 500;
  int multistart_grid = 21;
};

struct SynthesisConfig {
  double lambda = 1e-8;
  double feas_tol = 1e-8;
  double kkt_tol = 1e-6;
  int max_iters = 20000;
  bool nonneg = false;
};

struct CertificateConfig {
  double eps = 0.2;
  double beta = 1e-10;
};

struct EvaluationConfig {
  int m_test = 6226;
  double tol = 1e-9;
  std::string mode = "mpc_one_step";
  double conv_tol = 0.02;
  int steps = 100;
  double tightened_x2_lo = 0.64;
};

struct DataConfig {
  int count = 9068;
  double max_failure_fraction = 0.01;
};

struct SeedConfig {
  std::uint64_t data = 1;
  std::uint64_t test = 2;
  std::uint64_t subsample = 3;
};

struct RunConfig {
  ModelParams model;
  Bounds bounds = Bounds::cstr_default();
  SimGrid grid;
  StageCost stage;
  ExpertConfig expert;
  ProposedConfig proposed;
  BasisSpec basis;
  SynthesisConfig synthesis;
  CertificateConfig certificate;
  EvaluationConfig evaluation;
  DataConfig data;
  SeedConfig seeds;
  std::string out_dir = "out";

  void validate() const;
  /// Expert used in closed loop.
  OcpSpec expert_spec() const;
  /// Expert used to label demonstrations and test sets.
  OcpSpec demo_spec() const;
  OcpSpec proposed_spec(std::shared_ptr<const LearnedModel> model) const;
};

Json to_json(const RunConfig& c);
/// Strict parse: every key optional (defaults apply), unknown keys rejected.
RunConfig config_from_json(const Json& j);
RunConfig load_config(const std::string& path);

Json to_json(const OcpSpec& s);
Json to_json(const Basis& b);
Basis basis_from_json(const Json& j);
Json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const Json& j);

/// 64-bit FNV-1a, as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);
/// Digest of the canonical JSON of an OCP configuration.
std::string ocp_digest(const OcpSpec& s);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);
/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

}  // namespace vfsynth
