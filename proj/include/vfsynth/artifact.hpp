#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "vfsynth/config.hpp"
#include "vfsynth/ocp.hpp"
#include "vfsynth/scenario.hpp"

namespace vfsynth {

struct SynthesisDiagnostics {
  double mse = 0.0;
  double max_residual = 0.0;
  double max_descent_residual = 0.0;
  double kkt_stationarity = 0.0;
  double kkt_complementarity = 0.0;
  int active_count = 0;
  int iters = 0;
  QpStatus status = QpStatus::max_iters;
  bool descent = true;
  bool nonneg = false;
  double lambda = 0.0;
};

struct Provenance {
  std::string data_digest;
  std::uint64_t seed = 0;
  std::string version = VFSYNTH_VERSION;
  std::string expert_digest;
};

/// A trained terminal cost with everything needed to run it: the basis, the
/// coefficients, the certificate, diagnostics and the run configuration.
struct ModelArtifact {
  Basis basis;
  ThetaVec theta;
  ScenarioCertificate certificate;
  SynthesisDiagnostics diagnostics;
  Provenance provenance;
  RunConfig config;

  std::shared_ptr<const LearnedModel> model() const;
};

Json to_json(const ModelArtifact& a);
ModelArtifact artifact_from_json(const Json& j);
void save_artifact(const ModelArtifact& a, const std::string& path);
ModelArtifact load_artifact(const std::string& path);

}  // namespace vfsynth
