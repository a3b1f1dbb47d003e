#include "vfsynth/artifact.hpp"

#include "vfsynth/error.hpp"

namespace vfsynth {

std::shared_ptr<const LearnedModel> ModelArtifact::model() const {
  auto m = std::make_shared<LearnedModel>();
  m->basis = basis;
  m->theta = theta;
  return m;
}

Json to_json(const ModelArtifact& a) {
  Json j;
  j["basis"] = to_json(a.basis);
  j["theta"] = vector_to_json(a.theta);
  j["certificate"] = {{"eps", a.certificate.eps},
                      {"beta", a.certificate.beta},
                      {"m", a.certificate.m_samples},
                      {"d", a.certificate.dim}};
  const SynthesisDiagnostics& d = a.diagnostics;
  j["diagnostics"] = {{"mse", d.mse},
                      {"max_residual", d.max_residual},
                      {"max_descent_residual", d.max_descent_residual},
                      {"kkt_stationarity", d.kkt_stationarity},
                      {"kkt_complementarity", d.kkt_complementarity},
                      {"active_count", d.active_count},
                      {"iters", d.iters},
                      {"status", to_string(d.status)},
                      {"descent", d.descent},
                      {"nonneg", d.nonneg},
                      {"lambda", d.lambda}};
  j["provenance"] = {{"data_digest", a.provenance.data_digest},
                     {"seed", a.provenance.seed},
                     {"version", a.provenance.version},
                     {"expert_digest", a.provenance.expert_digest}};
  j["config"] = to_json(a.config);
  return j;
}

ModelArtifact artifact_from_json(const Json& j) {
  ModelArtifact a;
  try {
    a.basis = basis_from_json(j.at("basis"));
    a.theta = vector_from_json(j.at("theta"));
    const Json& c = j.at("certificate");
    a.certificate.eps = c.at("eps").get<double>();
    a.certificate.beta = c.at("beta").get<double>();
    a.certificate.m_samples = c.at("m").get<long>();
    a.certificate.dim = c.at("d").get<long>();
    const Json& d = j.at("diagnostics");
    a.diagnostics.mse = d.at("mse").get<double>();
    a.diagnostics.max_residual = d.at("max_residual").get<double>();
    a.diagnostics.status = qp_status_from_string(d.at("status").get<std::string>());
    a.diagnostics.max_descent_residual = d.value("max_descent_residual", 0.0);
    a.diagnostics.kkt_stationarity = d.value("kkt_stationarity", 0.0);
    a.diagnostics.kkt_complementarity = d.value("kkt_complementarity", 0.0);
    a.diagnostics.active_count = d.value("active_count", 0);
    a.diagnostics.iters = d.value("iters", 0);
    a.diagnostics.descent = d.value("descent", true);
    a.diagnostics.nonneg = d.value("nonneg", false);
    a.diagnostics.lambda = d.value("lambda", 0.0);
    const Json& p = j.at("provenance");
    a.provenance.data_digest = p.at("data_digest").get<std::string>();
    a.provenance.seed = p.at("seed").get<std::uint64_t>();
    a.provenance.version = p.at("version").get<std::string>();
    a.provenance.expert_digest = p.value("expert_digest", std::string{});
    a.config = j.contains("config") ? config_from_json(j["config"]) : RunConfig{};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model artifact: ") + e.what());
  }
  if (a.theta.size() != a.basis.size()) throw FormatError("model artifact: theta length does not match the basis");
  if (!a.theta.allFinite()) throw FormatError("model artifact: non-finite theta");
  return a;
}

void save_artifact(const ModelArtifact& a, const std::string& path) { write_file(path, to_json(a).dump(2) + "\n"); }

ModelArtifact load_artifact(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  return artifact_from_json(j);
}

}  // namespace vfsynth
