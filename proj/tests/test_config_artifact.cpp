#include <filesystem>

#include "doctest.h"
#include "vfsynth/artifact.hpp"
#include "vfsynth/commands.hpp"
#include "vfsynth/config.hpp"
#include "vfsynth/error.hpp"

using namespace vfsynth;
namespace fs = std::filesystem;

TEST_CASE("config defaults and round trip") {
  const RunConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.expert.horizon == 50);
  CHECK(c.basis.d == 75);
  CHECK(c.certificate.eps == 0.2);
  CHECK(c.certificate.beta == 1e-10);
  const Json j = to_json(c);
  CHECK(to_json(config_from_json(j)) == j);
  CHECK(c.demo_spec().soft_state_weight == 0.0);
  CHECK(c.expert_spec().soft_state_weight == 1e4);
  CHECK(ocp_digest(c.expert_spec()) != ocp_digest(c.demo_spec()));
  CHECK(ocp_digest(c.expert_spec()) == ocp_digest(RunConfig{}.expert_spec()));
}

TEST_CASE("strict config parsing") {
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"bogus": 1})")), FormatError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"basis": {"dd": 3}})")), FormatError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"basis": {"d": "three"}})")), FormatError);
  const RunConfig c = config_from_json(Json::parse(R"({"basis": {"d": 12}, "certificate": {"eps": 0.1}})"));
  CHECK(c.basis.d == 12);
  CHECK(c.certificate.eps == 0.1);
  CHECK(c.expert.horizon == 50);
  RunConfig bad = c;
  bad.certificate.eps = 1.2;
  CHECK_THROWS_AS(bad.validate(), DomainError);
  bad = c;
  bad.evaluation.mode = "both";
  CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("fnv1a digest") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
}

TEST_CASE("artifact round trip and validation") {
  ModelArtifact a;
  BasisSpec s;
  s.d = 4;
  s.center_strategy = CenterStrategy::uniform_grid;
  a.basis = fit_basis(s, {}, Bounds::cstr_default(), Eigen::Vector2d(0.2632, 0.6519));
  a.theta = Eigen::Vector4d(1.0 / 3.0, -2.0, 1e-17, 4.5);
  a.certificate = {0.2, 1e-10, 683, 4};
  a.provenance.data_digest = "00ff";
  a.diagnostics.mse = 0.125;
  const fs::path dir = fs::temp_directory_path() / "vfsynth_test_artifact";
  fs::remove_all(dir);
  const std::string p = (dir / "m.json").string();
  save_artifact(a, p);
  const ModelArtifact b = load_artifact(p);
  CHECK(b.theta == a.theta);
  CHECK(b.basis == a.basis);
  CHECK(b.certificate.m_samples == 683);
  CHECK(b.diagnostics.mse == 0.125);
  CHECK(b.provenance.data_digest == "00ff");
  CHECK(b.model()->theta == a.theta);

  Json j = to_json(a);
  j["theta"] = Json::array({1.0, 2.0});
  CHECK_THROWS_AS(artifact_from_json(j), FormatError);
  j = to_json(a);
  j["basis"]["widths"][0] = -1.0;
  CHECK_THROWS_AS(artifact_from_json(j), FormatError);
  CHECK_THROWS(load_artifact((dir / "missing.json").string()));
}

TEST_CASE("subsampling") {
  const auto a = subsample_indices(100, 30, 5);
  CHECK(a.size() == 30);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK(a == subsample_indices(100, 30, 5));
  CHECK(a != subsample_indices(100, 30, 6));
  const auto all = subsample_indices(10, 10, 1);
  for (int i = 0; i < 10; ++i) CHECK(all[static_cast<std::size_t>(i)] == i);
}
