#include "vfsynth/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "vfsynth/error.hpp"

namespace vfsynth {

namespace {

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw FormatError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw FormatError("unknown config key '" + where + "." + it.key() + "'");
  }
}

template <class T>
void read(const Json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + "." + key + ": " + e.what());
  }
}

void read_vec(const Json& j, const char* key, Eigen::VectorXd& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = vector_from_json(j.at(key));
  } catch (const FormatError& e) {
    throw FormatError(where + "." + key + ": " + e.what());
  }
}

Json params_json(const ModelParams& p) {
  return {{"tau", p.tau},   {"k_rate", p.k_rate}, {"b_act", p.b_act},
          {"x_f", p.x_f},   {"x_c", p.x_c},       {"a_coef", p.a_coef}};
}

ModelParams params_from(const Json& j) {
  check_keys(j, {"tau", "k_rate", "b_act", "x_f", "x_c", "a_coef"}, "model");
  ModelParams p;
  read(j, "tau", p.tau, "model");
  read(j, "k_rate", p.k_rate, "model");
  read(j, "b_act", p.b_act, "model");
  read(j, "x_f", p.x_f, "model");
  read(j, "x_c", p.x_c, "model");
  read(j, "a_coef", p.a_coef, "model");
  return p;
}

Json bounds_json(const Bounds& b) {
  return {{"x_lo", vector_to_json(b.x_lo)},
          {"x_hi", vector_to_json(b.x_hi)},
          {"u_lo", vector_to_json(b.u_lo)},
          {"u_hi", vector_to_json(b.u_hi)}};
}

Bounds bounds_from(const Json& j) {
  check_keys(j, {"x_lo", "x_hi", "u_lo", "u_hi"}, "bounds");
  Bounds b = Bounds::cstr_default();
  read_vec(j, "x_lo", b.x_lo, "bounds");
  read_vec(j, "x_hi", b.x_hi, "bounds");
  read_vec(j, "u_lo", b.u_lo, "bounds");
  read_vec(j, "u_hi", b.u_hi, "bounds");
  return b;
}

Json grid_json(const SimGrid& g) { return {{"h", g.h}, {"t_s", g.t_s}}; }

SimGrid grid_from(const Json& j) {
  check_keys(j, {"h", "t_s"}, "grid");
  SimGrid g;
  double h = g.h, ts = g.t_s;
  read(j, "h", h, "grid");
  read(j, "t_s", ts, "grid");
  return SimGrid::make(h, ts);
}

Json stage_json(const StageCost& s) {
  return {{"q_weight", vector_to_json(s.q_weight)},
          {"r_weight", vector_to_json(s.r_weight)},
          {"x_sp", vector_to_json(s.x_sp)},
          {"u_sp", vector_to_json(s.u_sp)}};
}

StageCost stage_from(const Json& j) {
  check_keys(j, {"q_weight", "r_weight", "x_sp", "u_sp"}, "stage");
  StageCost s;
  read_vec(j, "q_weight", s.q_weight, "stage");
  read_vec(j, "r_weight", s.r_weight, "stage");
  read_vec(j, "x_sp", s.x_sp, "stage");
  read_vec(j, "u_sp", s.u_sp, "stage");
  return s;
}

TerminalCost::Kind terminal_kind_from(const std::string& s) {
  if (s == "zero") return TerminalCost::Kind::zero;
  if (s == "quadratic") return TerminalCost::Kind::quadratic;
  if (s == "learned") return TerminalCost::Kind::learned;
  throw FormatError("unknown terminal kind '" + s + "'");
}

Json basis_spec_json(const BasisSpec& b) {
  return {{"kind", to_string(b.kind)},
          {"d", b.d},
          {"center_strategy", to_string(b.center_strategy)},
          {"width_factor", b.width_factor},
          {"seed", b.seed},
          {"include_bias", b.include_bias},
          {"degree", b.degree},
          {"kmeans_iters", b.kmeans_iters}};
}

BasisSpec basis_spec_from(const Json& j) {
  check_keys(j, {"kind", "d", "center_strategy", "width_factor", "seed", "include_bias", "degree", "kmeans_iters"},
             "basis");
  BasisSpec b;
  std::string kind = to_string(b.kind), strat = to_string(b.center_strategy);
  read(j, "kind", kind, "basis");
  read(j, "center_strategy", strat, "basis");
  b.kind = basis_kind_from_string(kind);
  b.center_strategy = center_strategy_from_string(strat);
  read(j, "d", b.d, "basis");
  read(j, "width_factor", b.width_factor, "basis");
  read(j, "seed", b.seed, "basis");
  read(j, "include_bias", b.include_bias, "basis");
  read(j, "degree", b.degree, "basis");
  read(j, "kmeans_iters", b.kmeans_iters, "basis");
  return b;
}

}  // namespace

Json vector_to_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const Json& j) {
  if (!j.is_array()) throw FormatError("expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError("expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

void RunConfig::validate() const {
  model.validate();
  bounds.validate();
  grid.validate();
  stage.validate();
  basis.validate();
  if (expert.horizon < 1 || proposed.horizon < 1) throw DomainError("horizons must be at least 1");
  if (expert.terminal == TerminalCost::Kind::learned) {
    throw DomainError("the expert terminal cost must be zero or quadratic");
  }
  if (!(synthesis.lambda >= 0.0)) throw DomainError("synthesis.lambda must be nonnegative");
  if (!(synthesis.feas_tol > 0.0) || !(synthesis.kkt_tol > 0.0)) {
    throw DomainError("synthesis tolerances must be positive");
  }
  if (!(certificate.eps > 0.0 && certificate.eps < 1.0)) throw DomainError("certificate.eps must lie in (0, 1)");
  if (!(certificate.beta > 0.0 && certificate.beta < 1.0)) {
    throw DomainError("certificate.beta must lie in (0, 1)");
  }
  if (evaluation.mode != "mpc_one_step" && evaluation.mode != "expert_action") {
    throw DomainError("evaluation.mode must be mpc_one_step or expert_action");
  }
  if (evaluation.m_test < 0 || evaluation.steps < 1 || !(evaluation.conv_tol > 0.0) ||
      !(evaluation.tol >= 0.0)) {
    throw DomainError("invalid evaluation settings");
  }
  if (data.count < 0 || !(data.max_failure_fraction >= 0.0)) throw DomainError("invalid data settings");
  expert_spec().validate();
  demo_spec().validate();
}

OcpSpec RunConfig::expert_spec() const {
  OcpSpec s = vfsynth::expert_spec(expert.horizon);
  s.stage = stage;
  s.terminal = expert.terminal == TerminalCost::Kind::quadratic ? TerminalCost::quadratic(stage.x_sp)
                                                                 : TerminalCost::zero();
  s.bounds = bounds;
  s.grid = grid;
  s.params = model;
  s.soft_state_weight = expert.soft_state_weight;
  s.solver_tol = expert.solver_tol;
  s.max_iters = expert.max_iters;
  return s;
}

OcpSpec RunConfig::demo_spec() const {
  OcpSpec s = expert_spec();
  s.soft_state_weight = expert.data_soft_state_weight;
  return s;
}

OcpSpec RunConfig::proposed_spec(std::shared_ptr<const LearnedModel> model_ptr) const {
  OcpSpec s = vfsynth::proposed_spec(std::move(model_ptr), proposed.horizon);
  s.stage = stage;
  s.bounds = bounds;
  s.grid = grid;
  s.params = model;
  s.soft_state_weight = proposed.soft_state_weight;
  s.solver_tol = proposed.solver_tol;
  s.max_iters = proposed.max_iters;
  s.multistart_grid = proposed.multistart_grid;
  return s;
}

Json to_json(const RunConfig& c) {
  Json j;
  j["model"] = params_json(c.model);
  j["bounds"] = bounds_json(c.bounds);
  j["grid"] = grid_json(c.grid);
  j["stage"] = stage_json(c.stage);
  j["expert"] = {{"horizon", c.expert.horizon},
                 {"terminal", to_string(c.expert.terminal)},
                 {"soft_state_weight", c.expert.soft_state_weight},
                 {"data_soft_state_weight", c.expert.data_soft_state_weight},
                 {"solver_tol", c.expert.solver_tol},
                 {"max_iters", c.expert.max_iters}};
  j["proposed"] = {{"horizon", c.proposed.horizon},
                   {"soft_state_weight", c.proposed.soft_state_weight},
                   {"solver_tol", c.proposed.solver_tol},
                   {"max_iters", c.proposed.max_iters},
                   {"multistart_grid", c.proposed.multistart_grid}};
  j["basis"] = basis_spec_json(c.basis);
  j["synthesis"] = {{"lambda", c.synthesis.lambda},
                    {"feas_tol", c.synthesis.feas_tol},
                    {"kkt_tol", c.synthesis.kkt_tol},
                    {"max_iters", c.synthesis.max_iters},
                    {"nonneg", c.synthesis.nonneg}};
  j["certificate"] = {{"eps", c.certificate.eps}, {"beta", c.certificate.beta}};
  j["evaluation"] = {{"m_test", c.evaluation.m_test},
                     {"tol", c.evaluation.tol},
                     {"mode", c.evaluation.mode},
                     {"conv_tol", c.evaluation.conv_tol},
                     {"steps", c.evaluation.steps},
                     {"tightened_x2_lo", c.evaluation.tightened_x2_lo}};
  j["data"] = {{"count", c.data.count}, {"max_failure_fraction", c.data.max_failure_fraction}};
  j["seeds"] = {{"data", c.seeds.data}, {"test", c.seeds.test}, {"subsample", c.seeds.subsample}};
  j["paths"] = {{"out_dir", c.out_dir}};
  return j;
}

RunConfig config_from_json(const Json& j) {
  check_keys(j,
             {"model", "bounds", "grid", "stage", "expert", "proposed", "basis", "synthesis", "certificate",
              "evaluation", "data", "seeds", "paths"},
             "config");
  RunConfig c;
  if (j.contains("model")) c.model = params_from(j["model"]);
  if (j.contains("bounds")) c.bounds = bounds_from(j["bounds"]);
  if (j.contains("grid")) c.grid = grid_from(j["grid"]);
  if (j.contains("stage")) c.stage = stage_from(j["stage"]);
  if (j.contains("expert")) {
    const Json& e = j["expert"];
    check_keys(e, {"horizon", "terminal", "soft_state_weight", "data_soft_state_weight", "solver_tol", "max_iters"},
               "expert");
    read(e, "horizon", c.expert.horizon, "expert");
    std::string term = to_string(c.expert.terminal);
    read(e, "terminal", term, "expert");
    c.expert.terminal = terminal_kind_from(term);
    read(e, "soft_state_weight", c.expert.soft_state_weight, "expert");
    read(e, "data_soft_state_weight", c.expert.data_soft_state_weight, "expert");
    read(e, "solver_tol", c.expert.solver_tol, "expert");
    read(e, "max_iters", c.expert.max_iters, "expert");
  }
  if (j.contains("proposed")) {
    const Json& p = j["proposed"];
    check_keys(p, {"horizon", "soft_state_weight", "solver_tol", "max_iters", "multistart_grid"}, "proposed");
    read(p, "horizon", c.proposed.horizon, "proposed");
    read(p, "soft_state_weight", c.proposed.soft_state_weight, "proposed");
    read(p, "solver_tol", c.proposed.solver_tol, "proposed");
    read(p, "max_iters", c.proposed.max_iters, "proposed");
    read(p, "multistart_grid", c.proposed.multistart_grid, "proposed");
  }
  if (j.contains("basis")) c.basis = basis_spec_from(j["basis"]);
  if (j.contains("synthesis")) {
    const Json& s = j["synthesis"];
    check_keys(s, {"lambda", "feas_tol", "kkt_tol", "max_iters", "nonneg"}, "synthesis");
    read(s, "lambda", c.synthesis.lambda, "synthesis");
    read(s, "feas_tol", c.synthesis.feas_tol, "synthesis");
    read(s, "kkt_tol", c.synthesis.kkt_tol, "synthesis");
    read(s, "max_iters", c.synthesis.max_iters, "synthesis");
    read(s, "nonneg", c.synthesis.nonneg, "synthesis");
  }
  if (j.contains("certificate")) {
    const Json& s = j["certificate"];
    check_keys(s, {"eps", "beta"}, "certificate");
    read(s, "eps", c.certificate.eps, "certificate");
    read(s, "beta", c.certificate.beta, "certificate");
  }
  if (j.contains("evaluation")) {
    const Json& s = j["evaluation"];
    check_keys(s, {"m_test", "tol", "mode", "conv_tol", "steps", "tightened_x2_lo"}, "evaluation");
    read(s, "m_test", c.evaluation.m_test, "evaluation");
    read(s, "tol", c.evaluation.tol, "evaluation");
    read(s, "mode", c.evaluation.mode, "evaluation");
    read(s, "conv_tol", c.evaluation.conv_tol, "evaluation");
    read(s, "steps", c.evaluation.steps, "evaluation");
    read(s, "tightened_x2_lo", c.evaluation.tightened_x2_lo, "evaluation");
  }
  if (j.contains("data")) {
    const Json& s = j["data"];
    check_keys(s, {"count", "max_failure_fraction"}, "data");
    read(s, "count", c.data.count, "data");
    read(s, "max_failure_fraction", c.data.max_failure_fraction, "data");
  }
  if (j.contains("seeds")) {
    const Json& s = j["seeds"];
    check_keys(s, {"data", "test", "subsample"}, "seeds");
    read(s, "data", c.seeds.data, "seeds");
    read(s, "test", c.seeds.test, "seeds");
    read(s, "subsample", c.seeds.subsample, "seeds");
  }
  if (j.contains("paths")) {
    check_keys(j["paths"], {"out_dir"}, "paths");
    read(j["paths"], "out_dir", c.out_dir, "paths");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

Json to_json(const OcpSpec& s) {
  Json j;
  j["horizon"] = s.horizon;
  j["stage"] = stage_json(s.stage);
  j["terminal"] = to_string(s.terminal.kind());
  if (s.terminal.kind() == TerminalCost::Kind::quadratic) j["terminal_x_sp"] = vector_to_json(s.terminal.x_sp());
  if (s.terminal.kind() == TerminalCost::Kind::learned) {
    j["terminal_basis"] = to_json(s.terminal.model()->basis);
    j["terminal_theta"] = vector_to_json(s.terminal.model()->theta);
  }
  j["bounds"] = bounds_json(s.bounds);
  j["grid"] = grid_json(s.grid);
  j["model"] = params_json(s.params);
  j["soft_state_weight"] = s.soft_state_weight;
  j["solver_tol"] = s.solver_tol;
  j["max_iters"] = s.max_iters;
  j["multistart_grid"] = s.multistart_grid;
  j["init_feedback_gain"] = vector_to_json(s.init_feedback_gain);
  return j;
}

Json to_json(const Basis& b) {
  Json j;
  j["kind"] = to_string(b.kind);
  j["state_dim"] = b.state_dim;
  j["include_bias"] = b.include_bias;
  Json centers = Json::array();
  for (Eigen::Index r = 0; r < b.centers.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < b.centers.cols(); ++c) row.push_back(b.centers(r, c));
    centers.push_back(row);
  }
  j["centers"] = centers;
  j["widths"] = vector_to_json(b.widths);
  j["origin"] = vector_to_json(b.origin);
  j["exponents"] = b.exponents;
  return j;
}

Basis basis_from_json(const Json& j) {
  check_keys(j, {"kind", "state_dim", "include_bias", "centers", "widths", "origin", "exponents"}, "basis");
  Basis b;
  try {
    b.kind = basis_kind_from_string(j.at("kind").get<std::string>());
    b.state_dim = j.at("state_dim").get<int>();
    b.include_bias = j.value("include_bias", false);
    const Json& centers = j.at("centers");
    const Eigen::Index rows = static_cast<Eigen::Index>(centers.size());
    b.centers.resize(rows, b.state_dim);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Json& row = centers[static_cast<std::size_t>(r)];
      if (!row.is_array() || static_cast<int>(row.size()) != b.state_dim) {
        throw FormatError("basis center has the wrong dimension");
      }
      for (int c = 0; c < b.state_dim; ++c) b.centers(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    b.widths = vector_from_json(j.at("widths"));
    if (j.contains("origin")) b.origin = vector_from_json(j["origin"]);
    if (j.contains("exponents")) b.exponents = j["exponents"].get<std::vector<std::vector<int>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("basis: ") + e.what());
  }
  if (b.kind == BasisKind::gaussian_rbf) {
    if (b.widths.size() != b.centers.rows()) throw FormatError("basis: widths and centers disagree");
    if ((b.widths.array() <= 0.0).any()) throw FormatError("basis: widths must be positive");
  }
  return b;
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string ocp_digest(const OcpSpec& s) { return fnv1a_hex(to_json(s).dump()); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& contents) {
  const std::filesystem::path parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << contents;
  if (!out) throw FormatError("write failed for " + path);
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace vfsynth
