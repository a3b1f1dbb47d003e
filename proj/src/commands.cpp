#include "vfsynth/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "vfsynth/dataset.hpp"
#include "vfsynth/error.hpp"
#include "vfsynth/evaluation.hpp"
#include "vfsynth/parallel.hpp"
#include "vfsynth/random.hpp"
#include "vfsynth/scenario.hpp"

namespace vfsynth {

namespace {

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Json run_json(const ClosedLoopRun& r) {
  const PolicySummary s = summarize({r});
  return {{"x0", vector_to_json(r.x_traj.front())},
          {"x_final", vector_to_json(r.x_traj.back())},
          {"converged", r.converged},
          {"steps_to_converge", r.steps_to_converge},
          {"total_cost", r.stage_cost_sum},
          {"max_violation", r.constraint_violation_max},
          {"solver_failures", r.solver_failures},
          {"avg_solve_ms", s.avg_solve_ms},
          {"max_solve_ms", s.max_solve_ms},
          {"error", r.error}};
}

Json summary_json(const PolicySummary& s) {
  return {{"runs", s.runs},
          {"converged", s.converged},
          {"avg_solve_ms", s.avg_solve_ms},
          {"max_solve_ms", s.max_solve_ms},
          {"total_cost", s.total_cost},
          {"max_violation", s.max_violation},
          {"solver_failures", s.solver_failures}};
}

std::string runs_csv(const Comparison& c) {
  std::string out =
      "policy,run,x0_1,x0_2,converged,steps_to_converge,total_cost,avg_solve_ms,max_solve_ms,max_violation\n";
  auto rows = [&](const char* name, const std::vector<ClosedLoopRun>& runs) {
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const ClosedLoopRun& r = runs[i];
      const PolicySummary s = summarize({r});
      out += std::string(name) + "," + std::to_string(i) + "," + format_double(r.x_traj.front()[0]) + "," +
             format_double(r.x_traj.front()[1]) + "," + (r.converged ? "1" : "0") + "," +
             std::to_string(r.steps_to_converge) + "," + format_double(r.stage_cost_sum) + "," +
             format_double(s.avg_solve_ms) + "," + format_double(s.max_solve_ms) + "," +
             format_double(r.constraint_violation_max) + "\n";
    }
  };
  rows("expert", c.expert_runs);
  rows("proposed", c.proposed_runs);
  return out;
}

std::string summary_line(const char* name, const PolicySummary& s) {
  return std::string(name) + ": converged " + std::to_string(s.converged) + "/" + std::to_string(s.runs) +
         ", avg solve " + fmt("%.3f", s.avg_solve_ms) + " ms, max solve " + fmt("%.3f", s.max_solve_ms) +
         " ms, total cost " + fmt("%.6g", s.total_cost) + ", max excess " + fmt("%.3g", s.max_violation) + "\n";
}

Json comparison_json(const Comparison& c) {
  Json runs_e = Json::array(), runs_p = Json::array();
  for (const auto& r : c.expert_runs) runs_e.push_back(run_json(r));
  for (const auto& r : c.proposed_runs) runs_p.push_back(run_json(r));
  const double speedup = c.proposed.avg_solve_ms > 0.0 ? c.expert.avg_solve_ms / c.proposed.avg_solve_ms : 0.0;
  return {{"expert", summary_json(c.expert)},
          {"proposed", summary_json(c.proposed)},
          {"speedup", speedup},
          {"expert_runs", runs_e},
          {"proposed_runs", runs_p}};
}

void write_comparison(const Comparison& c, const std::string& dir, const std::string& prefix,
                      CommandOutput& out) {
  const std::string table = join(dir, prefix + ".csv");
  write_file(table, runs_csv(c));
  out.files.push_back(table);
  for (std::size_t i = 0; i < c.x0s.size(); ++i) {
    const std::string pe = join(dir, prefix + "_expert_" + std::to_string(i) + ".csv");
    const std::string pp = join(dir, prefix + "_proposed_" + std::to_string(i) + ".csv");
    write_file(pe, trajectory_csv(c.expert_runs[i]));
    write_file(pp, trajectory_csv(c.proposed_runs[i]));
    out.files.push_back(pe);
    out.files.push_back(pp);
  }
}

struct LoadedModel {
  ModelArtifact artifact;
  RunConfig config;
};

LoadedModel load_model(const std::string& path, const CommonArgs& common) {
  if (path.empty()) throw DomainError("a model artifact is required (--model)");
  LoadedModel m;
  m.artifact = load_artifact(path);
  m.config = resolve_config(common, &m.artifact.config);
  return m;
}

}  // namespace

RunConfig resolve_config(const CommonArgs& c, const RunConfig* fallback) {
  RunConfig cfg = fallback ? *fallback : RunConfig{};
  if (!c.config_path.empty()) cfg = load_config(c.config_path);
  if (!c.out_dir.empty()) cfg.out_dir = c.out_dir;
  cfg.validate();
  return cfg;
}

std::vector<int> subsample_indices(int n, int m, std::uint64_t seed) {
  if (m < 0 || m > n) throw DomainError("cannot draw " + std::to_string(m) + " of " + std::to_string(n) + " rows");
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = stream_for(seed, 0);
  // Partial Fisher-Yates: the first m slots become a uniform sample.
  for (int i = 0; i < m; ++i) {
    const int j = i + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());
  return idx;
}

CommandOutput cmd_sample_size(const SampleSizeArgs& a) {
  const long m = min_samples(a.eps, a.beta, a.dim);
  const double achieved = beta_bound(a.eps, m, a.dim);
  CommandOutput out;
  out.summary = {{"eps", a.eps}, {"beta", a.beta}, {"dim", a.dim}, {"m", m}, {"achieved_beta", achieved}};
  out.text = std::to_string(m) + "\n";
  out.text += "achieved beta " + fmt("%.6e", achieved) + " <= " + fmt("%.6e", a.beta) + "\n";
  return out;
}

CommandOutput cmd_gen_data(const GenDataArgs& a) {
  const RunConfig cfg = resolve_config(a.common);
  const int count = a.count > 0 ? a.count : cfg.data.count;
  const std::uint64_t seed = a.common.seed.value_or(cfg.seeds.data);
  const std::string path = a.out.empty() ? join(cfg.out_dir, "demos.csv") : a.out;
  const int jobs = resolve_jobs(a.common.jobs);

  const auto t0 = std::chrono::steady_clock::now();
  const auto states = sample_uniform_states(count, cfg.bounds, seed);
  DemoSet set = generate_demos(states, cfg.demo_spec(), jobs);
  set.seed = seed;
  const double secs = seconds_since(t0);
  save_demos(set, path);

  CommandOutput out;
  out.files = {path, meta_path_for(path)};
  out.summary = {{"path", path},     {"rows", set.tuples.size()}, {"failures", set.failures()},
                 {"seed", seed},     {"jobs", jobs},              {"duration_s", secs},
                 {"digest", set.expert_config_digest}};
  out.text = "wrote " + std::to_string(set.tuples.size()) + " tuples to " + path + " (" +
             std::to_string(set.failures()) + " failed solves, " + fmt("%.2f", secs) + " s)\n";
  check_failure_budget(set, cfg.data.max_failure_fraction);
  return out;
}

CommandOutput cmd_synth(const SynthArgs& a) {
  if (a.data.empty()) throw DomainError("a dataset is required (--data)");
  RunConfig cfg = resolve_config(a.common);
  CommandOutput out;
  const DemoSet set = load_demos(a.data);
  out.warnings = check_digest(set, cfg.demo_spec());
  const std::vector<DemoTuple> rows = set.converged();

  const double eps = a.eps.value_or(cfg.certificate.eps);
  const double beta = a.beta.value_or(cfg.certificate.beta);
  const long d = cfg.basis.d + (cfg.basis.include_bias ? 1 : 0);
  const long m = min_samples(eps, beta, d);
  if (static_cast<long>(rows.size()) < m) {
    throw Error("dataset has " + std::to_string(rows.size()) + " usable rows but the certificate (eps=" +
                fmt("%g", eps) + ", beta=" + fmt("%g", beta) + ", d=" + std::to_string(d) +
                ") requires M = " + std::to_string(m));
  }
  const std::uint64_t seed = a.common.seed.value_or(cfg.seeds.subsample);
  std::vector<DemoTuple> train;
  std::vector<StateVec> states;
  for (int i : subsample_indices(static_cast<int>(rows.size()), static_cast<int>(m), seed)) {
    train.push_back(rows[static_cast<std::size_t>(i)]);
    states.push_back(rows[static_cast<std::size_t>(i)].x);
  }

  const int jobs = resolve_jobs(a.common.jobs);
  const auto t0 = std::chrono::steady_clock::now();
  const Basis basis = fit_basis(cfg.basis, states, cfg.bounds, cfg.stage.x_sp);
  if (basis.size() != d) throw BasisError("fitted basis has an unexpected size");
  SynthesisFlags flags;
  flags.descent = a.descent;
  flags.nonneg = a.nonneg.value_or(cfg.synthesis.nonneg);
  const QpProblem qp = assemble_qp(train, basis, cfg.stage, cfg.grid, cfg.model, cfg.synthesis.lambda, flags, jobs);
  SolveQpOptions qo;
  qo.feas_tol = cfg.synthesis.feas_tol;
  qo.kkt_tol = cfg.synthesis.kkt_tol;
  qo.max_iters = cfg.synthesis.max_iters;
  const SynthesisResult res = solve_qp(qp, qo);
  const double secs = seconds_since(t0);
  if (res.status != QpStatus::optimal) {
    std::string msg = "synthesis failed (" + to_string(res.status) + "): " + res.message;
    for (const auto& w : res.worst_rows) {
      msg += "\n  sample " + std::to_string(w.sample) + " row " + std::to_string(w.row) + " residual " +
             fmt("%.6e", w.residual);
    }
    throw Error(msg);
  }

  ModelArtifact art;
  art.basis = basis;
  art.theta = res.theta;
  art.certificate = {eps, beta, m, d};
  SynthesisDiagnostics& dg = art.diagnostics;
  dg.mse = res.training_mse;
  dg.max_residual = res.max_constraint_residual;
  dg.max_descent_residual = res.max_descent_residual;
  dg.kkt_stationarity = res.kkt_stationarity;
  dg.kkt_complementarity = res.kkt_complementarity;
  dg.active_count = res.active_count;
  dg.iters = res.iters;
  dg.status = res.status;
  dg.descent = flags.descent;
  dg.nonneg = flags.nonneg;
  dg.lambda = cfg.synthesis.lambda;
  art.provenance.data_digest = fnv1a_hex(read_file(a.data));
  art.provenance.seed = seed;
  art.provenance.expert_digest = set.expert_config_digest;
  cfg.certificate.eps = eps;
  cfg.certificate.beta = beta;
  cfg.synthesis.nonneg = flags.nonneg;
  art.config = cfg;

  const std::string path = a.out.empty() ? join(cfg.out_dir, "model.json") : a.out;
  save_artifact(art, path);
  out.files.push_back(path);
  out.summary = {{"path", path},
                 {"m", m},
                 {"d", d},
                 {"eps", eps},
                 {"beta", beta},
                 {"descent", flags.descent},
                 {"nonneg", flags.nonneg},
                 {"status", to_string(res.status)},
                 {"training_mse", res.training_mse},
                 {"max_residual", res.max_constraint_residual},
                 {"max_descent_residual", res.max_descent_residual},
                 {"kkt_stationarity", res.kkt_stationarity},
                 {"kkt_complementarity", res.kkt_complementarity},
                 {"active_count", res.active_count},
                 {"iters", res.iters},
                 {"duration_s", secs}};
  out.text = "M = " + std::to_string(m) + ", d = " + std::to_string(d) + ", status " + to_string(res.status) +
             ", training MSE " + fmt("%.6g", res.training_mse) + ", max descent residual " +
             fmt("%.3e", res.max_descent_residual) + ", " + std::to_string(res.active_count) +
             " active rows, " + fmt("%.2f", secs) + " s\nwrote " + path + "\n";
  return out;
}

CommandOutput cmd_verify(const VerifyArgs& a) {
  const LoadedModel lm = load_model(a.model, a.common);
  const RunConfig& cfg = lm.config;
  const VerifyMode mode = verify_mode_from_string(a.mode.empty() ? cfg.evaluation.mode : a.mode);
  const double tol = a.tol.value_or(cfg.evaluation.tol);
  const int jobs = resolve_jobs(a.common.jobs);
  CommandOutput out;

  DemoSet set;
  std::uint64_t seed = 0;
  if (!a.data.empty()) {
    set = load_demos(a.data);
  } else {
    const int m_test = a.m_test > 0 ? a.m_test : cfg.evaluation.m_test;
    seed = a.common.seed.value_or(cfg.seeds.test);
    set = generate_demos(sample_uniform_states(m_test, cfg.bounds, seed), cfg.demo_spec(), jobs);
    set.seed = seed;
    const std::string tpath = join(cfg.out_dir, "test_demos.csv");
    save_demos(set, tpath);
    out.files.push_back(tpath);
  }
  // The expert action is only meaningful where the expert solve converged.
  const std::vector<DemoTuple> test = mode == VerifyMode::expert_action ? set.converged() : set.tuples;
  if (test.empty()) throw DomainError("verification needs at least one test point");

  OcpSpec one_step = cfg.proposed_spec(lm.artifact.model());
  one_step.horizon = 1;
  const ViolationReport rep = verify_descent(test, one_step, mode, tol, jobs);

  const std::string vpath = join(cfg.out_dir, "violations.csv");
  write_file(vpath, violations_csv(rep));
  out.files.push_back(vpath);
  const double eps = lm.artifact.certificate.eps;
  out.summary = {{"mode", to_string(mode)},
                 {"m_test", rep.m_test},
                 {"expert_failures_skipped", set.tuples.size() - test.size()},
                 {"violations", rep.violations.size()},
                 {"eps_hat", rep.eps_hat},
                 {"eps", eps},
                 {"within_eps", rep.eps_hat <= eps},
                 {"tolerance", tol},
                 {"solver_failures", rep.solver_failures},
                 {"max_residual", rep.max_residual},
                 {"test_seed", seed}};
  const std::string jpath = join(cfg.out_dir, "verify.json");
  write_file(jpath, out.summary.dump(2) + "\n");
  out.files.push_back(jpath);
  out.text = to_string(mode) + ": " + std::to_string(rep.violations.size()) + " of " +
             std::to_string(rep.m_test) + " points violate the descent condition, eps_hat = " +
             fmt("%.4f", rep.eps_hat) + " (certificate eps = " + fmt("%g", eps) + "), " +
             std::to_string(rep.solver_failures) + " one-step solver failures\n";
  return out;
}

CommandOutput cmd_simulate(const SimulateArgs& a) {
  RunConfig cfg;
  OcpSpec spec;
  if (a.policy == "proposed") {
    const LoadedModel lm = load_model(a.model, a.common);
    cfg = lm.config;
    spec = cfg.proposed_spec(lm.artifact.model());
  } else if (a.policy == "expert") {
    std::optional<ModelArtifact> art;
    if (!a.model.empty()) art = load_artifact(a.model);
    cfg = resolve_config(a.common, art ? &art->config : nullptr);
    spec = cfg.expert_spec();
  } else {
    throw DomainError("unknown policy '" + a.policy + "' (expected proposed or expert)");
  }
  const std::vector<StateVec> x0s = a.x0 ? std::vector<StateVec>{*a.x0} : twelve_initial_conditions(cfg.bounds);
  for (const auto& x : x0s) {
    if (x.size() != cfg.bounds.state_dim()) throw DimensionError("initial state has the wrong dimension");
  }
  const int steps = a.steps > 0 ? a.steps : cfg.evaluation.steps;
  const auto runs = simulate_many(spec, x0s, steps, cfg.evaluation.conv_tol, resolve_jobs(a.common.jobs));

  CommandOutput out;
  Json jr = Json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string p = join(cfg.out_dir, "sim_" + a.policy + "_" + std::to_string(i) + ".csv");
    write_file(p, trajectory_csv(runs[i]));
    out.files.push_back(p);
    jr.push_back(run_json(runs[i]));
  }
  const PolicySummary s = summarize(runs);
  out.summary = {{"policy", a.policy}, {"steps", steps}, {"summary", summary_json(s)}, {"runs", jr}};
  out.text = summary_line(a.policy.c_str(), s);
  return out;
}

CommandOutput cmd_compare(const CompareArgs& a) {
  const LoadedModel lm = load_model(a.model, a.common);
  const RunConfig& cfg = lm.config;
  const int steps = a.steps > 0 ? a.steps : cfg.evaluation.steps;
  const Comparison c = compare_policies(cfg.expert_spec(), cfg.proposed_spec(lm.artifact.model()),
                                        twelve_initial_conditions(cfg.bounds), steps, cfg.evaluation.conv_tol,
                                        resolve_jobs(a.common.jobs));
  CommandOutput out;
  write_comparison(c, cfg.out_dir, "compare", out);
  out.summary = comparison_json(c);
  out.summary["steps"] = steps;
  const std::string jpath = join(cfg.out_dir, "compare.json");
  write_file(jpath, out.summary.dump(2) + "\n");
  out.files.push_back(jpath);
  out.text = summary_line("expert", c.expert) + summary_line("proposed", c.proposed) + "speedup " +
             fmt("%.2f", out.summary["speedup"].get<double>()) + "x\n";
  return out;
}

CommandOutput cmd_adapt(const AdaptArgs& a) {
  const LoadedModel lm = load_model(a.compare.model, a.compare.common);
  const RunConfig& cfg = lm.config;
  const int steps = a.compare.steps > 0 ? a.compare.steps : cfg.evaluation.steps;
  const double x2_lo = a.x2_lo.value_or(cfg.evaluation.tightened_x2_lo);
  // Runs start on the boundary of the tightened box, so they begin feasible.
  Bounds tightened = cfg.bounds;
  tightened.x_lo[1] = x2_lo;
  tightened.validate();
  const Adaptation ad = adaptation_experiment(cfg.expert_spec(), cfg.proposed_spec(lm.artifact.model()), x2_lo,
                                              twelve_initial_conditions(tightened), steps,
                                              cfg.evaluation.conv_tol, resolve_jobs(a.compare.common.jobs));
  const Comparison& c = ad.comparison;
  CommandOutput out;
  write_comparison(c, cfg.out_dir, "adapt", out);
  out.summary = comparison_json(c);
  out.summary["steps"] = steps;
  out.summary["tightened_x2_lo"] = x2_lo;
  out.summary["expert"]["x2_lo_excess"] = ad.expert_x2_excess;
  out.summary["proposed"]["x2_lo_excess"] = ad.proposed_x2_excess;
  const std::string jpath = join(cfg.out_dir, "adapt.json");
  write_file(jpath, out.summary.dump(2) + "\n");
  out.files.push_back(jpath);
  out.text = "x2 lower bound " + fmt("%g", x2_lo) + "\n" + summary_line("expert", c.expert) +
             summary_line("proposed", c.proposed) + "largest shortfall below the x2 bound: expert " +
             fmt("%.3g", ad.expert_x2_excess) + ", proposed " + fmt("%.3g", ad.proposed_x2_excess) + "\n";
  return out;
}

}  // namespace vfsynth
