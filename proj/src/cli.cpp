#include "vfsynth/cli.hpp"

#include <algorithm>
#include <exception>

#include "CLI11.hpp"
#include "vfsynth/commands.hpp"
#include "vfsynth/error.hpp"

namespace vfsynth {

namespace {

struct Common {
  CommonArgs args;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  bool json = false;

  void attach(CLI::App* app) {
    app->add_option("--config", args.config_path, "Run configuration JSON");
    app->add_option("--out-dir", args.out_dir, "Directory for outputs");
    seed_opt = app->add_option("--seed", seed, "Seed for this command's random draws");
    app->add_option("--jobs", args.jobs, "Worker threads (default: VFSYNTH_JOBS, else all)")
        ->check(CLI::NonNegativeNumber);
    app->add_flag("--json", json, "Print a machine-readable JSON summary");
  }
  CommonArgs resolved() const {
    CommonArgs c = args;
    if (seed_opt->count()) c.seed = seed;
    return c;
  }
};

void emit(const CommandOutput& o, bool json, std::ostream& out, std::ostream& err) {
  for (const auto& w : o.warnings) err << "warning: " << w << "\n";
  if (json) {
    Json j = o.summary;
    if (!o.warnings.empty()) j["warnings"] = o.warnings;
    out << j.dump(2) << "\n";
  } else {
    out << o.text;
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learn an MPC terminal cost from expert demonstrations", "vfsynth"};
  app.set_version_flag("--version", std::string(VFSYNTH_VERSION));
  app.require_subcommand(1);

  // sample-size
  SampleSizeArgs ss;
  bool ss_json = false;
  auto* c_ss = app.add_subcommand("sample-size", "Smallest M meeting the (eps, beta) certificate");
  c_ss->add_option("--eps", ss.eps, "Violation level in (0, 1)");
  c_ss->add_option("--beta", ss.beta, "Confidence parameter in (0, 1)");
  c_ss->add_option("--dim", ss.dim, "Number of decision variables");
  c_ss->add_flag("--json", ss_json, "Print a machine-readable JSON summary");
  // Accepted for uniformity; the calculation uses neither.
  std::string ss_dir;
  std::uint64_t ss_seed = 0;
  int ss_jobs = 0;
  c_ss->add_option("--out-dir", ss_dir);
  c_ss->add_option("--seed", ss_seed);
  c_ss->add_option("--jobs", ss_jobs);

  // gen-data
  GenDataArgs gd;
  Common gd_c;
  auto* c_gd = app.add_subcommand("gen-data", "Solve the expert OCP at uniform random states");
  gd_c.attach(c_gd);
  c_gd->add_option("--count", gd.count, "Number of states (default from config)")->check(CLI::NonNegativeNumber);
  c_gd->add_option("--out", gd.out, "Dataset CSV path (default <out-dir>/demos.csv)");

  // synth
  SynthArgs sy;
  Common sy_c;
  double sy_eps = 0.0, sy_beta = 0.0;
  bool no_descent = false, nonneg = false;
  auto* c_sy = app.add_subcommand("synth", "Fit the terminal cost by the scenario QP");
  sy_c.attach(c_sy);
  c_sy->add_option("--data", sy.data, "Dataset CSV")->required();
  auto* o_eps = c_sy->add_option("--eps", sy_eps, "Certificate violation level");
  auto* o_beta = c_sy->add_option("--beta", sy_beta, "Certificate confidence parameter");
  c_sy->add_flag("--no-descent", no_descent, "Drop the descent rows (unconstrained baseline)");
  auto* o_nonneg = c_sy->add_flag("--nonneg", nonneg, "Add sample-wise nonnegativity rows");
  c_sy->add_option("--out", sy.out, "Artifact path (default <out-dir>/model.json)");

  // verify
  VerifyArgs ve;
  Common ve_c;
  double ve_tol = 0.0;
  auto* c_ve = app.add_subcommand("verify", "Empirical descent-violation rate on held-out states");
  ve_c.attach(c_ve);
  c_ve->add_option("--model", ve.model, "Model artifact JSON")->required();
  c_ve->add_option("--data", ve.data, "Test dataset CSV (default: fresh uniform states)");
  c_ve->add_option("--m-test", ve.m_test, "Fresh test set size")->check(CLI::NonNegativeNumber);
  c_ve->add_option("--mode", ve.mode, "mpc_one_step or expert_action")
      ->check(CLI::IsMember({"mpc_one_step", "expert_action"}));
  auto* o_tol = c_ve->add_option("--tol", ve_tol, "Relative violation tolerance");

  // simulate
  SimulateArgs si;
  Common si_c;
  std::vector<double> si_x0;
  auto* c_si = app.add_subcommand("simulate", "Closed-loop runs of one policy");
  si_c.attach(c_si);
  c_si->add_option("--model", si.model, "Model artifact JSON");
  c_si->add_option("--policy", si.policy, "proposed or expert")->check(CLI::IsMember({"proposed", "expert"}));
  c_si->add_option("--x0", si_x0, "Initial state (default: the twelve boundary states)")->expected(2);
  c_si->add_option("--steps", si.steps, "Control steps")->check(CLI::NonNegativeNumber);

  // compare
  CompareArgs co;
  Common co_c;
  auto* c_co = app.add_subcommand("compare", "Expert against proposed MPC from the twelve boundary states");
  co_c.attach(c_co);
  c_co->add_option("--model", co.model, "Model artifact JSON")->required();
  c_co->add_option("--steps", co.steps, "Control steps")->check(CLI::NonNegativeNumber);

  // adapt
  AdaptArgs ad;
  Common ad_c;
  double x2_lo = 0.0;
  auto* c_ad = app.add_subcommand("adapt", "Compare again with a tightened x2 lower bound");
  ad_c.attach(c_ad);
  c_ad->add_option("--model", ad.compare.model, "Model artifact JSON")->required();
  c_ad->add_option("--steps", ad.compare.steps, "Control steps")->check(CLI::NonNegativeNumber);
  auto* o_x2 = c_ad->add_option("--x2-lo", x2_lo, "Tightened x2 lower bound");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_ss) {
      emit(cmd_sample_size(ss), ss_json, out, err);
    } else if (*c_gd) {
      gd.common = gd_c.resolved();
      emit(cmd_gen_data(gd), gd_c.json, out, err);
    } else if (*c_sy) {
      sy.common = sy_c.resolved();
      if (o_eps->count()) sy.eps = sy_eps;
      if (o_beta->count()) sy.beta = sy_beta;
      if (o_nonneg->count()) sy.nonneg = nonneg;
      sy.descent = !no_descent;
      emit(cmd_synth(sy), sy_c.json, out, err);
    } else if (*c_ve) {
      ve.common = ve_c.resolved();
      if (o_tol->count()) ve.tol = ve_tol;
      emit(cmd_verify(ve), ve_c.json, out, err);
    } else if (*c_si) {
      si.common = si_c.resolved();
      if (!si_x0.empty()) si.x0 = Eigen::Map<const Eigen::VectorXd>(si_x0.data(), 2);
      emit(cmd_simulate(si), si_c.json, out, err);
    } else if (*c_co) {
      co.common = co_c.resolved();
      emit(cmd_compare(co), co_c.json, out, err);
    } else if (*c_ad) {
      ad.compare.common = ad_c.resolved();
      if (o_x2->count()) ad.x2_lo = x2_lo;
      emit(cmd_adapt(ad), ad_c.json, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vfsynth
