// Serial reference against the OpenMP kernel for each parallel stage.

#include <memory>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "vfsynth/config.hpp"
#include "vfsynth/dataset.hpp"
#include "vfsynth/evaluation.hpp"
#include "vfsynth/scenario.hpp"

using namespace vfsynth;

namespace {

struct Shared {
  RunConfig cfg;
  std::vector<DemoTuple> demos;
  Basis basis;
  std::shared_ptr<const LearnedModel> model;
};

const Shared& shared() {
  static const Shared s = [] {
    Shared x;
    x.demos = generate_demos(sample_uniform_states(683, x.cfg.bounds, 1), x.cfg.demo_spec(), 0).converged();
    std::vector<StateVec> xs;
    for (const auto& t : x.demos) xs.push_back(t.x);
    x.basis = fit_basis(x.cfg.basis, xs, x.cfg.bounds, x.cfg.stage.x_sp);
    const QpProblem qp = assemble_qp(x.demos, x.basis, x.cfg.stage, x.cfg.grid, x.cfg.model, 1e-8, {}, 0);
    auto m = std::make_shared<LearnedModel>();
    m->basis = x.basis;
    m->theta = solve_qp(qp).theta;
    x.model = m;
    return x;
  }();
  return s;
}

int jobs_arg(const benchmark::State& st) { return static_cast<int>(st.range(0)); }

void BM_GenerateDemos(benchmark::State& st) {
  const RunConfig cfg;
  const auto xs = sample_uniform_states(64, cfg.bounds, 7);
  const OcpSpec spec = cfg.demo_spec();
  for (auto _ : st) {
    const DemoSet s = jobs_arg(st) == 0 ? generate_demos_serial(xs, spec) : generate_demos(xs, spec, jobs_arg(st));
    benchmark::DoNotOptimize(s.tuples.data());
  }
}

void BM_AssembleQp(benchmark::State& st) {
  const Shared& s = shared();
  for (auto _ : st) {
    const QpProblem qp =
        jobs_arg(st) == 0
            ? assemble_qp_serial(s.demos, s.basis, s.cfg.stage, s.cfg.grid, s.cfg.model, 1e-8)
            : assemble_qp(s.demos, s.basis, s.cfg.stage, s.cfg.grid, s.cfg.model, 1e-8, {}, jobs_arg(st));
    benchmark::DoNotOptimize(qp.hessian.data());
  }
}

void BM_VerifyDescent(benchmark::State& st) {
  const Shared& s = shared();
  const OcpSpec one = s.cfg.proposed_spec(s.model);
  const std::vector<DemoTuple> test(s.demos.begin(), s.demos.begin() + 200);
  for (auto _ : st) {
    const ViolationReport r =
        jobs_arg(st) == 0 ? verify_descent_serial(test, one, VerifyMode::mpc_one_step, 1e-9)
                          : verify_descent(test, one, VerifyMode::mpc_one_step, 1e-9, jobs_arg(st));
    benchmark::DoNotOptimize(r.eps_hat);
  }
}

void BM_SimulateMany(benchmark::State& st) {
  const Shared& s = shared();
  const OcpSpec p = s.cfg.proposed_spec(s.model);
  const auto x0s = twelve_initial_conditions(s.cfg.bounds);
  for (auto _ : st) {
    const auto runs = jobs_arg(st) == 0 ? simulate_many_serial(p, x0s, 100, 0.02)
                                        : simulate_many(p, x0s, 100, 0.02, jobs_arg(st));
    benchmark::DoNotOptimize(runs.data());
  }
}

// Argument 0 is the serial reference; positive values are OpenMP worker counts.
void job_args(benchmark::internal::Benchmark* b) {
  b->Arg(0);
  for (int j = 1; j <= omp_get_num_procs(); j *= 2) b->Arg(j);
  b->ArgName("jobs")->Unit(benchmark::kMillisecond)->UseRealTime();
}

}  // namespace

BENCHMARK(BM_GenerateDemos)->Apply(job_args);
BENCHMARK(BM_AssembleQp)->Apply(job_args);
BENCHMARK(BM_VerifyDescent)->Apply(job_args);
BENCHMARK(BM_SimulateMany)->Apply(job_args);

BENCHMARK_MAIN();
