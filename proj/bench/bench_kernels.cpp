#include <benchmark/benchmark.h>

#include <cstddef>
#include <vector>

#include "rot/projections.hpp"
#include "rot/reference.hpp"
#include "rot/solvers.hpp"
#include "rot/synthetic.hpp"

using namespace rot;

namespace {

const ExperimentConfig& config(std::size_t k) {
  static const std::vector<ExperimentConfig> all = default_experiments();
  return all.at(k);
}

Matrix scaled_cost(const SyntheticInstance& inst, double lambda) {
  Matrix theta = inst.gamma.entries();
  for (double& x : theta.data()) x = -x / lambda;
  return theta;
}

// range(0): experiment index, range(1): d, range(2): 1 for the OpenMP kernels.
void BM_RowProjection(benchmark::State& state) {
  const ExperimentConfig& c = config(state.range(0));
  const auto inst = generate_synthetic(state.range(1));
  const Regularizer reg = make_regularizer(c.kind, c.params);
  ProjectionOptions opts;
  opts.exec = state.range(2) ? ExecPolicy::Parallel : ExecPolicy::Serial;
  const DualState start = make_dual_state(scaled_cost(inst, c.lambda_bar), reg);
  for (auto _ : state) {
    DualState s = start;
    project_row_sums(s, inst.p, reg, opts);
    benchmark::DoNotOptimize(s.theta.data().data());
  }
  state.SetLabel(c.label);
}

void BM_Solve(benchmark::State& state) {
  const ExperimentConfig& c = config(state.range(0));
  const auto inst = generate_synthetic(state.range(1));
  const Regularizer reg = make_regularizer(c.kind, c.params);
  SolverOptions o;
  o.lambda = c.lambda_bar;
  o.exec = state.range(2) ? ExecPolicy::Parallel : ExecPolicy::Serial;
  int iters = 0;
  for (auto _ : state) {
    const Solution sol = solve_dual(inst.p, inst.q, inst.gamma, reg, o);
    iters = sol.report.main_iterations;
    benchmark::DoNotOptimize(sol.report.distance);
  }
  state.counters["main_iters"] = iters;
  state.SetLabel(c.label);
}

void BM_EmdExact(benchmark::State& state) {
  const auto inst = generate_synthetic(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(emd_exact(inst.p, inst.q, inst.gamma).distance);
}

void experiment_args(benchmark::internal::Benchmark* b) {
  const std::size_t n = default_experiments().size();
  for (std::size_t k = 0; k < n; ++k)
    for (int d : {64, 256})
      for (int par : {0, 1}) b->Args({static_cast<long>(k), d, par});
}

}  // namespace

BENCHMARK(BM_RowProjection)->Apply(experiment_args)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Solve)->Apply(experiment_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_EmdExact)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
