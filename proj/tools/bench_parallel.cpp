// Serial reference against the OpenMP kernels. Arg 0 = Serial, 1 = Parallel.

#include "levyflow/flow_engine.hpp"
#include "levyflow/transport.hpp"

#include <benchmark/benchmark.h>

using namespace levyflow;

namespace {

Exec exec_of(const benchmark::State& state) { return state.range(0) ? Exec::Parallel : Exec::Serial; }

void label(benchmark::State& state) {
  state.SetLabel(state.range(0) ? "omp x" + std::to_string(max_threads()) : "serial");
}

void BM_SolveFlow(benchmark::State& state) {
  const auto spec = StableSpec::make(1.5, 1.0, 1);
  const TimeGrid grid = TimeGrid::bind(sample_path(spec, 1.0, 1e-3, 1));
  const DriftField b = trig_field(1, 1.0, 1.0);
  std::vector<Vec> points;
  for (int i = 0; i < 256; ++i) points.push_back(Vec::Constant(1, -2.0 + 4.0 * i / 255.0));
  for (auto _ : state) benchmark::DoNotOptimize(solve_flow(b, points, grid, exec_of(state)));
  label(state);
}

void BM_MomentEstimate(benchmark::State& state) {
  EnsembleSettings ens;
  ens.n_paths = 200;
  ens.exec = exec_of(state);
  const DriftField b = counterexample_field(0.6, 1.0);
  const auto spec = StableSpec::make(1.5, 1.0, 1);
  for (auto _ : state)
    benchmark::DoNotOptimize(moment_estimate(b, spec, Vec::Constant(1, 0.0), Vec::Constant(1, 0.01), 2.0, ens));
  label(state);
}

void BM_TransportSolve(benchmark::State& state) {
  const auto spec = StableSpec::make(1.5, 1.0, 2);
  const TimeGrid grid = TimeGrid::bind(sample_path(spec, 0.5, 5e-3, 2));
  const DriftField b = trig_field(2, 1.0, 1.0);
  const InitialDatum u0 = bump_datum(Vec::Zero(2), 1.5);
  const Lattice lat = Lattice::midpoint(2, -1.0, 1.0, 0.04);
  for (auto _ : state)
    benchmark::DoNotOptimize(solve(b, u0, grid, {0, grid.nodes() - 1}, lat, exec_of(state)));
  label(state);
}

void BM_MarcusTerms(benchmark::State& state) {
  const auto spec = StableSpec::make(1.5, 1.0, 1, SimulationMode::JumpDecomposition, 0.25);
  const TimeGrid grid = TimeGrid::bind(sample_path(spec, 0.5, 5e-3, 3));
  const DriftField b = trig_field(1, 1.0, 1.0);
  const TransportSolution sol = solve(b, bump_datum(Vec::Zero(1), 1.5), grid, {}, Lattice::midpoint(1, -1, 1, 0.5));
  const TestFunction theta = bump_test_function(Vec::Constant(1, 0.2), 1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(marcus_weak_terms(sol, theta, grid.nodes() - 1, 0.02, exec_of(state)));
  label(state);
}

}  // namespace

BENCHMARK(BM_SolveFlow)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MomentEstimate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TransportSolve)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MarcusTerms)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
