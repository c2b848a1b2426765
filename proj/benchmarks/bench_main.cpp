#include "opcal/opcal.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace opcal;

namespace {

Matrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = normal(rng);
  return m;
}

// Mildly damped quadratic ROM that stays bounded over long rollouts.
RomOperators damped_operators(std::mt19937_64& rng, Index r) {
  RomOperators ops = RomOperators::zeros(r, true, false);
  ops.a = -1e-3 * Matrix::Identity(r, r) + random_matrix(rng, r, r, 1e-5);
  ops.h = random_matrix(rng, r, ops.h.cols(), 1e-6);
  return ops;
}

std::vector<Control> switch_off(Index k) {
  std::vector<Control> u(static_cast<std::size_t>(k), Control{1.0, 0.0});
  for (Index j = k / 2; j < k; ++j) u[static_cast<std::size_t>(j)].heat_load = 0.0;
  return u;
}

}  // namespace

static void BM_FomRhs(benchmark::State& state) {
  FomConfig cfg = FomConfig::reference();
  cfg.grid_points = static_cast<int>(state.range(0));
  cfg.solid_mask = solid_region_mask(cfg.grid_points, cfg.domain_length, 1.0, 4.0);
  const Vector x = Vector::Constant(cfg.state_dim(), cfg.initial_temperature);
  for (auto _ : state) benchmark::DoNotOptimize(fom_rhs(x, Control{1.0, 0.0}, cfg));
  state.SetItemsProcessed(state.iterations() * cfg.state_dim());
}
BENCHMARK(BM_FomRhs)->Arg(100)->Arg(200)->Arg(800);

static void BM_ComputePod(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const Matrix snapshots = random_matrix(rng, state.range(0), 603);
  for (auto _ : state) benchmark::DoNotOptimize(compute_pod(snapshots, 8));
}
BENCHMARK(BM_ComputePod)->Arg(400)->Arg(1600)->Unit(benchmark::kMillisecond);

static void BM_DeimPoints(benchmark::State& state) {
  std::mt19937_64 rng(2);
  const Matrix basis = random_matrix(rng, 400, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(deim_points(basis));
}
BENCHMARK(BM_DeimPoints)->Arg(8)->Arg(32);

static void BM_Rollout(benchmark::State& state) {
  std::mt19937_64 rng(3);
  const Index r = state.range(0);
  const Index k = 600;
  const RomOperators ops = damped_operators(rng, r);
  const Vector s0 = random_matrix(rng, r, 1, 0.1);
  const auto controls = switch_off(k);
  for (auto _ : state) benchmark::DoNotOptimize(forward_rollout(ops, nullptr, s0, controls, 1.0, k));
  state.SetItemsProcessed(state.iterations() * k);
}
BENCHMARK(BM_Rollout)->Arg(4)->Arg(8)->Arg(16);

static void BM_AdjointGradient(benchmark::State& state) {
  std::mt19937_64 rng(4);
  const Index r = state.range(0);
  const Index k = 200;
  const RomOperators truth = damped_operators(rng, r);
  CalibrationProblem problem;
  problem.dt = 1.0;
  problem.include_quadratic = true;
  for (int i = 0; i < 3; ++i) {
    const auto controls = switch_off(k);
    problem.reduced_trajectories.push_back(
        forward_rollout(truth, nullptr, random_matrix(rng, r, 1, 0.1), controls, problem.dt, k));
    problem.controls.push_back(controls);
  }
  RomOperators start = truth;
  start.a += random_matrix(rng, r, r, 1e-5);
  for (auto _ : state) benchmark::DoNotOptimize(adjoint_gradient(start, problem));
}
BENCHMARK(BM_AdjointGradient)->Arg(4)->Arg(8)->Arg(16)->Unit(benchmark::kMicrosecond);
BENCHMARK_MAIN();
