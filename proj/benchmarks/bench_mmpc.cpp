#include <random>
#include <string>

#include <benchmark/benchmark.h>

#include "mmpc/scenario.hpp"
#include "mmpc/sim.hpp"

namespace {

using namespace mmpc;

std::string scenario_path(bool multiplexed) {
  return std::string(MMPC_SCENARIO_DIR) + (multiplexed ? "/spring_mass_mmpc.json" : "/spring_mass_smpc.json");
}

// Whole robust spring-mass run; the counter is the mean solver time per QP.
void BM_SpringMassRun(benchmark::State& state) {
  ScenarioOverrides o;
  o.control_horizon = static_cast<int>(state.range(1));
  const auto cfg = load_scenario(scenario_path(state.range(0) != 0), o);
  double per_qp = 0.0;
  int variables = 0;
  for (auto _ : state) {
    const auto res = run_closed_loop(cfg.sim);
    per_qp = res.metrics.solver_seconds / res.metrics.qp_count;
    variables = res.metrics.decision_variables;
    benchmark::DoNotOptimize(res.metrics.control_energy);
  }
  state.counters["us_per_qp"] = per_qp * 1e6;
  state.counters["variables"] = variables;
}
BENCHMARK(BM_SpringMassRun)
    ->ArgNames({"mmpc", "horizon"})
    ->ArgsProduct({{1, 0}, {5, 8, 16, 31}})
    ->Unit(benchmark::kMillisecond);

void BM_DenseQp(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  Matrix s(n, n), a(2 * n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s(i, j) = nd(rng);
  for (int i = 0; i < 2 * n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
  QpInstance qp;
  qp.hessian = s * s.transpose() + n * Matrix::Identity(n, n);
  qp.gradient = Vector::NullaryExpr(n, [&] { return 10.0 * nd(rng); });
  qp.a_in = a;
  qp.b_in = Vector::Ones(2 * n);
  qp.in_meta.assign(2 * n, RowTag{});
  qp.a_eq = Matrix::Zero(0, n);
  qp.b_eq = Vector::Zero(0);
  const auto factor = factor_hessian(qp.hessian);
  for (auto _ : state) benchmark::DoNotOptimize(solve(qp, factor).objective);
}
BENCHMARK(BM_DenseQp)->RangeMultiplier(2)->Range(8, 128);

}  // namespace

BENCHMARK_MAIN();
