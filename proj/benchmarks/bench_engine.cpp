#include <benchmark/benchmark.h>

#include <cmath>

#include "qcd/engine.hpp"
#include "qcd/metrics.hpp"
#include "qcd/sim.hpp"

using namespace qcd;

namespace {

// Pre-change steps through the engine with observations drawn inline.
void run_steps(benchmark::State& state, const PolicyParams& params, std::vector<double> means) {
  const Engine engine(params, gaussian_mean_shift_models(means));
  Stream env(1);
  Stream control(2);
  auto s = engine.init(control);
  for (auto _ : state) {
    const Action a = engine.next_action(s);
    std::optional<double> x;
    if (a.kind == ActionKind::sample) x = engine.models()[static_cast<std::size_t>(a.experiment) - 1].sample(Regime::pre, env);
    benchmark::DoNotOptimize(engine.step(s, x, control));
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_StepCusum(benchmark::State& state) { run_steps(state, PolicyParams::cusum(INFINITY), {1.0}); }
void BM_StepTwoExperiment(benchmark::State& state) {
  run_steps(state, PolicyParams::two_experiment(INFINITY, 1.0, 2.0), {0.75, 1.0});
}
void BM_StepThreeExperiment(benchmark::State& state) {
  run_steps(state, PolicyParams::three_experiment(INFINITY, 2.0, 1.0, 5.5, 2.0), {0.5, 0.75, 1.0});
}
void BM_StepDataEfficient(benchmark::State& state) {
  run_steps(state, PolicyParams::de_two_experiment(INFINITY, 1.0, 1.0, 3.0, 2.0, 0.1), {0.75, 1.0});
}

void BM_EpisodeWadd(benchmark::State& state) {
  Scenario sc;
  sc.models = gaussian_mean_shift_models(std::vector<double>{0.75, 1.0});
  const Policy p = PolicyParams::two_experiment(std::log(1000.0), 1.0, 2.0);
  std::uint64_t trial = 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_episode(p, sc, 1, trial++, {.record_steps = false}));
}

void BM_PorDirect(benchmark::State& state) {
  const auto models = gaussian_mean_shift_models(std::vector<double>{0.5, 0.75, 1.0});
  MonteCarloOptions o;
  o.trials = 1;
  o.threads = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        estimate_por_direct(PolicyParams::three_experiment(INFINITY, 1.0, 1.0, 0.8, 2.0), models, state.range(0), o));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_StepCusum);
BENCHMARK(BM_StepTwoExperiment);
BENCHMARK(BM_StepThreeExperiment);
BENCHMARK(BM_StepDataEfficient);
BENCHMARK(BM_EpisodeWadd);
BENCHMARK(BM_PorDirect)->Arg(100'000);

BENCHMARK_MAIN();
