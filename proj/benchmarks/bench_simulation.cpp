#include <benchmark/benchmark.h>

#include "sdefim/catalog.hpp"
#include "sdefim/prior.hpp"

using namespace sdefim;

namespace {

void BM_SimulateDoubleWell(benchmark::State& state) {
  const CatalogEntry e = canonical_system("double-well");
  const ObservationLayout layout{0.002, 1, static_cast<int>(state.range(0)), 500};
  for (auto _ : state) benchmark::DoNotOptimize(simulate_layout(e.system, e.initial, layout, RandomStream(3)));
  state.SetItemsProcessed(state.iterations() * state.range(0) * (layout.length - 1));
}

void BM_SimulateLorenz(benchmark::State& state) {
  const CatalogEntry e = canonical_system("lorenz");
  for (auto _ : state) benchmark::DoNotOptimize(simulate_layout(e.system, e.initial, e.reference, RandomStream(4)));
}

void BM_GenerateEquation(benchmark::State& state) {
  const PriorConfig prior;
  const int d = static_cast<int>(state.range(0));
  RandomStream rng(5);
  for (auto _ : state) benchmark::DoNotOptimize(generate_equation(d, 0, prior, rng));
}

}  // namespace

BENCHMARK(BM_SimulateDoubleWell)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulateLorenz)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GenerateEquation)->DenseRange(1, 3)->Unit(benchmark::kMillisecond);
