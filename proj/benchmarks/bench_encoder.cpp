#include <benchmark/benchmark.h>

#include "sdefim/catalog.hpp"
#include "sdefim/metrics.hpp"
#include "sdefim/normalization.hpp"
#include "sdefim/trainer.hpp"

using namespace sdefim;

namespace {

ObservationSet normalized_context(int n) {
  const CatalogEntry e = canonical_system("wang-2d");
  const ObservationLayout layout{0.002, 5, 1, n + 1};
  const ObservationSet raw = to_observation_set(simulate_layout(e.system, e.initial, layout, RandomStream(1))).set;
  return fit_and_normalize(raw).first;
}

void encode(benchmark::State& state, AttentionKind kind) {
  ModelConfig model;
  model.attention = kind;
  const ParameterSet params = initialize_parameters(model, 1);
  const ObservationSet ctx = normalized_context(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(encoded_context(model, params, ctx));
  state.SetComplexityN(state.range(0));
}

void BM_EncodeLinear(benchmark::State& s) { encode(s, AttentionKind::Linear); }
void BM_EncodeSoftmax(benchmark::State& s) { encode(s, AttentionKind::Softmax); }

void BM_InferGrid(benchmark::State& state) {
  const ModelConfig model;
  const ParameterSet params = initialize_parameters(model, 1);
  const CatalogEntry e = canonical_system("wang-2d");
  const ObservationSet ctx =
      to_observation_set(simulate_layout(e.system, e.initial, {0.002, 5, 1, 1025}, RandomStream(2))).set;
  const Eigen::MatrixXd loc = EvalGrid{e.bounds, static_cast<int>(state.range(0))}.points();
  for (auto _ : state) benchmark::DoNotOptimize(infer(model, params, ctx, loc));
}

}  // namespace

BENCHMARK(BM_EncodeLinear)->RangeMultiplier(4)->Range(128, 2048)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_EncodeSoftmax)->RangeMultiplier(4)->Range(128, 2048)->Unit(benchmark::kMillisecond)->Complexity();
BENCHMARK(BM_InferGrid)->Arg(64)->Arg(1024)->Unit(benchmark::kMillisecond);
