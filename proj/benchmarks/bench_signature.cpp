#include <benchmark/benchmark.h>

#include "sdefim/random.hpp"
#include "sdefim/signature.hpp"

using namespace sdefim;

namespace {

PathStates random_walk(int length, int d, std::uint64_t seed) {
  RandomStream rng(seed);
  PathStates p = PathStates::Zero(length, d);
  for (int i = 1; i < length; ++i)
    for (int j = 0; j < d; ++j) p(i, j) = p(i - 1, j) + 0.1 * rng.normal();
  return p;
}

void BM_SignatureKernel(benchmark::State& state) {
  MmdConfig cfg;
  cfg.level = static_cast<int>(state.range(1));
  cfg.bandwidth = 1.0;
  const int len = static_cast<int>(state.range(0));
  const PathStates a = random_walk(len, 3, 1), b = random_walk(len, 3, 2);
  for (auto _ : state) benchmark::DoNotOptimize(signature_kernel(a, b, cfg));
}

void BM_MmdUnbiased(benchmark::State& state) {
  MmdConfig cfg;
  std::vector<PathStates> p, q;
  for (int k = 0; k < state.range(0); ++k) {
    p.push_back(random_walk(41, 3, 10 + k));
    q.push_back(random_walk(41, 3, 1000 + k));
  }
  for (auto _ : state) benchmark::DoNotOptimize(mmd_unbiased(p, q, cfg));
}

}  // namespace

BENCHMARK(BM_SignatureKernel)->ArgsProduct({{41, 200, 500}, {3, 5}})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_MmdUnbiased)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);
