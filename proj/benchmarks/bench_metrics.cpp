#include <vector>

#include <benchmark/benchmark.h>

#include "camalign/metrics.hpp"
#include "camalign/rng.hpp"

using namespace camalign;

namespace {

void BM_Auroc(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  Rng rng(1);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = rng.bernoulli(0.15) ? 1 : 0;
    scores[i] = rng.uniform() + 0.3 * labels[i];
  }
  labels[0] = 1;
  labels[1] = 0;
  for (auto _ : st) benchmark::DoNotOptimize(auroc(scores, labels));
  st.SetComplexityN(st.range(0));
}
BENCHMARK(BM_Auroc)->RangeMultiplier(4)->Range(256, 65536)->Complexity(benchmark::oNLogN);

void BM_ProportionalEnergy(benchmark::State& st) {
  Rng rng(2);
  SaliencyMap map;
  map.height = 64;
  map.width = 64;
  map.values.resize(64 * 64);
  for (auto& v : map.values) v = rng.uniform();
  const std::vector<BoundingBox> boxes{{10, 12, 12, 11}, {40, 30, 10, 14}};
  for (auto _ : st) benchmark::DoNotOptimize(proportional_energy(map, boxes));
}
BENCHMARK(BM_ProportionalEnergy);

}  // namespace

BENCHMARK_MAIN();
