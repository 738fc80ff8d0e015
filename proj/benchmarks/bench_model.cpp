#include <vector>

#include <benchmark/benchmark.h>

#include "camalign/balance.hpp"
#include "camalign/model.hpp"
#include "camalign/rng.hpp"

using namespace camalign;

namespace {

std::vector<Image> random_batch(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Image> out;
  for (int i = 0; i < n; ++i) {
    Image img(64, 64);
    for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
    out.push_back(std::move(img));
  }
  return out;
}

void BM_Forward(benchmark::State& st) {
  const auto model = init_model(ModelConfig::desk_default(64, 64, 1), 1);
  const auto images = random_batch(static_cast<int>(st.range(0)), 2);
  std::vector<const Image*> ptrs;
  for (const auto& i : images) ptrs.push_back(&i);
  const auto precision = st.range(1) ? Precision::Double : Precision::Single;
  for (auto _ : st) benchmark::DoNotOptimize(batch_logits(model, ptrs, precision));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_Forward)->Args({1, 0})->Args({32, 0})->Args({32, 1});

void BM_LossAndGradient(benchmark::State& st) {
  const int objectives = static_cast<int>(st.range(1));
  const auto model = init_model(ModelConfig::desk_default(64, 64, objectives), 1);
  const auto images = random_batch(static_cast<int>(st.range(0)), 3);
  std::vector<const Image*> ptrs;
  std::vector<std::vector<int>> targets(images.size(), std::vector<int>(static_cast<std::size_t>(objectives), 0));
  std::vector<const std::vector<int>*> tptrs;
  for (std::size_t i = 0; i < images.size(); ++i) {
    ptrs.push_back(&images[i]);
    targets[i][0] = static_cast<int>(i % 2);
    tptrs.push_back(&targets[i]);
  }
  const auto weights = unbalanced_weights(static_cast<std::size_t>(objectives));
  for (auto _ : st) benchmark::DoNotOptimize(loss_and_gradient(model, ptrs, tptrs, weights));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}
BENCHMARK(BM_LossAndGradient)->Args({32, 1})->Args({32, 8});

void BM_ForwardWithRecord(benchmark::State& st) {
  const auto model = init_model(ModelConfig::desk_default(64, 64, 1), 1);
  const auto images = random_batch(1, 4);
  for (auto _ : st) benchmark::DoNotOptimize(forward_with_record(model, images[0], kLastConv, 0));
}
BENCHMARK(BM_ForwardWithRecord);

}  // namespace

BENCHMARK_MAIN();
