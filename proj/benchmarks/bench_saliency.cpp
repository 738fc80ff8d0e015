#include <benchmark/benchmark.h>

#include "camalign/model.hpp"
#include "camalign/rng.hpp"
#include "camalign/saliency.hpp"

using namespace camalign;

namespace {

Image noise_image(std::uint64_t seed) {
  Rng rng(seed);
  Image img(64, 64);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

void BM_Cam(benchmark::State& st) {
  const auto method = static_cast<CamMethod>(st.range(0));
  const auto model = init_model(ModelConfig::desk_default(64, 64, 1), 5);
  const auto img = noise_image(6);
  for (auto _ : st) benchmark::DoNotOptimize(compute_saliency(method, model, img, 0));
  st.SetLabel(std::string(to_string(method)));
}
BENCHMARK(BM_Cam)->DenseRange(0, 2)->Unit(benchmark::kMicrosecond);

void BM_Upsample(benchmark::State& st) {
  Rng rng(7);
  std::vector<double> src(64);
  for (auto& v : src) v = rng.uniform();
  for (auto _ : st) benchmark::DoNotOptimize(upsample_bilinear(src, 8, 8, 64, 64));
}
BENCHMARK(BM_Upsample);

}  // namespace

BENCHMARK_MAIN();
