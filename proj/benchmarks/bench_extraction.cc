#include <benchmark/benchmark.h>

#include "mpp/convnet.h"
#include "mpp/pyramid.h"
#include "mpp/random.h"

namespace mpp {
namespace {

Tensor noise_image(std::size_t edge) {
  Rng rng(5);
  Tensor t(1, edge, edge);
  for (float& v : t.data()) v = static_cast<float>(rng.uniform());
  return t;
}

void extract(benchmark::State& state, bool naive) {
  const NetworkSpec net = make_toy_network(7);
  const Tensor image = noise_image(96);
  const auto scales = static_cast<std::uint32_t>(state.range(0));
  ExtractionOptions options;
  options.naive = naive;
  std::uint64_t macs = 0;
  for (auto _ : state) {
    ForwardStats stats;
    DescriptorSet set = extract_all(net, image, scales, options, &stats);
    benchmark::DoNotOptimize(set);
    macs = stats.macs;
  }
  state.counters["macs"] = static_cast<double>(macs);
}

void BM_ExtractDense(benchmark::State& state) { extract(state, false); }
void BM_ExtractNaive(benchmark::State& state) { extract(state, true); }

BENCHMARK(BM_ExtractDense)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExtractNaive)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace mpp

BENCHMARK_MAIN();
