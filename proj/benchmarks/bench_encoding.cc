#include <benchmark/benchmark.h>

#include "mpp/fisher.h"
#include "mpp/gmm.h"
#include "mpp/pooling.h"
#include "mpp/random.h"

namespace mpp {
namespace {

GmmModel make_model(std::size_t k, std::size_t d) {
  Rng rng(1);
  GmmModel m;
  m.num_components = k;
  m.dim = d;
  m.weights.assign(k, 1.0 / static_cast<double>(k));
  for (std::size_t i = 0; i < k * d; ++i) {
    m.means.push_back(rng.normal());
    m.sigmas.push_back(0.5 + rng.uniform());
  }
  return m;
}

DescriptorSet make_set(std::size_t d, std::uint32_t scales) {
  Rng rng(2);
  DescriptorSet set(d, scales);
  std::vector<float> row(d);
  for (std::uint32_t s = 1; s <= scales; ++s) {
    const std::size_t side = 4 * s;
    for (std::size_t i = 0; i < side * side; ++i) {
      for (float& v : row) v = static_cast<float>(rng.normal());
      const float edge = 1.0f / static_cast<float>(side);
      PatchGeometry g;
      g.scale = s;
      g.center_y = (static_cast<float>(i / side) + 0.5f) * edge;
      g.center_x = (static_cast<float>(i % side) + 0.5f) * edge;
      g.edge = edge;
      set.append(row, g);
    }
  }
  return set;
}

void BM_EncodeFv(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const GmmModel m = make_model(k, 32);
  const DescriptorSet set = make_set(32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(encode_fv(m, set));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(set.size()));
}
BENCHMARK(BM_EncodeFv)->RangeMultiplier(4)->Range(4, 256);

void BM_Pool(benchmark::State& state) {
  const auto strategy = static_cast<PoolStrategy>(state.range(0));
  const GmmModel m = make_model(32, 32);
  const DescriptorSet set = make_set(32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pool(strategy, m, set));
  state.SetLabel(pool_strategy_name(strategy));
}
BENCHMARK(BM_Pool)->Arg(1)->Arg(2)->Arg(3)->Arg(5);

void BM_PoolAp(benchmark::State& state) {
  const DescriptorSet set = make_set(32, 4);
  for (auto _ : state) benchmark::DoNotOptimize(pool_ap(set));
}
BENCHMARK(BM_PoolAp);

}  // namespace
}  // namespace mpp

BENCHMARK_MAIN();
