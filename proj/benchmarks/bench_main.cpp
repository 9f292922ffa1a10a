#include <benchmark/benchmark.h>

#include <numeric>

#include "ctxforest/cascade.hpp"
#include "ctxforest/distance.hpp"
#include "ctxforest/forest.hpp"
#include "ctxforest/graphcut.hpp"
#include "ctxforest/maxflow.hpp"
#include "ctxforest/phantom.hpp"
#include "ctxforest/rng.hpp"

using namespace ctxforest;

namespace {

const Phantom& phantom() {
  static const Phantom p = generate_phantom(default_phantom_spec(), 0);
  return p;
}

void BM_SignedDistance(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Phantom p = generate_phantom(default_phantom_spec({n, n, n}), 0);
  for (auto _ : state) benchmark::DoNotOptimize(signed_distance_transform(p.bone_mask, kFemur));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(p.bone_mask.size()));
}
BENCHMARK(BM_SignedDistance)->Arg(64)->Arg(96)->Unit(benchmark::kMillisecond);

void BM_FeatureEvaluation(benchmark::State& state) {
  const Phantom& p = phantom();
  const FeatureContext ctx = precompute_context(p.intensity, p.bone_mask, p.landmarks);
  const FeatureConfig cfg;
  Rng rng(1);
  const auto counts = landmark_counts(ctx);
  const auto pool = sample_feature_pool(rng, cfg, 1, counts);
  const Band band = band_for(ctx, cfg);
  std::size_t k = 0;
  for (auto _ : state) {
    const std::uint32_t v = band.voxels()[k++ % band.size()];
    for (const auto& f : pool) benchmark::DoNotOptimize(evaluate_feature(f, v, ctx));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pool.size()));
}
BENCHMARK(BM_FeatureEvaluation);

void BM_ForestPredictVolume(benchmark::State& state) {
  const Phantom& p = phantom();
  TrainingCase tc{"b", p.intensity, p.bone_mask, p.landmarks, p.ground_truth};
  CascadeConfig cfg;
  cfg.num_passes = 1;
  cfg.forest.num_trees = static_cast<std::size_t>(state.range(0));
  cfg.samples_per_class_per_volume = 1000;
  const CascadeModel model = train_cascade(std::span(&tc, 1), cfg, 3);
  const FeatureContext ctx = precompute_context(p.intensity, p.bone_mask, p.landmarks);
  const Band band = band_for(ctx, cfg.forest.features);
  for (auto _ : state) benchmark::DoNotOptimize(predict_volume(model.passes[0], ctx, band));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(band.size()));
}
BENCHMARK(BM_ForestPredictVolume)->Arg(5)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_MaxFlowGrid(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  FlowNetwork net(n * n + 2, n * n, n * n + 1);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const std::size_t v = y * n + x;
      net.add_arc(n * n, v, rng.uniform(0, 10));
      net.add_arc(v, n * n + 1, rng.uniform(0, 10));
      if (x + 1 < n) net.add_arc(v, v + 1, rng.uniform(0, 5), rng.uniform(0, 5));
      if (y + 1 < n) net.add_arc(v, v + n, rng.uniform(0, 5), rng.uniform(0, 5));
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(max_flow(net));
}
BENCHMARK(BM_MaxFlowGrid)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
