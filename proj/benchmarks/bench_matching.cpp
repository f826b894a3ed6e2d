#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "t4g/matching.hpp"
#include "t4g/synthgen.hpp"

using namespace t4g;

namespace {

Tensor random_volume(int frames, int h, int w, int c) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(frames, h, w, c);
  for (double& v : t.values()) v = g(rng);
  return t;
}

}  // namespace

static void BM_CostVolume(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0)), c = static_cast<int>(state.range(1));
  const Tensor t = random_volume(2, side, side, c);
  const std::vector<double> q = sample_feature(t, 0, {1.5, 2.5});
  for (auto _ : state) benchmark::DoNotOptimize(cost_volume(q, t, 1));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_CostVolume)->Args({24, 16})->Args({48, 64})->Args({44, 640});

static void BM_SoftArgmax(benchmark::State& state) {
  const int side = static_cast<int>(state.range(0));
  const Tensor t = random_volume(2, side, side, 16);
  const CostVolume cv = cost_volume(sample_feature(t, 0, {3.0, 3.0}), t, 1);
  MatchConfig m;
  m.window_radius = static_cast<double>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(soft_argmax(cv, m));
}
BENCHMARK(BM_SoftArgmax)->Args({24, 3})->Args({48, 35});

static void BM_TrackZeroShot(benchmark::State& state) {
  SceneGenConfig gen;
  const SceneSpec spec = random_scene(gen, 3);
  const FeatureVolume f = ideal_features(spec, {static_cast<int>(state.range(0)), gen.cell_px, CodeKind::dense, 0.1});
  std::vector<Query> queries;
  for (int y = 0; y < spec.pixels.height; y += 4) {
    for (int x = 0; x < spec.pixels.width; x += 4) queries.push_back({{double(x), double(y)}, 0});
  }
  for (auto _ : state) benchmark::DoNotOptimize(track_zero_shot(f, spec.pixels, queries, {}));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(queries.size()));
}
BENCHMARK(BM_TrackZeroShot)->Arg(16)->Arg(128)->Unit(benchmark::kMillisecond);
