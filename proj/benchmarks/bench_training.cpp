#include <random>

#include <benchmark/benchmark.h>

#include "t4g/corrloss.hpp"
#include "t4g/micronet.hpp"
#include "t4g/synthgen.hpp"

using namespace t4g;

namespace {

Tensor random_volume(int frames, int h, int w, int c) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(frames, h, w, c);
  for (double& v : t.values()) v = g(rng);
  return t;
}

ConvLayer random_layer(int c) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.2);
  ConvLayer l = ConvLayer::zeros(3, c, c, Activation::relu);
  for (double& v : l.kernel) v = g(rng);
  return l;
}

}  // namespace

static void BM_ConvForward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const Tensor x = random_volume(8, 12, 20, c);
  const ConvLayer l = random_layer(c);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(l, x));
}
BENCHMARK(BM_ConvForward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_ConvBackward(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const Tensor x = random_volume(8, 12, 20, c);
  const ConvLayer l = random_layer(c);
  const Tensor y = conv_forward(l, x);
  const Tensor up = random_volume(8, 12, 20, c);
  for (auto _ : state) benchmark::DoNotOptimize(conv_backward(l, x, y, up));
}
BENCHMARK(BM_ConvBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_CorrLoss(benchmark::State& state) {
  SceneGenConfig gen;
  gen.pixels = {12, 20};
  gen.cell_px = 1;
  gen.min_size_cells = 2;
  gen.max_size_cells = 3;
  const SceneSpec spec = random_scene(gen, 4);
  const Tensor f = to_tensor(ideal_features(spec, {16, 1, CodeKind::dense, 0.1}));
  const CorrespondenceSet pairs =
      sample_pairs(render_scene(spec).tracks, nullptr, static_cast<std::size_t>(state.range(0)), 0.5, 1).pairs;
  for (auto _ : state) benchmark::DoNotOptimize(corr_loss(f, spec.pixels, pairs, {}, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CorrLoss)->Arg(64)->Arg(512)->Unit(benchmark::kMillisecond);
