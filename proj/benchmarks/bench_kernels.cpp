#include <benchmark/benchmark.h>

#include "cfrg/image.hpp"
#include "cfrg/ops.hpp"
#include "cfrg/synth.hpp"

using namespace cfrg;

static void ConvForward(benchmark::State& state) {
  const int res = (int)state.range(0);
  RngStream rng(1);
  Tensor x = Tensor::randn({1, 16, res, res}, rng);
  Tensor w = Tensor::randn({32, 16, 3, 3}, rng);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor y = ops::conv2d(x, w, Tensor(), 1, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetComplexityN(res);
}
BENCHMARK(ConvForward)->Arg(16)->Arg(32)->Arg(64)->Complexity();

static void ConvTrainStep(benchmark::State& state) {
  const int res = (int)state.range(0);
  RngStream rng(2);
  Tensor x = Tensor::randn({1, 16, res, res}, rng);
  Tensor w = Tensor::randn({32, 16, 3, 3}, rng, 1.0, true);
  for (auto _ : state) {
    w.zero_grad();
    Tensor loss = ops::mean_all(ops::conv2d(x, w, Tensor(), 1, 1));
    loss.backward();
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(ConvTrainStep)->Arg(16)->Arg(32);

static void CosineMap(benchmark::State& state) {
  const int res = (int)state.range(0);
  RngStream rng(3);
  Tensor a = Tensor::randn({1, 64, res, res}, rng);
  Tensor b = Tensor::randn({1, 64, res, res}, rng);
  NoGradGuard guard;
  for (auto _ : state) {
    Tensor d = ops::cosine_similarity_map(a, b);
    benchmark::DoNotOptimize(d.data().data());
  }
}
BENCHMARK(CosineMap)->Arg(16)->Arg(64);

static void GaussianBlurSigma4(benchmark::State& state) {
  const int res = (int)state.range(0);
  Map2D m(res, res, 0.0);
  m.at(res / 2, res / 2) = 1.0;
  for (auto _ : state) {
    Map2D out = gaussian_blur(m, 4.0);
    benchmark::DoNotOptimize(out.data.data());
  }
}
BENCHMARK(GaussianBlurSigma4)->Arg(64)->Arg(256);

static void PerlinMask(benchmark::State& state) {
  SynthConfig cfg;
  uint64_t seed = 0;
  for (auto _ : state) {
    RngStream rng(seed++);
    Mask m = perlin_mask((int)state.range(0), (int)state.range(0), cfg, rng);
    benchmark::DoNotOptimize(m.data.data());
  }
}
BENCHMARK(PerlinMask)->Arg(64)->Arg(256);
