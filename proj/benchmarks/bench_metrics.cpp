#include <benchmark/benchmark.h>

#include "cfrg/metrics.hpp"
#include "cfrg/rng.hpp"

using namespace cfrg;

static void Auroc(benchmark::State& state) {
  const int n = (int)state.range(0);
  RngStream rng(1);
  std::vector<real> scores((size_t)n);
  std::vector<uint8_t> labels((size_t)n);
  for (int i = 0; i < n; ++i) {
    scores[(size_t)i] = rng.uniform(0, 1);
    labels[(size_t)i] = rng.bernoulli(0.3) ? 1 : 0;
  }
  labels[0] = 1;
  labels[1] = 0;
  for (auto _ : state) benchmark::DoNotOptimize(auroc(scores, labels));
  state.SetComplexityN(n);
}
BENCHMARK(Auroc)->Range(1 << 10, 1 << 20)->Complexity();

static void AveragePrecision(benchmark::State& state) {
  const int n = (int)state.range(0);
  RngStream rng(2);
  std::vector<real> scores((size_t)n);
  std::vector<uint8_t> labels((size_t)n);
  for (int i = 0; i < n; ++i) {
    scores[(size_t)i] = rng.uniform(0, 1);
    labels[(size_t)i] = rng.bernoulli(0.3) ? 1 : 0;
  }
  labels[0] = 1;
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(scores, labels));
  state.SetComplexityN(n);
}
BENCHMARK(AveragePrecision)->Range(1 << 10, 1 << 20)->Complexity();

static void ProCurve(benchmark::State& state) {
  const int side = (int)state.range(0);
  RngStream rng(3);
  std::vector<Map2D> maps;
  std::vector<Mask> masks;
  for (int i = 0; i < 8; ++i) {
    Map2D s(side, side);
    for (real& v : s.data) v = rng.uniform(0, 1);
    Mask m(side, side, 0);
    for (int b = 0; b < 4; ++b) {
      const int cy = (int)rng.uniform_int(2, side - 3), cx = (int)rng.uniform_int(2, side - 3);
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) m.at(cy + dy, cx + dx) = 1;
    }
    maps.push_back(std::move(s));
    masks.push_back(std::move(m));
  }
  for (auto _ : state) benchmark::DoNotOptimize(pro_curve(maps, masks));
}
BENCHMARK(ProCurve)->Arg(64)->Arg(256);

static void ConnectedComponents(benchmark::State& state) {
  const int side = (int)state.range(0);
  RngStream rng(4);
  Mask m(side, side, 0);
  for (uint8_t& v : m.data) v = rng.bernoulli(0.4) ? 1 : 0;
  for (auto _ : state) {
    ComponentLabels cc = connected_components(m);
    benchmark::DoNotOptimize(cc.labels.data());
  }
}
BENCHMARK(ConnectedComponents)->Arg(64)->Arg(512);

BENCHMARK_MAIN();
