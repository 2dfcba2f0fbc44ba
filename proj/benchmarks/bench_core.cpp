#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "eoscount/counter.hpp"
#include "eoscount/pec.hpp"
#include "eoscount/pipeline.hpp"
#include "eoscount/segmenter.hpp"
#include "eoscount/synth.hpp"
#include "eoscount/tiler.hpp"

namespace eoscount {
namespace {

std::vector<EosPoint> scattered_points(int64_t n, int64_t side) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, static_cast<double>(side));
  std::vector<EosPoint> pts;
  for (int64_t i = 0; i < n; ++i) pts.push_back({u(rng), u(rng), 1});
  return pts;
}

void BM_PeakWindow(benchmark::State& state) {
  const auto pts = scattered_points(state.range(0), 65536);
  for (auto _ : state) benchmark::DoNotOptimize(peak_window(pts, 2144, 65536, 65536));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_PeakWindow)->RangeMultiplier(4)->Range(256, 65536)->Complexity(benchmark::oNLogN);

void BM_PeakWindowDensity(benchmark::State& state) {
  const auto pts = scattered_points(state.range(0), 65536);
  for (auto _ : state) benchmark::DoNotOptimize(peak_window_density(pts, 2144, 65536, 65536));
}
BENCHMARK(BM_PeakWindowDensity)->RangeMultiplier(4)->Range(256, 65536);

BinaryMask blob_field(int64_t side) {
  std::mt19937_64 rng(9);
  BinaryMask m(side, side);
  std::uniform_int_distribution<int64_t> at(0, side - 48);
  for (int i = 0; i < side * side / 4000; ++i) {
    const int64_t x0 = at(rng), y0 = at(rng);
    for (int64_t y = y0; y < y0 + 48; ++y) {
      for (int64_t x = x0; x < x0 + 48; ++x) {
        if ((x - x0 - 24) * (x - x0 - 24) + (y - y0 - 24) * (y - y0 - 24) < 576) m.set(x, y);
      }
    }
  }
  return m;
}

void BM_ConnectedComponents(benchmark::State& state) {
  const BinaryMask m = blob_field(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(connected_components(m));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_ConnectedComponents)->Arg(448)->Arg(2048);

void BM_FusedComponents(benchmark::State& state) {
  const int64_t side = state.range(0);
  const BinaryMask m = blob_field(side);
  FusedMask f(side, side);
  f.fuse(m, BinaryMask(side, side), 0, 0);
  for (auto _ : state) benchmark::DoNotOptimize(connected_components(f, EosClass::kIntact));
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_FusedComponents)->Arg(2048)->Arg(8192);

void BM_FuseGrid(benchmark::State& state) {
  const int64_t side = state.range(0);
  const BinaryMask patch = blob_field(448);
  const auto grid = plan_grid(side, 448);
  for (auto _ : state) {
    FusedMask f(side, side);
    for (const int64_t y : grid) {
      for (const int64_t x : grid) f.fuse(patch, patch, x, y);
    }
    benchmark::DoNotOptimize(f);
  }
  state.SetItemsProcessed(state.iterations() * side * side);
}
BENCHMARK(BM_FuseGrid)->Arg(2048)->Arg(4096);

void BM_BackgroundFraction(benchmark::State& state) {
  SlideMeta meta;
  meta.id = "bench";
  meta.width_px = meta.height_px = 2048;
  const SynthCase c = generate_random_slide(3, meta, {10});
  const RgbRaster patch = c.slide.read_region({448, 448, 448, 448});
  const TilerConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(background_fraction(patch, cfg));
  state.SetItemsProcessed(state.iterations() * 448 * 448);
}
BENCHMARK(BM_BackgroundFraction);

void BM_AnalyzeSlide(benchmark::State& state) {
  SlideMeta meta;
  meta.id = "bench";
  meta.width_px = meta.height_px = state.range(0);
  const SynthCase c = generate_random_slide(4, meta, {16});
  PipelineConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(analyze_slide(c.slide, cfg, OracleSegmenter()));
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(BM_AnalyzeSlide)->Arg(4096)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace eoscount

BENCHMARK_MAIN();
