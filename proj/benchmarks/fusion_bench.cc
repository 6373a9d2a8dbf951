// Micro-benchmarks for the mask algebra and both fusion strategies on
// 640x480 synthetic scenes.

#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "ocfusion/fusion.h"
#include "ocfusion/mask.h"
#include "ocfusion/occlusion.h"
#include "ocfusion/scenegen.h"

namespace {

using namespace ocfusion;

const ImageGrid kGrid(640, 480);

// Two overlapping discs; roughly a third of each lies in the other.
std::pair<BinaryMask, BinaryMask> disc_pair() {
  std::vector<std::uint8_t> a(kGrid.pixel_count()), b(kGrid.pixel_count());
  for (std::int32_t y = 0; y < kGrid.height(); ++y) {
    for (std::int32_t x = 0; x < kGrid.width(); ++x) {
      const auto dx = x - 280, dy = y - 240, ex = x - 360;
      const auto k = static_cast<std::size_t>(y) * kGrid.width() + x;
      a[k] = dx * dx + dy * dy < 120 * 120;
      b[k] = ex * ex + dy * dy < 120 * 120;
    }
  }
  return {BinaryMask::from_bitmap(kGrid, a), BinaryMask::from_bitmap(kGrid, b)};
}

void BM_Intersect(benchmark::State& state) {
  const auto [a, b] = disc_pair();
  for (auto _ : state) benchmark::DoNotOptimize(intersect(a, b));
}
BENCHMARK(BM_Intersect);

void BM_IntersectionArea(benchmark::State& state) {
  const auto [a, b] = disc_pair();
  for (auto _ : state) benchmark::DoNotOptimize(intersection_area(a, b));
}
BENCHMARK(BM_IntersectionArea);

void BM_Subtract(benchmark::State& state) {
  const auto [a, b] = disc_pair();
  for (auto _ : state) benchmark::DoNotOptimize(subtract(a, b));
}
BENCHMARK(BM_Subtract);

void BM_Unite(benchmark::State& state) {
  const auto [a, b] = disc_pair();
  for (auto _ : state) benchmark::DoNotOptimize(unite(a, b));
}
BENCHMARK(BM_Unite);

SceneGenConfig crowded_config() {
  SceneGenConfig c;
  c.width = 640;
  c.height = 480;
  c.min_instances = 30;
  c.max_instances = 50;
  c.min_extent = 0.05;
  c.max_extent = 0.2;
  c.confidence_model = ConfidenceModel::kAdversarial;
  c.perturbation.morph_radius = 1;
  c.perturbation.spurious_rate = 0.3;
  return c;
}

void BM_FuseByConfidence(benchmark::State& state) {
  const Scene scene = generate_scene(crowded_config(), 3);
  const FusionParams params;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        fuse_by_confidence(scene.proposals, scene.semantic, scene.catalog, params));
  }
  state.counters["proposals"] = static_cast<double>(scene.proposals.size());
}
BENCHMARK(BM_FuseByConfidence)->Unit(benchmark::kMillisecond);

void BM_FuseWithOcclusion(benchmark::State& state) {
  const Scene scene = generate_scene(crowded_config(), 3);
  const FusionParams params;
  const auto matrix = derive_gt_occlusion(scene, params.occlusion_ratio);
  const auto predictor = oracle_predictor(
      matrix, scene.proposals,
      match_proposals(scene.proposals, *scene.gt_instances));
  for (auto _ : state) {
    benchmark::DoNotOptimize(fuse_with_occlusion(
        scene.proposals, scene.semantic, scene.catalog, params, predictor));
  }
  state.counters["proposals"] = static_cast<double>(scene.proposals.size());
}
BENCHMARK(BM_FuseWithOcclusion)->Unit(benchmark::kMillisecond);

void BM_GenerateScene(benchmark::State& state) {
  const SceneGenConfig config;
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_scene(config, ++seed));
}
BENCHMARK(BM_GenerateScene)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
