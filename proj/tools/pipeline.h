#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "ocfusion/fusion.h"
#include "ocfusion/occlusion.h"
#include "ocfusion/scene.h"

namespace ocfusion::tools {

struct SceneEntry {
  std::filesystem::path path;
  std::string stem;  // file name without ".json"
  Scene scene;
};

/// Runs fn(0..n-1) on up to `jobs` threads. If any call throws, the exception
/// of the lowest failing index is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::atomic<std::size_t>& next) {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        fn(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  std::atomic<std::size_t> next{0};
  if (workers <= 1) {
    body(next);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] { body(next); });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Loads every scene_*.json in `dir`. Throws DataError for an empty directory.
std::vector<SceneEntry> load_scene_dir(const std::filesystem::path& dir,
                                       int jobs = 1);

/// Catalog shared by all entries; throws DataError when they disagree.
const ClassCatalog& common_catalog(const std::vector<SceneEntry>& entries);

enum class Strategy { kConfidence, kOcclusion };
enum class PredictorKind { kOracle, kClassifier, kConfidence };

Strategy parse_strategy(const std::string& s);
PredictorKind parse_predictor(const std::string& s);
OcclusionScope parse_scope(const std::string& s);
SkipConvention parse_skip_convention(const std::string& s);

/// The oracle answers from `gt_occlusion` when given, otherwise from the
/// relation derived from the scene's ground truth with `rho`. The classifier
/// needs `model`.
std::unique_ptr<OcclusionPredictor> make_predictor(
    PredictorKind kind, const Scene& scene, double rho,
    const PairClassifierModel* model,
    const OcclusionMatrix* gt_occlusion = nullptr);

FusionResult fuse_scene(const Scene& scene, Strategy strategy,
                        const FusionParams& params,
                        const OcclusionPredictor* predictor);

struct BenchResult {
  std::size_t scenes = 0;
  int repeats = 0;
  std::size_t max_proposals = 0;
  /// Mean over scenes of the fastest of `repeats` runs.
  double baseline_ms = 0.0;
  double occlusion_ms = 0.0;
  std::size_t queries = 0;

  double ratio() const { return occlusion_ms / baseline_ms; }
  double overhead_percent() const { return 100.0 * (ratio() - 1.0); }
};

/// Times fusion by confidence against occlusion-aware fusion on every scene.
/// Predictors are built before timing starts; the two strategies alternate
/// within each repeat so that neither always runs on a warm cache.
BenchResult bench_fusion(const std::vector<SceneEntry>& scenes,
                         const FusionParams& params, PredictorKind kind,
                         const PairClassifierModel* model, int repeats);

std::string format_bench(const BenchResult& r);

}  // namespace ocfusion::tools
