#include "pipeline.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <unordered_map>

#include "ocfusion/error.h"
#include "ocfusion/io.h"

namespace ocfusion::tools {

namespace fs = std::filesystem;

std::vector<SceneEntry> load_scene_dir(const fs::path& dir, int jobs) {
  const auto files = list_scene_files(dir);
  if (files.empty()) {
    throw DataError("no scene_*.json files in " + dir.string());
  }
  std::vector<SceneEntry> out(files.size());
  parallel_for(files.size(), jobs, [&](std::size_t k) {
    out[k].path = files[k];
    out[k].stem = files[k].stem().string();
    out[k].scene = read_scene(files[k]);
  });
  return out;
}

const ClassCatalog& common_catalog(const std::vector<SceneEntry>& entries) {
  if (entries.empty()) throw DataError("empty corpus");
  const ClassCatalog& first = entries.front().scene.catalog;
  for (const auto& e : entries) {
    if (!(e.scene.catalog == first)) {
      throw DataError(e.path.string() + ": catalog differs from " +
                      entries.front().path.string());
    }
  }
  return first;
}

Strategy parse_strategy(const std::string& s) {
  if (s == "confidence") return Strategy::kConfidence;
  if (s == "ocfusion") return Strategy::kOcclusion;
  throw UsageError("unknown strategy '" + s + "'");
}

PredictorKind parse_predictor(const std::string& s) {
  if (s == "oracle") return PredictorKind::kOracle;
  if (s == "classifier") return PredictorKind::kClassifier;
  if (s == "confidence") return PredictorKind::kConfidence;
  throw UsageError("unknown predictor '" + s + "'");
}

OcclusionScope parse_scope(const std::string& s) {
  if (s == "all") return OcclusionScope::kAll;
  if (s == "inter") return OcclusionScope::kInterClassOnly;
  throw UsageError("unknown scope '" + s + "'");
}

SkipConvention parse_skip_convention(const std::string& s) {
  if (s == "overlap") return SkipConvention::kOverlapRatio;
  if (s == "remaining") return SkipConvention::kRemainingFraction;
  throw UsageError("unknown skip convention '" + s + "'");
}

std::unique_ptr<OcclusionPredictor> make_predictor(
    PredictorKind kind, const Scene& scene, double rho,
    const PairClassifierModel* model, const OcclusionMatrix* gt_occlusion) {
  switch (kind) {
    case PredictorKind::kConfidence:
      return std::make_unique<ConfidencePredictor>();
    case PredictorKind::kClassifier:
      if (model == nullptr) {
        throw UsageError("the classifier predictor needs --model");
      }
      return std::make_unique<ClassifierPredictor>(*model);
    case PredictorKind::kOracle: {
      if (!scene.gt_instances || !scene.gt_panoptic) {
        throw DataError("scene " + std::to_string(scene.image_id) +
                        " has no ground truth for the oracle predictor");
      }
      const OcclusionMatrix matrix = gt_occlusion != nullptr
                                         ? *gt_occlusion
                                         : derive_gt_occlusion(scene, rho);
      return std::make_unique<OraclePredictor>(oracle_predictor(
          matrix, scene.proposals,
          match_proposals(scene.proposals, *scene.gt_instances)));
    }
  }
  throw UsageError("unknown predictor");
}

FusionResult fuse_scene(const Scene& scene, Strategy strategy,
                        const FusionParams& params,
                        const OcclusionPredictor* predictor) {
  if (strategy == Strategy::kConfidence) {
    return fuse_by_confidence(scene.proposals, scene.semantic, scene.catalog,
                              params);
  }
  if (predictor == nullptr) {
    throw UsageError("occlusion-aware fusion needs a predictor");
  }
  return fuse_with_occlusion(scene.proposals, scene.semantic, scene.catalog,
                             params, *predictor);
}

BenchResult bench_fusion(const std::vector<SceneEntry>& scenes,
                         const FusionParams& params, PredictorKind kind,
                         const PairClassifierModel* model, int repeats) {
  if (scenes.empty()) throw DataError("cannot benchmark an empty corpus");
  if (repeats < 1) throw UsageError("--repeat must be >= 1");
  params.validate();
  using Clock = std::chrono::steady_clock;

  BenchResult r;
  r.scenes = scenes.size();
  r.repeats = repeats;
  double base_total = 0.0;
  double occ_total = 0.0;
  for (const auto& e : scenes) {
    const Scene& s = e.scene;
    r.max_proposals = std::max(r.max_proposals, s.proposals.size());
    const auto predictor = make_predictor(kind, s, params.occlusion_ratio, model);
    double best_base = std::numeric_limits<double>::infinity();
    double best_occ = best_base;
    for (int rep = 0; rep < repeats; ++rep) {
      auto time_base = [&] {
        const auto t0 = Clock::now();
        const auto out = fuse_by_confidence(s.proposals, s.semantic, s.catalog, params);
        const auto t1 = Clock::now();
        best_base = std::min(best_base, std::chrono::duration<double, std::milli>(t1 - t0).count());
      };
      auto time_occ = [&] {
        const auto t0 = Clock::now();
        const auto out = fuse_with_occlusion(s.proposals, s.semantic, s.catalog,
                                             params, *predictor);
        const auto t1 = Clock::now();
        best_occ = std::min(best_occ, std::chrono::duration<double, std::milli>(t1 - t0).count());
        if (rep == 0) r.queries += out.trace.query_count();
      };
      if (rep % 2 == 0) {
        time_base();
        time_occ();
      } else {
        time_occ();
        time_base();
      }
    }
    base_total += best_base;
    occ_total += best_occ;
  }
  r.baseline_ms = base_total / static_cast<double>(scenes.size());
  r.occlusion_ms = occ_total / static_cast<double>(scenes.size());
  return r;
}

std::string format_bench(const BenchResult& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "scenes: %zu  repeats: %d  max proposals: %zu\n"
                "fusion by confidence: %9.3f ms/scene\n"
                "occlusion-aware:      %9.3f ms/scene  (%zu queries)\n"
                "overhead:             %+8.2f %%  (ratio %.4f)\n",
                r.scenes, r.repeats, r.max_proposals, r.baseline_ms,
                r.occlusion_ms, r.queries, r.overhead_percent(), r.ratio());
  return buf;
}

}  // namespace ocfusion::tools
