#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ocfusion/scene.h"

namespace ocfusion {

enum class ShapeFamily { kRectangle, kEllipse, kConvexPolygon, kMixed };

enum class ConfidenceModel {
  /// Nearer instances get higher confidence.
  kCorrelated,
  kRandom,
  /// Nearer instances get lower confidence, the failure mode of fusion by
  /// confidence.
  kAdversarial,
};

struct Perturbation {
  /// Each proposal is dilated or eroded by a random radius in [0, radius].
  std::int32_t morph_radius = 0;
  double dropout = 0.0;
  /// Expected spurious proposals per instance.
  double spurious_rate = 0.0;
  /// Probability that a semantic pixel is replaced by a random class.
  double label_noise = 0.0;

  bool operator==(const Perturbation&) const = default;
};

/// Synthetic layered scenes: stuff bands behind convex thing shapes with a
/// known depth order. Layout constraints keep every instance mostly visible
/// and every overlap appreciable so that the z-order is recoverable from the
/// panoptic ground truth.
struct SceneGenConfig {
  std::int32_t width = 256;
  std::int32_t height = 192;
  std::int32_t thing_classes = 3;
  std::int32_t stuff_classes = 3;
  std::int32_t min_instances = 3;
  std::int32_t max_instances = 8;
  ShapeFamily shape = ShapeFamily::kMixed;
  /// Shape extent range as a fraction of min(width, height).
  double min_extent = 0.15;
  double max_extent = 0.45;
  ConfidenceModel confidence_model = ConfidenceModel::kRandom;
  double confidence_noise = 0.0;
  double min_confidence = 0.55;
  double max_confidence = 0.99;
  Perturbation perturbation;
  double min_visible_fraction = 0.6;
  double min_pair_overlap = 0.25;
  /// Probability that a new shape is placed next to an existing one.
  double overlap_bias = 0.8;
  /// Weight of the ground-plane prior in the depth order: 0 gives a random
  /// order, 1 places shapes whose lowest row is further down nearer.
  double depth_cue = 0.9;
  std::int64_t min_stuff_area = 4096;
  std::int32_t placement_attempts = 60;
  std::int32_t max_restarts = 100;

  /// Throws UsageError on out-of-range fields.
  void validate() const;
  bool operator==(const SceneGenConfig&) const = default;
};

std::string to_string(ShapeFamily s);
std::string to_string(ConfidenceModel m);
ShapeFamily parse_shape_family(const std::string& s);
ConfidenceModel parse_confidence_model(const std::string& s);

ClassCatalog make_catalog(const SceneGenConfig& config);

/// Deterministic in (config, seed). Throws DataError when no valid layout is
/// found within the attempt budget.
Scene generate_scene(const SceneGenConfig& config, std::uint64_t seed,
                     std::int64_t image_id = 1);

struct CorpusEntry {
  std::string file;
  std::int64_t image_id = 0;
  std::uint64_t seed = 0;
  std::string content_hash;
};

struct CorpusManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<CorpusEntry> scenes;

  /// Hash over the manifest content.
  std::string hash() const;
};

/// Seed of scene `index` in a corpus.
std::uint64_t corpus_scene_seed(std::uint64_t corpus_seed, std::size_t index);

/// Generates `n_scenes` scenes in memory.
std::vector<Scene> generate_scenes(const SceneGenConfig& config,
                                   std::size_t n_scenes, std::uint64_t seed);

/// Writes scene_NNNNNN.json files plus manifest.json into `out_dir`.
CorpusManifest generate_corpus(const SceneGenConfig& config,
                               std::size_t n_scenes, std::uint64_t seed,
                               const std::filesystem::path& out_dir,
                               int jobs = 1);

}  // namespace ocfusion
