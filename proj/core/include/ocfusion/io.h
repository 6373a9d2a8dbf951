#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ocfusion/fusion.h"
#include "ocfusion/metrics.h"
#include "ocfusion/occlusion.h"
#include "ocfusion/scene.h"

namespace ocfusion {

struct SceneGenConfig;
struct CorpusManifest;

/// Every file format carries this version; readers reject anything else.
inline constexpr int kFormatVersion = 1;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Scene files ---------------------------------------------------------------

std::string scene_to_json(const Scene& scene);
/// Parses and validates. `source` names the input in error messages.
Scene scene_from_json(const std::string& text, const std::string& source = "<scene>");
Scene read_scene(const std::filesystem::path& path);
void write_scene(const std::filesystem::path& path, const Scene& scene);

/// Scene files in `dir` (scene_*.json), sorted by name.
std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir);

// Generator config and corpus manifest ---------------------------------------

std::string config_to_json(const SceneGenConfig& config);
/// Missing fields keep their defaults; unknown fields are rejected.
SceneGenConfig config_from_json(const std::string& text,
                                const std::string& source = "<config>");
std::string manifest_to_json(const CorpusManifest& manifest);
CorpusManifest manifest_from_json(const std::string& text,
                                  const std::string& source = "<manifest>");

// Panoptic PNG pair -----------------------------------------------------------

/// id = R + 256 G + 65536 B. Throws DataError for ids outside [0, 2^24).
std::array<std::uint8_t, 3> encode_segment_id(std::int64_t id);
std::int64_t decode_segment_id(std::uint8_t r, std::uint8_t g, std::uint8_t b);

/// Writes the RGB id map to `png_path` and the segment table to `table_path`.
void export_panoptic_png(const PanopticMap& map,
                         const std::filesystem::path& png_path,
                         const std::filesystem::path& table_path);
/// Reads a pair written by export_panoptic_png. Rejects pixel ids missing
/// from the table and table entries without pixels.
PanopticMap import_panoptic_png(const std::filesystem::path& png_path,
                                const std::filesystem::path& table_path);

/// Colour rendering: void black, each category its own hue, instances of a
/// thing category in distinct shades.
void render_panoptic_png(const PanopticMap& map,
                         const std::filesystem::path& png_path);

// Occlusion matrices and models -----------------------------------------------

struct OcclusionFile {
  std::int64_t image_id = 0;
  std::vector<std::int32_t> instance_ids;
  OcclusionMatrix matrix;
};

std::string occlusion_to_json(const OcclusionFile& file);
OcclusionFile occlusion_from_json(const std::string& text,
                                  const std::string& source = "<occlusion>");

std::string model_to_json(const PairClassifierModel& model);
PairClassifierModel model_from_json(const std::string& text,
                                    const std::string& source = "<model>");

// Fusion traces and evaluation results -----------------------------------------

std::string trace_to_json(const FusionTrace& trace, std::int64_t image_id,
                          const std::string& strategy);

/// Totals over the traces of a corpus.
struct TraceSummary {
  std::size_t scenes = 0;
  std::size_t proposals = 0;
  std::size_t kept = 0;
  std::size_t overlap_rejected = 0;
  std::size_t below_confidence = 0;
  std::size_t emptied = 0;
  std::size_t queries = 0;
  std::size_t positive_answers = 0;
  std::int64_t reclaimed_pixels = 0;

  void add(const FusionTrace& trace);
};

/// Summary of one trace file produced by trace_to_json.
TraceSummary trace_summary_from_json(const std::string& text,
                                     const std::string& source = "<trace>");

std::string results_to_json(const PQStats& stats, const ClassCatalog& catalog,
                            std::size_t n_scenes,
                            const std::optional<TraceSummary>& traces);

/// Writes results JSON to `json_path` and the text table to `table_path`.
/// Throws DataError for an empty corpus.
void write_results(const PQStats& stats, const ClassCatalog& catalog,
                   std::size_t n_scenes,
                   const std::optional<TraceSummary>& traces,
                   const std::filesystem::path& json_path,
                   const std::filesystem::path& table_path);

}  // namespace ocfusion
