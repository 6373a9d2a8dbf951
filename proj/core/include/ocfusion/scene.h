#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ocfusion/mask.h"

namespace ocfusion {

using ClassId = std::int32_t;
using SegmentId = std::int32_t;

struct ClassInfo {
  ClassId id = 0;
  std::string name;
  bool is_thing = false;

  bool operator==(const ClassInfo&) const = default;
};

/// The set of categories for one task. Class ids are >= 1; 0 means unlabeled.
class ClassCatalog {
 public:
  ClassCatalog() = default;
  /// Throws DataError on duplicate or non-positive ids.
  explicit ClassCatalog(std::vector<ClassInfo> classes);

  const std::vector<ClassInfo>& classes() const noexcept { return classes_; }
  const ClassInfo* find(ClassId id) const noexcept;
  bool contains(ClassId id) const noexcept { return find(id) != nullptr; }
  bool is_thing(ClassId id) const noexcept;
  bool is_stuff(ClassId id) const noexcept;

  /// Stuff class ids in ascending order.
  std::vector<ClassId> stuff_ids() const;
  std::vector<ClassId> thing_ids() const;
  ClassId max_id() const noexcept;

  bool operator==(const ClassCatalog&) const = default;

 private:
  std::vector<ClassInfo> classes_;  // sorted by id
};

struct InstanceProposal {
  std::int32_t proposal_id = 0;
  ClassId class_id = 0;
  double confidence = 0.0;
  BinaryMask mask;

  bool operator==(const InstanceProposal&) const = default;
};

/// Dense per-pixel class labels (0 = unlabeled).
struct SemanticMap {
  ImageGrid grid;
  std::vector<ClassId> labels;

  SemanticMap() = default;
  SemanticMap(ImageGrid g, std::vector<ClassId> l);
  /// All-unlabeled map.
  explicit SemanticMap(ImageGrid g);

  bool operator==(const SemanticMap&) const = default;
};

struct SegmentInfo {
  SegmentId segment_id = 0;
  ClassId category = 0;
  bool is_thing = false;
  /// proposal_id for fused outputs, instance_id for ground truth; empty for
  /// stuff segments.
  std::optional<std::int32_t> source_id;

  bool operator==(const SegmentInfo&) const = default;
};

/// Per-pixel segment ids (0 = void) plus the segment table.
struct PanopticMap {
  ImageGrid grid;
  std::vector<SegmentId> pixel_segments;
  std::vector<SegmentInfo> segments;

  PanopticMap() = default;
  /// All-void map.
  explicit PanopticMap(ImageGrid g);

  const SegmentInfo* find(SegmentId id) const noexcept;
  bool operator==(const PanopticMap&) const = default;
};

struct GtInstance {
  std::int32_t instance_id = 0;
  ClassId class_id = 0;
  BinaryMask mask;  // amodal extent
  /// Depth order; higher rank is nearer to the camera.
  std::int32_t z_rank = 0;

  bool operator==(const GtInstance&) const = default;
};

struct Scene {
  std::int64_t image_id = 0;
  ImageGrid grid;
  ClassCatalog catalog;
  std::vector<InstanceProposal> proposals;
  SemanticMap semantic;
  std::optional<std::vector<GtInstance>> gt_instances;
  std::optional<PanopticMap> gt_panoptic;

  bool operator==(const Scene&) const = default;
};

/// Pixels labeled `segment_id`. Throws DataError for unknown ids.
BinaryMask segment_mask(const PanopticMap& map, SegmentId segment_id);

/// Lists every violated invariant; empty when the scene is well formed.
std::vector<std::string> validate(const Scene& scene);
std::vector<std::string> validate(const PanopticMap& map,
                                  const ClassCatalog& catalog);

/// Per-segment pixel counts indexed by position in `map.segments`.
std::vector<std::int64_t> segment_areas(const PanopticMap& map);

/// True when both maps induce the same partition with the same categories,
/// irrespective of the numeric segment ids.
bool same_partition(const PanopticMap& a, const PanopticMap& b);

}  // namespace ocfusion
