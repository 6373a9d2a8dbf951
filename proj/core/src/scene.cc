#include "ocfusion/scene.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ocfusion/error.h"

namespace ocfusion {

ClassCatalog::ClassCatalog(std::vector<ClassInfo> classes)
    : classes_(std::move(classes)) {
  std::sort(classes_.begin(), classes_.end(),
            [](const ClassInfo& a, const ClassInfo& b) { return a.id < b.id; });
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    if (classes_[k].id < 1) {
      throw DataError("class id " + std::to_string(classes_[k].id) +
                      " must be >= 1");
    }
    if (k > 0 && classes_[k].id == classes_[k - 1].id) {
      throw DataError("duplicate class id " + std::to_string(classes_[k].id));
    }
  }
}

const ClassInfo* ClassCatalog::find(ClassId id) const noexcept {
  auto it = std::lower_bound(
      classes_.begin(), classes_.end(), id,
      [](const ClassInfo& c, ClassId v) { return c.id < v; });
  return (it != classes_.end() && it->id == id) ? &*it : nullptr;
}

bool ClassCatalog::is_thing(ClassId id) const noexcept {
  const ClassInfo* c = find(id);
  return c != nullptr && c->is_thing;
}

bool ClassCatalog::is_stuff(ClassId id) const noexcept {
  const ClassInfo* c = find(id);
  return c != nullptr && !c->is_thing;
}

std::vector<ClassId> ClassCatalog::stuff_ids() const {
  std::vector<ClassId> ids;
  for (const auto& c : classes_)
    if (!c.is_thing) ids.push_back(c.id);
  return ids;
}

std::vector<ClassId> ClassCatalog::thing_ids() const {
  std::vector<ClassId> ids;
  for (const auto& c : classes_)
    if (c.is_thing) ids.push_back(c.id);
  return ids;
}

ClassId ClassCatalog::max_id() const noexcept {
  return classes_.empty() ? 0 : classes_.back().id;
}

SemanticMap::SemanticMap(ImageGrid g, std::vector<ClassId> l)
    : grid(g), labels(std::move(l)) {
  if (static_cast<std::int64_t>(labels.size()) != grid.pixel_count()) {
    throw DimensionError("semantic label count does not match grid " +
                         grid.to_string());
  }
}

SemanticMap::SemanticMap(ImageGrid g)
    : grid(g), labels(static_cast<std::size_t>(g.pixel_count()), 0) {}

PanopticMap::PanopticMap(ImageGrid g)
    : grid(g), pixel_segments(static_cast<std::size_t>(g.pixel_count()), 0) {}

const SegmentInfo* PanopticMap::find(SegmentId id) const noexcept {
  for (const auto& s : segments)
    if (s.segment_id == id) return &s;
  return nullptr;
}

BinaryMask segment_mask(const PanopticMap& map, SegmentId segment_id) {
  if (segment_id == 0 || map.find(segment_id) == nullptr) {
    throw DataError("unknown segment id " + std::to_string(segment_id));
  }
  std::vector<std::uint8_t> bitmap(map.pixel_segments.size());
  for (std::size_t p = 0; p < bitmap.size(); ++p) {
    bitmap[p] = map.pixel_segments[p] == segment_id ? 1 : 0;
  }
  return BinaryMask::from_bitmap(map.grid, bitmap);
}

std::vector<std::int64_t> segment_areas(const PanopticMap& map) {
  std::unordered_map<SegmentId, std::size_t> index;
  for (std::size_t k = 0; k < map.segments.size(); ++k) {
    index.emplace(map.segments[k].segment_id, k);
  }
  std::vector<std::int64_t> areas(map.segments.size(), 0);
  SegmentId last_id = 0;
  std::size_t last_index = 0;
  bool have_last = false;
  for (SegmentId id : map.pixel_segments) {
    if (id == 0) continue;
    if (!have_last || id != last_id) {
      auto it = index.find(id);
      if (it == index.end()) continue;
      last_id = id;
      last_index = it->second;
      have_last = true;
    }
    ++areas[last_index];
  }
  return areas;
}

std::vector<std::string> validate(const PanopticMap& map,
                                  const ClassCatalog& catalog) {
  std::vector<std::string> out;
  if (static_cast<std::int64_t>(map.pixel_segments.size()) !=
      map.grid.pixel_count()) {
    out.push_back("panoptic pixel count does not match grid " +
                  map.grid.to_string());
    return out;
  }
  std::set<SegmentId> ids;
  std::set<ClassId> stuff_seen;
  for (const auto& s : map.segments) {
    const std::string tag = "segment " + std::to_string(s.segment_id);
    if (s.segment_id < 1) out.push_back(tag + ": id must be >= 1");
    if (!ids.insert(s.segment_id).second) out.push_back(tag + ": duplicate id");
    const ClassInfo* c = catalog.find(s.category);
    if (c == nullptr) {
      out.push_back(tag + ": unknown category " + std::to_string(s.category));
      continue;
    }
    if (c->is_thing != s.is_thing) {
      out.push_back(tag + ": is_thing disagrees with the catalog");
    }
    if (s.is_thing && !s.source_id) {
      out.push_back(tag + ": thing segment without a source");
    }
    if (!s.is_thing && s.source_id) {
      out.push_back(tag + ": stuff segment with a source");
    }
    if (!s.is_thing && !stuff_seen.insert(s.category).second) {
      out.push_back(tag + ": second segment for stuff class " +
                    std::to_string(s.category));
    }
  }
  std::set<SegmentId> unknown;
  for (SegmentId id : map.pixel_segments) {
    if (id != 0 && !ids.count(id)) unknown.insert(id);
  }
  for (SegmentId id : unknown) {
    out.push_back("pixel id " + std::to_string(id) +
                  " missing from the segment table");
  }
  const auto areas = segment_areas(map);
  for (std::size_t k = 0; k < areas.size(); ++k) {
    if (areas[k] == 0) {
      out.push_back("segment " + std::to_string(map.segments[k].segment_id) +
                    " owns no pixels");
    }
  }
  return out;
}

std::vector<std::string> validate(const Scene& scene) {
  std::vector<std::string> out;
  const auto& catalog = scene.catalog;
  if (catalog.thing_ids().empty()) out.push_back("catalog has no thing class");
  if (catalog.stuff_ids().empty()) out.push_back("catalog has no stuff class");

  if (scene.semantic.grid != scene.grid) {
    out.push_back("semantic grid " + scene.semantic.grid.to_string() +
                  " differs from scene grid " + scene.grid.to_string());
  } else if (static_cast<std::int64_t>(scene.semantic.labels.size()) !=
             scene.grid.pixel_count()) {
    out.push_back("semantic label count does not match grid");
  } else {
    std::set<ClassId> unknown;
    for (ClassId l : scene.semantic.labels) {
      if (l != 0 && !catalog.contains(l)) unknown.insert(l);
    }
    for (ClassId l : unknown) {
      out.push_back("semantic label " + std::to_string(l) +
                    " not in the catalog");
    }
  }

  std::set<std::int32_t> proposal_ids;
  for (const auto& p : scene.proposals) {
    const std::string tag = "proposal " + std::to_string(p.proposal_id);
    if (!proposal_ids.insert(p.proposal_id).second) {
      out.push_back(tag + ": duplicate id");
    }
    if (!catalog.is_thing(p.class_id)) {
      out.push_back(tag + ": class " + std::to_string(p.class_id) +
                    " is not a thing class");
    }
    if (!std::isfinite(p.confidence) || p.confidence < 0.0 ||
        p.confidence > 1.0) {
      out.push_back(tag + ": confidence outside [0, 1]");
    }
    if (p.mask.grid() != scene.grid) {
      out.push_back(tag + ": mask grid " + p.mask.grid().to_string() +
                    " differs from scene grid " + scene.grid.to_string());
    }
    if (p.mask.empty()) out.push_back(tag + ": empty mask");
  }

  if (scene.gt_instances) {
    std::set<std::int32_t> inst_ids;
    std::vector<std::int32_t> ranks;
    for (const auto& g : *scene.gt_instances) {
      const std::string tag = "gt instance " + std::to_string(g.instance_id);
      if (!inst_ids.insert(g.instance_id).second) {
        out.push_back(tag + ": duplicate id");
      }
      if (!catalog.is_thing(g.class_id)) {
        out.push_back(tag + ": class " + std::to_string(g.class_id) +
                      " is not a thing class");
      }
      if (g.mask.grid() != scene.grid) {
        out.push_back(tag + ": mask grid differs from scene grid");
      }
      ranks.push_back(g.z_rank);
    }
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t k = 0; k < ranks.size(); ++k) {
      if (ranks[k] != static_cast<std::int32_t>(k)) {
        out.push_back("gt z_ranks are not a permutation of 0..n-1");
        break;
      }
    }
    if (scene.gt_panoptic) {
      for (const auto& s : scene.gt_panoptic->segments) {
        if (s.is_thing && s.source_id && !inst_ids.count(*s.source_id)) {
          out.push_back("gt segment " + std::to_string(s.segment_id) +
                        " references unknown instance " +
                        std::to_string(*s.source_id));
        }
      }
    }
  }
  if (scene.gt_panoptic) {
    if (scene.gt_panoptic->grid != scene.grid) {
      out.push_back("gt panoptic grid differs from scene grid");
    } else {
      for (auto& v : validate(*scene.gt_panoptic, catalog)) {
        out.push_back("gt panoptic: " + v);
      }
    }
  }
  return out;
}

bool same_partition(const PanopticMap& a, const PanopticMap& b) {
  if (a.grid != b.grid || a.pixel_segments.size() != b.pixel_segments.size()) {
    return false;
  }
  if (a.segments.size() != b.segments.size()) return false;
  std::unordered_map<SegmentId, SegmentId> fwd;
  std::unordered_map<SegmentId, SegmentId> back;
  for (std::size_t p = 0; p < a.pixel_segments.size(); ++p) {
    const SegmentId x = a.pixel_segments[p];
    const SegmentId y = b.pixel_segments[p];
    if ((x == 0) != (y == 0)) return false;
    if (x == 0) continue;
    auto [fi, fnew] = fwd.emplace(x, y);
    if (!fnew && fi->second != y) return false;
    auto [bi, bnew] = back.emplace(y, x);
    if (!bnew && bi->second != x) return false;
  }
  for (const auto& [x, y] : fwd) {
    const SegmentInfo* sa = a.find(x);
    const SegmentInfo* sb = b.find(y);
    if (sa == nullptr || sb == nullptr) return false;
    if (sa->category != sb->category || sa->is_thing != sb->is_thing) {
      return false;
    }
  }
  return true;
}

}  // namespace ocfusion
