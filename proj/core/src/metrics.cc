#include "ocfusion/metrics.h"

#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "ocfusion/error.h"

namespace ocfusion {

double ClassAccumulator::pq() const noexcept {
  const double den = tp + 0.5 * fp + 0.5 * fn;
  return den > 0 ? iou_sum / den : 0.0;
}

double ClassAccumulator::sq() const noexcept {
  return tp > 0 ? iou_sum / static_cast<double>(tp) : 0.0;
}

double ClassAccumulator::rq() const noexcept {
  const double den = tp + 0.5 * fp + 0.5 * fn;
  return den > 0 ? static_cast<double>(tp) / den : 0.0;
}

void PQStats::finalize(const ClassCatalog& catalog) {
  all = things = stuff = QualityTriple{};
  auto add = [](QualityTriple& t, const ClassAccumulator& a) {
    t.pq += a.pq();
    t.sq += a.sq();
    t.rq += a.rq();
    ++t.n;
  };
  for (const auto& [id, acc] : per_class) {
    if (!acc.present()) continue;
    add(all, acc);
    if (catalog.is_thing(id)) {
      add(things, acc);
    } else {
      add(stuff, acc);
    }
  }
  for (QualityTriple* t : {&all, &things, &stuff}) {
    if (t->n > 0) {
      t->pq /= t->n;
      t->sq /= t->n;
      t->rq /= t->n;
    }
  }
}

namespace {

struct SegmentStat {
  ClassId category = 0;
  std::int64_t area = 0;
  bool matched = false;
};

std::unordered_map<SegmentId, SegmentStat> collect_segments(
    const PanopticMap& map, const ClassCatalog& catalog, const char* which) {
  std::unordered_map<SegmentId, SegmentStat> out;
  for (const auto& s : map.segments) {
    if (!catalog.contains(s.category)) {
      throw DataError(std::string(which) + " segment " +
                      std::to_string(s.segment_id) + " has unknown category " +
                      std::to_string(s.category));
    }
    if (!out.emplace(s.segment_id, SegmentStat{s.category, 0, false}).second) {
      throw DataError(std::string(which) + " segment id " +
                      std::to_string(s.segment_id) + " listed twice");
    }
  }
  return out;
}

std::uint64_t pair_key(SegmentId gt, SegmentId pred) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(gt)) << 32) |
         static_cast<std::uint32_t>(pred);
}

}  // namespace

PQStats compute_pq(const PanopticMap& pred, const PanopticMap& gt,
                   const ClassCatalog& catalog) {
  if (pred.grid != gt.grid ||
      pred.pixel_segments.size() != gt.pixel_segments.size()) {
    throw DimensionError("prediction grid " + pred.grid.to_string() +
                         " differs from ground truth grid " +
                         gt.grid.to_string());
  }
  auto gt_segs = collect_segments(gt, catalog, "ground truth");
  auto pred_segs = collect_segments(pred, catalog, "predicted");

  std::map<std::uint64_t, std::int64_t> inter;  // ordered: stable iou sums
  const std::size_t n = gt.pixel_segments.size();
  std::size_t p = 0;
  while (p < n) {
    const SegmentId g = gt.pixel_segments[p];
    const SegmentId q = pred.pixel_segments[p];
    std::size_t e = p + 1;
    while (e < n && gt.pixel_segments[e] == g && pred.pixel_segments[e] == q) {
      ++e;
    }
    inter[pair_key(g, q)] += static_cast<std::int64_t>(e - p);
    p = e;
  }
  for (const auto& [key, count] : inter) {
    const auto g = static_cast<SegmentId>(key >> 32);
    const auto q = static_cast<SegmentId>(key & 0xffffffffu);
    if (g != 0) {
      auto it = gt_segs.find(g);
      if (it == gt_segs.end()) {
        throw DataError("ground truth pixel id " + std::to_string(g) +
                        " missing from its segment table");
      }
      it->second.area += count;
    }
    if (q != 0) {
      auto it = pred_segs.find(q);
      if (it == pred_segs.end()) {
        throw DataError("predicted pixel id " + std::to_string(q) +
                        " missing from its segment table");
      }
      it->second.area += count;
    }
  }

  PQStats stats;
  for (const auto& [key, count] : inter) {
    const auto g = static_cast<SegmentId>(key >> 32);
    const auto q = static_cast<SegmentId>(key & 0xffffffffu);
    if (g == 0 || q == 0) continue;
    SegmentStat& gs = gt_segs.at(g);
    SegmentStat& ps = pred_segs.at(q);
    if (gs.category != ps.category) continue;
    auto void_it = inter.find(pair_key(0, q));
    const std::int64_t pred_on_void = void_it == inter.end() ? 0 : void_it->second;
    const std::int64_t uni = ps.area + gs.area - count - pred_on_void;
    const double v = static_cast<double>(count) / static_cast<double>(uni);
    if (v > 0.5) {
      if (gs.matched || ps.matched) {
        throw ContractError("segment matched twice at IoU > 0.5 (gt " +
                            std::to_string(g) + ", pred " + std::to_string(q) +
                            ")");
      }
      gs.matched = ps.matched = true;
      auto& acc = stats.per_class[gs.category];
      acc.iou_sum += v;
      ++acc.tp;
    }
  }
  for (const auto& [id, gs] : gt_segs) {
    if (gs.area == 0) continue;
    if (!gs.matched) ++stats.per_class[gs.category].fn;
  }
  for (const auto& [id, ps] : pred_segs) {
    if (ps.area == 0 || ps.matched) continue;
    auto void_it = inter.find(pair_key(0, id));
    const std::int64_t on_void = void_it == inter.end() ? 0 : void_it->second;
    if (static_cast<double>(on_void) / static_cast<double>(ps.area) > 0.5) {
      continue;
    }
    ++stats.per_class[ps.category].fp;
  }
  stats.finalize(catalog);
  return stats;
}

PQStats aggregate_pq(std::span<const PQStats> per_scene,
                     const ClassCatalog& catalog) {
  if (per_scene.empty()) throw DataError("cannot aggregate an empty corpus");
  PQStats total;
  for (const auto& s : per_scene) {
    for (const auto& [id, acc] : s.per_class) {
      if (!catalog.contains(id)) {
        throw DataError("per-scene stats reference class " +
                        std::to_string(id) + " missing from the catalog");
      }
      total.per_class[id] += acc;
    }
  }
  total.finalize(catalog);
  return total;
}

std::string format_pq_table(const PQStats& stats) {
  std::ostringstream os;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s| %7s %7s %7s | %5s\n", "", "PQ", "SQ",
                "RQ", "N");
  os << line << std::string(10, '-') << "+-------------------------+------\n";
  auto row = [&](const char* name, const QualityTriple& t) {
    std::snprintf(line, sizeof line, "%-10s| %7.3f %7.3f %7.3f | %5d\n", name,
                  100.0 * t.pq, 100.0 * t.sq, 100.0 * t.rq, t.n);
    os << line;
  };
  row("All", stats.all);
  row("Things", stats.things);
  row("Stuff", stats.stuff);
  os << '\n';
  std::snprintf(line, sizeof line, "%8s %8s %8s\n", "PQ", "PQ^Th", "PQ^St");
  os << line;
  std::snprintf(line, sizeof line, "%8.3f %8.3f %8.3f\n", 100.0 * stats.all.pq,
                100.0 * stats.things.pq, 100.0 * stats.stuff.pq);
  os << line;
  return os.str();
}

}  // namespace ocfusion
