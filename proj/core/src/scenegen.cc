#include "ocfusion/scenegen.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <thread>

#include "ocfusion/error.h"
#include "ocfusion/io.h"
#include "ocfusion/rng.h"

namespace ocfusion {

namespace {

struct Point {
  double x;
  double y;
};

// Appends [start, end), merging with a touching predecessor.
void append_run(std::vector<Run>& runs, std::int64_t start, std::int64_t end) {
  if (end <= start) return;
  if (!runs.empty() && runs.back().end() == start) {
    runs.back().length += static_cast<std::int32_t>(end - start);
  } else {
    runs.push_back({static_cast<std::int32_t>(start),
                    static_cast<std::int32_t>(end - start)});
  }
}

std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  auto cross = [](const Point& o, const Point& a, const Point& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k > 0 ? k - 1 : 0);
  return hull;
}

// Rasterizes a convex shape given the [xl, xr] extent of each scanline
// (pixel-center coordinates). `span` returns false for rows it misses.
template <typename SpanFn>
BinaryMask rasterize(const ImageGrid& grid, double y_min, double y_max,
                     SpanFn&& span) {
  std::vector<Run> runs;
  const auto y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(y_min)));
  const auto y1 = std::min<std::int64_t>(grid.height() - 1,
                                         static_cast<std::int64_t>(std::ceil(y_max)));
  for (std::int64_t y = y0; y <= y1; ++y) {
    double xl = 0.0;
    double xr = 0.0;
    if (!span(static_cast<double>(y) + 0.5, xl, xr)) continue;
    const auto xa = std::max<std::int64_t>(
        0, static_cast<std::int64_t>(std::ceil(xl - 0.5)));
    const auto xb = std::min<std::int64_t>(
        grid.width() - 1, static_cast<std::int64_t>(std::floor(xr - 0.5)));
    if (xb < xa) continue;
    append_run(runs, y * grid.width() + xa, y * grid.width() + xb + 1);
  }
  return BinaryMask::from_runs(grid, std::move(runs));
}

// With an anchor the centre is drawn near the anchor's centroid, close enough
// that the two shapes usually overlap.
BinaryMask draw_shape(const ImageGrid& grid, const SceneGenConfig& config,
                      Rng& rng, const MaskSummary* anchor = nullptr) {
  ShapeFamily family = config.shape;
  if (family == ShapeFamily::kMixed) {
    family = static_cast<ShapeFamily>(rng.uniform_int(0, 2));
  }
  const double ext = std::min(grid.width(), grid.height());
  const double sx = rng.uniform(config.min_extent, config.max_extent) * ext;
  const double sy = rng.uniform(config.min_extent, config.max_extent) * ext;
  double cx = 0.0;
  double cy = 0.0;
  if (anchor != nullptr) {
    const double reach_x = 0.35 * (anchor->bbox.x1 - anchor->bbox.x0 + 1 + sx);
    const double reach_y = 0.35 * (anchor->bbox.y1 - anchor->bbox.y0 + 1 + sy);
    cx = anchor->centroid_x + rng.uniform(-reach_x, reach_x);
    cy = anchor->centroid_y + rng.uniform(-reach_y, reach_y);
  } else {
    cx = rng.uniform(0.0, grid.width());
    cy = rng.uniform(0.0, grid.height());
  }
  const double a = sx / 2.0;
  const double b = sy / 2.0;

  switch (family) {
    case ShapeFamily::kRectangle:
      return rasterize(grid, cy - b, cy + b, [&](double yc, double& xl, double& xr) {
        if (yc < cy - b || yc > cy + b) return false;
        xl = cx - a;
        xr = cx + a;
        return true;
      });
    case ShapeFamily::kEllipse:
      return rasterize(grid, cy - b, cy + b, [&](double yc, double& xl, double& xr) {
        const double dy = (yc - cy) / b;
        if (std::abs(dy) > 1.0) return false;
        const double half = a * std::sqrt(1.0 - dy * dy);
        xl = cx - half;
        xr = cx + half;
        return true;
      });
    case ShapeFamily::kConvexPolygon:
    case ShapeFamily::kMixed: {
      const auto k = rng.uniform_int(5, 8);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      std::vector<Point> pts;
      for (std::int64_t m = 0; m < k; ++m) {
        const double theta =
            phase + 2.0 * std::numbers::pi *
                        (static_cast<double>(m) + rng.uniform(-0.3, 0.3)) /
                        static_cast<double>(k);
        const double r = rng.uniform(0.75, 1.0);
        pts.push_back({cx + a * r * std::cos(theta), cy + b * r * std::sin(theta)});
      }
      const auto hull = convex_hull(pts);
      double y_lo = hull.front().y;
      double y_hi = hull.front().y;
      for (const auto& p : hull) {
        y_lo = std::min(y_lo, p.y);
        y_hi = std::max(y_hi, p.y);
      }
      return rasterize(grid, y_lo, y_hi, [&](double yc, double& xl, double& xr) {
        bool hit = false;
        for (std::size_t e = 0; e < hull.size(); ++e) {
          const Point& p = hull[e];
          const Point& q = hull[(e + 1) % hull.size()];
          if (std::min(p.y, q.y) <= yc && yc < std::max(p.y, q.y)) {
            const double x = p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y);
            if (!hit) {
              xl = xr = x;
              hit = true;
            } else {
              xl = std::min(xl, x);
              xr = std::max(xr, x);
            }
          }
        }
        return hit;
      });
    }
  }
  throw DataError("unknown shape family");
}

// Square-window dilation (or erosion) of radius r, separable via prefix sums.
// Pixels outside the grid count as background.
BinaryMask morph(const BinaryMask& mask, std::int32_t r, bool dilate) {
  if (r <= 0) return mask;
  const ImageGrid grid = mask.grid();
  const std::int64_t w = grid.width();
  const std::int64_t h = grid.height();
  const std::int64_t window = 2 * static_cast<std::int64_t>(r) + 1;
  auto pass = [&](const std::vector<std::uint8_t>& in, bool horizontal) {
    std::vector<std::uint8_t> out(in.size(), 0);
    const std::int64_t lines = horizontal ? h : w;
    const std::int64_t len = horizontal ? w : h;
    std::vector<std::int64_t> prefix(static_cast<std::size_t>(len) + 1);
    for (std::int64_t l = 0; l < lines; ++l) {
      auto at = [&](std::int64_t t) {
        return horizontal ? l * w + t : t * w + l;
      };
      for (std::int64_t t = 0; t < len; ++t) prefix[t + 1] = prefix[t] + in[at(t)];
      for (std::int64_t t = 0; t < len; ++t) {
        const std::int64_t lo = std::max<std::int64_t>(0, t - r);
        const std::int64_t hi = std::min<std::int64_t>(len, t + r + 1);
        const std::int64_t count = prefix[hi] - prefix[lo];
        out[at(t)] = dilate ? (count > 0) : (count == window);
      }
    }
    return out;
  };
  auto bitmap = pass(pass(mask.to_bitmap(), true), false);
  return BinaryMask::from_bitmap(grid, bitmap);
}

// Incrementally built depth-ordered layout with its visibility bookkeeping.
class Layout {
 public:
  Layout(const ImageGrid& grid, const SceneGenConfig& config)
      : grid_(grid),
        config_(config),
        owner_(static_cast<std::size_t>(grid.pixel_count()), -1),
        takes_(owner_.size(), 0) {}

  struct Shape {
    BinaryMask mask;
    ClassId class_id;
    /// Larger is nearer; ties go to the shape placed later.
    double depth;
    MaskSummary summary;
  };

  /// `jitter` in [0, 1) is mixed with the ground-plane cue to give the depth.
  bool try_add(BinaryMask mask, ClassId class_id, double jitter) {
    if (mask.area() < 16) return false;
    const MaskSummary summary = summarize(mask);
    const auto n = static_cast<std::int32_t>(shapes_.size());
    const double base = static_cast<double>(summary.bbox.y1 + 1) / grid_.height();
    const double z = config_.depth_cue * base + (1.0 - config_.depth_cue) * jitter;

    struct NewPair {
      std::int32_t other;
      BinaryMask inter;
    };
    std::vector<NewPair> new_pairs;
    for (std::int32_t j = 0; j < n; ++j) {
      if (!summary.bbox.overlaps(shapes_[j].summary.bbox)) continue;
      BinaryMask inter = intersect(mask, shapes_[j].mask);
      if (inter.empty()) continue;
      const auto s = intersection_stats(mask.area(), shapes_[j].mask.area(),
                                        inter.area());
      if (std::max(s.ratio_i, s.ratio_j) < config_.min_pair_overlap) {
        return false;
      }
      new_pairs.push_back({j, std::move(inter)});
    }

    std::vector<std::int64_t> lost(shapes_.size(), 0);
    std::int64_t visible_new = 0;
    for (const Run& r : mask.runs()) {
      for (std::int64_t p = r.start; p < r.end(); ++p) {
        const std::int32_t o = owner_[p];
        if (o < 0 || z >= shapes_[o].depth) {
          takes_[p] = 1;
          ++visible_new;
          if (o >= 0) ++lost[o];
        }
      }
    }
    const bool ok = check(mask, z, visible_new, lost, new_pairs);
    if (!ok) {
      clear_takes(mask);
      return false;
    }
    for (const Run& r : mask.runs()) {
      for (std::int64_t p = r.start; p < r.end(); ++p) {
        if (takes_[p]) {
          owner_[p] = n;
          takes_[p] = 0;
        }
      }
    }
    for (std::int32_t j = 0; j < n; ++j) visible_[j] -= lost[j];
    visible_.push_back(visible_new);
    for (auto& np : new_pairs) {
      const bool new_on_top = z >= shapes_[np.other].depth;
      pairs_.push_back({new_on_top ? n : np.other, new_on_top ? np.other : n,
                        std::move(np.inter)});
    }
    shapes_.push_back({std::move(mask), class_id, z, summary});
    return true;
  }

  const std::vector<Shape>& shapes() const { return shapes_; }
  const std::vector<std::int32_t>& owner() const { return owner_; }
  const std::vector<std::int64_t>& visible() const { return visible_; }

 private:
  struct Pair {
    std::int32_t top;
    std::int32_t bottom;
    BinaryMask inter;
  };

  bool fraction_ok(std::int64_t visible, std::int64_t area) const {
    return static_cast<double>(visible) >=
           config_.min_visible_fraction * static_cast<double>(area);
  }

  template <typename NewPairs>
  bool check(const BinaryMask& mask, double z, std::int64_t visible_new,
             const std::vector<std::int64_t>& lost,
             const NewPairs& new_pairs) const {
    if (!fraction_ok(visible_new, mask.area())) return false;
    for (std::size_t j = 0; j < shapes_.size(); ++j) {
      if (lost[j] > 0 && !fraction_ok(visible_[j] - lost[j], shapes_[j].mask.area())) {
        return false;
      }
    }
    const auto n = static_cast<std::int32_t>(shapes_.size());
    auto owner_after = [&](std::int64_t p) {
      return takes_[p] ? n : owner_[p];
    };
    auto top_owns_some = [&](const BinaryMask& inter, std::int32_t top) {
      for (const Run& r : inter.runs()) {
        for (std::int64_t p = r.start; p < r.end(); ++p) {
          if (owner_after(p) == top) return true;
        }
      }
      return false;
    };
    for (const auto& pr : pairs_) {
      if (lost[pr.top] > 0 && !top_owns_some(pr.inter, pr.top)) return false;
    }
    for (const auto& np : new_pairs) {
      const std::int32_t top = z >= shapes_[np.other].depth ? n : np.other;
      if (!top_owns_some(np.inter, top)) return false;
    }
    return true;
  }

  void clear_takes(const BinaryMask& mask) {
    for (const Run& r : mask.runs()) {
      std::fill_n(takes_.begin() + r.start, r.length, std::uint8_t{0});
    }
  }

  ImageGrid grid_;
  const SceneGenConfig& config_;
  std::vector<std::int32_t> owner_;
  std::vector<std::uint8_t> takes_;
  std::vector<Shape> shapes_;
  std::vector<std::int64_t> visible_;
  std::vector<Pair> pairs_;
};

double base_confidence(const SceneGenConfig& c, ConfidenceModel model,
                       std::int32_t z, std::int32_t n, Rng& rng) {
  const double lo = c.min_confidence;
  const double hi = c.max_confidence;
  const double rank = (static_cast<double>(z) + 0.5) / static_cast<double>(n);
  switch (model) {
    case ConfidenceModel::kCorrelated:
      return lo + (hi - lo) * rank;
    case ConfidenceModel::kAdversarial:
      return hi - (hi - lo) * rank;
    case ConfidenceModel::kRandom:
      return rng.uniform(lo, hi);
  }
  return lo;
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

}  // namespace

void SceneGenConfig::validate() const {
  std::ostringstream os;
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (width < 1 || height < 1) {
    os << "grid must be at least 1x1";
  } else if (static_cast<std::int64_t>(width) * height > INT32_MAX) {
    os << "grid exceeds 2^31-1 pixels";
  } else if (thing_classes < 1 || stuff_classes < 1) {
    os << "need at least one thing and one stuff class";
  } else if (stuff_classes > height) {
    os << "more stuff classes than rows";
  } else if (min_instances < 1 || max_instances < min_instances) {
    os << "instance count range must satisfy 1 <= min <= max";
  } else if (!(min_extent > 0.0 && min_extent <= max_extent && max_extent <= 1.0)) {
    os << "shape extents must satisfy 0 < min <= max <= 1";
  } else if (!(confidence_noise >= 0.0) || !std::isfinite(confidence_noise)) {
    os << "confidence noise must be >= 0";
  } else if (!(prob(min_confidence) && prob(max_confidence) &&
               min_confidence <= max_confidence)) {
    os << "confidence range must lie in [0, 1]";
  } else if (perturbation.morph_radius < 0) {
    os << "morphological radius must be >= 0";
  } else if (!prob(perturbation.dropout) || !prob(perturbation.spurious_rate) ||
             !prob(perturbation.label_noise)) {
    os << "perturbation probabilities must lie in [0, 1]";
  } else if (!prob(min_visible_fraction) || !prob(min_pair_overlap) ||
             !prob(overlap_bias) || !prob(depth_cue)) {
    os << "visibility, overlap, bias and depth-cue fractions must lie in [0, 1]";
  } else if (min_stuff_area < 0) {
    os << "minimum stuff area must be >= 0";
  } else if (placement_attempts < 1 || max_restarts < 1) {
    os << "attempt budgets must be >= 1";
  } else {
    return;
  }
  throw UsageError("invalid scene generator config: " + os.str());
}

std::string to_string(ShapeFamily s) {
  switch (s) {
    case ShapeFamily::kRectangle:
      return "rectangle";
    case ShapeFamily::kEllipse:
      return "ellipse";
    case ShapeFamily::kConvexPolygon:
      return "convex_polygon";
    case ShapeFamily::kMixed:
      return "mixed";
  }
  return "mixed";
}

std::string to_string(ConfidenceModel m) {
  switch (m) {
    case ConfidenceModel::kCorrelated:
      return "correlated";
    case ConfidenceModel::kRandom:
      return "random";
    case ConfidenceModel::kAdversarial:
      return "adversarial";
  }
  return "random";
}

ShapeFamily parse_shape_family(const std::string& s) {
  for (auto f : {ShapeFamily::kRectangle, ShapeFamily::kEllipse,
                 ShapeFamily::kConvexPolygon, ShapeFamily::kMixed}) {
    if (to_string(f) == s) return f;
  }
  throw UsageError("unknown shape family '" + s + "'");
}

ConfidenceModel parse_confidence_model(const std::string& s) {
  for (auto m : {ConfidenceModel::kCorrelated, ConfidenceModel::kRandom,
                 ConfidenceModel::kAdversarial}) {
    if (to_string(m) == s) return m;
  }
  throw UsageError("unknown confidence model '" + s + "'");
}

ClassCatalog make_catalog(const SceneGenConfig& config) {
  std::vector<ClassInfo> classes;
  for (std::int32_t t = 1; t <= config.thing_classes; ++t) {
    classes.push_back({t, "thing_" + std::to_string(t), true});
  }
  for (std::int32_t s = 1; s <= config.stuff_classes; ++s) {
    classes.push_back(
        {config.thing_classes + s, "stuff_" + std::to_string(s), false});
  }
  return ClassCatalog(std::move(classes));
}

Scene generate_scene(const SceneGenConfig& config, std::uint64_t seed,
                     std::int64_t image_id) {
  config.validate();
  const ImageGrid grid(config.width, config.height);
  const ClassCatalog catalog = make_catalog(config);
  const auto thing_ids = catalog.thing_ids();
  const auto stuff_ids = catalog.stuff_ids();
  Rng layout_rng(derive_seed(seed, 1));

  for (std::int32_t restart = 0; restart < config.max_restarts; ++restart) {
    const auto n = static_cast<std::int32_t>(
        layout_rng.uniform_int(config.min_instances, config.max_instances));

    // Stuff bands, top to bottom.
    const std::int32_t s_count = config.stuff_classes;
    std::vector<std::int32_t> cuts{0};
    const double band = static_cast<double>(config.height) / s_count;
    for (std::int32_t k = 1; k < s_count; ++k) {
      const double jitter = layout_rng.uniform(-band / 6.0, band / 6.0);
      cuts.push_back(std::clamp(static_cast<std::int32_t>(std::lround(k * band + jitter)),
                                cuts.back() + 1, config.height - (s_count - k)));
    }
    cuts.push_back(config.height);
    std::vector<ClassId> band_class = stuff_ids;
    layout_rng.shuffle(band_class);

    Layout layout(grid, config);
    bool placed_all = true;
    for (std::int32_t k = 0; k < n && placed_all; ++k) {
      bool placed = false;
      for (std::int32_t attempt = 0; attempt < config.placement_attempts; ++attempt) {
        const MaskSummary* anchor = nullptr;
        if (k > 0 && layout_rng.bernoulli(config.overlap_bias)) {
          anchor = &layout.shapes()[static_cast<std::size_t>(
              layout_rng.uniform_int(0, k - 1))].summary;
        }
        BinaryMask shape = draw_shape(grid, config, layout_rng, anchor);
        const ClassId cls = thing_ids[static_cast<std::size_t>(
            layout_rng.uniform_int(0, static_cast<std::int64_t>(thing_ids.size()) - 1))];
        if (layout.try_add(std::move(shape), cls, layout_rng.uniform())) {
          placed = true;
          break;
        }
      }
      placed_all = placed;
    }
    if (!placed_all) continue;

    // Stuff label of each pixel and the stuff area left visible.
    std::vector<ClassId> stuff_of_pixel(static_cast<std::size_t>(grid.pixel_count()));
    for (std::int32_t b = 0; b < s_count; ++b) {
      std::fill(stuff_of_pixel.begin() + static_cast<std::int64_t>(cuts[b]) * grid.width(),
                stuff_of_pixel.begin() + static_cast<std::int64_t>(cuts[b + 1]) * grid.width(),
                band_class[b]);
    }
    const auto& owner = layout.owner();
    std::vector<std::int64_t> stuff_area(static_cast<std::size_t>(catalog.max_id()) + 1, 0);
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (owner[p] < 0) ++stuff_area[stuff_of_pixel[p]];
    }
    bool stuff_ok = true;
    for (ClassId c : stuff_ids) {
      if (stuff_area[c] == 0 || stuff_area[c] < config.min_stuff_area) stuff_ok = false;
    }
    if (!stuff_ok) continue;

    Scene scene;
    scene.image_id = image_id;
    scene.grid = grid;
    scene.catalog = catalog;

    const auto& shapes = layout.shapes();
    std::vector<std::int32_t> by_depth(static_cast<std::size_t>(n));
    for (std::int32_t k = 0; k < n; ++k) by_depth[k] = k;
    std::stable_sort(by_depth.begin(), by_depth.end(),
                     [&](std::int32_t a, std::int32_t b) {
                       return shapes[a].depth < shapes[b].depth;
                     });
    std::vector<std::int32_t> z_rank(static_cast<std::size_t>(n));
    for (std::int32_t r = 0; r < n; ++r) z_rank[by_depth[r]] = r;
    std::vector<GtInstance> gt;
    for (std::int32_t k = 0; k < n; ++k) {
      gt.push_back({k + 1, shapes[k].class_id, shapes[k].mask, z_rank[k]});
    }

    PanopticMap panoptic(grid);
    for (std::int32_t k = 0; k < n; ++k) {
      if (layout.visible()[k] > 0) {
        panoptic.segments.push_back({k + 1, shapes[k].class_id, true, k + 1});
      }
    }
    std::vector<SegmentId> stuff_segment(stuff_area.size(), 0);
    SegmentId next_id = n + 1;
    for (ClassId c : stuff_ids) {
      stuff_segment[c] = next_id;
      panoptic.segments.push_back({next_id, c, false, std::nullopt});
      ++next_id;
    }
    std::vector<ClassId> labels(owner.size());
    for (std::size_t p = 0; p < owner.size(); ++p) {
      if (owner[p] >= 0) {
        panoptic.pixel_segments[p] = owner[p] + 1;
        labels[p] = shapes[owner[p]].class_id;
      } else {
        panoptic.pixel_segments[p] = stuff_segment[stuff_of_pixel[p]];
        labels[p] = stuff_of_pixel[p];
      }
    }

    const Perturbation& pert = config.perturbation;
    Rng noise_rng(derive_seed(seed, 4));
    if (pert.label_noise > 0.0) {
      const auto max_id = catalog.max_id();
      for (auto& l : labels) {
        if (noise_rng.bernoulli(pert.label_noise)) {
          l = static_cast<ClassId>(noise_rng.uniform_int(1, max_id));
        }
      }
    }
    scene.semantic = SemanticMap(grid, std::move(labels));

    Rng conf_rng(derive_seed(seed, 2));
    Rng pert_rng(derive_seed(seed, 3));
    std::int32_t next_proposal = 1;
    for (std::int32_t k = 0; k < n; ++k) {
      double conf = base_confidence(config, config.confidence_model, z_rank[k], n, conf_rng);
      if (config.confidence_noise > 0.0) {
        conf += config.confidence_noise * conf_rng.normal();
      }
      conf = std::clamp(conf, config.min_confidence, config.max_confidence);
      const bool dropped = pert.dropout > 0.0 && pert_rng.bernoulli(pert.dropout);
      BinaryMask mask = shapes[k].mask;
      if (pert.morph_radius > 0) {
        const auto r = static_cast<std::int32_t>(pert_rng.uniform_int(0, pert.morph_radius));
        const bool dilate = pert_rng.bernoulli(0.5);
        BinaryMask changed = morph(mask, r, dilate);
        if (!changed.empty()) mask = std::move(changed);
      }
      if (dropped) continue;
      scene.proposals.push_back({next_proposal++, shapes[k].class_id, conf, std::move(mask)});
    }
    if (pert.spurious_rate > 0.0) {
      for (std::int32_t k = 0; k < n; ++k) {
        if (!pert_rng.bernoulli(pert.spurious_rate)) continue;
        BinaryMask mask = draw_shape(grid, config, pert_rng);
        const ClassId cls = thing_ids[static_cast<std::size_t>(
            pert_rng.uniform_int(0, static_cast<std::int64_t>(thing_ids.size()) - 1))];
        const double conf = pert_rng.uniform(0.3, config.max_confidence);
        if (mask.empty()) continue;
        scene.proposals.push_back({next_proposal++, cls, conf, std::move(mask)});
      }
    }

    scene.gt_instances = std::move(gt);
    scene.gt_panoptic = std::move(panoptic);
    return scene;
  }
  throw DataError("scene generation failed: no valid layout for seed " +
                  std::to_string(seed) + " after " +
                  std::to_string(config.max_restarts) + " restarts");
}

std::uint64_t corpus_scene_seed(std::uint64_t corpus_seed, std::size_t index) {
  return derive_seed(corpus_seed, 1000 + index);
}

std::vector<Scene> generate_scenes(const SceneGenConfig& config,
                                   std::size_t n_scenes, std::uint64_t seed) {
  std::vector<Scene> scenes;
  scenes.reserve(n_scenes);
  for (std::size_t k = 0; k < n_scenes; ++k) {
    scenes.push_back(generate_scene(config, corpus_scene_seed(seed, k),
                                    static_cast<std::int64_t>(k + 1)));
  }
  return scenes;
}

std::string CorpusManifest::hash() const {
  return fnv1a_hex(manifest_to_json(*this));
}

CorpusManifest generate_corpus(const SceneGenConfig& config,
                               std::size_t n_scenes, std::uint64_t seed,
                               const std::filesystem::path& out_dir, int jobs) {
  if (n_scenes < 1) throw UsageError("corpus needs at least one scene");
  config.validate();
  std::filesystem::create_directories(out_dir);
  CorpusManifest manifest;
  manifest.config_hash = fnv1a_hex(config_to_json(config));
  manifest.seed = seed;
  manifest.scenes.resize(n_scenes);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < n_scenes; k = next++) {
      try {
        const std::uint64_t s = corpus_scene_seed(seed, k);
        const auto image_id = static_cast<std::int64_t>(k + 1);
        const Scene scene = generate_scene(config, s, image_id);
        const std::string text = scene_to_json(scene);
        std::ostringstream name;
        name << "scene_";
        name.width(6);
        name.fill('0');
        name << image_id << ".json";
        write_text_file(out_dir / name.str(), text);
        manifest.scenes[k] = {name.str(), image_id, s, fnv1a_hex(text)};
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(n_scenes)));
  std::vector<std::thread> threads;
  for (int t = 1; t < n_threads; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  write_text_file(out_dir / "manifest.json", manifest_to_json(manifest));
  return manifest;
}

}  // namespace ocfusion
