#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ocfusion {

/// Pixel grid shared by every mask and map of one image. Pixels are indexed
/// in row-major order: index = y * width + x.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(std::int32_t width, std::int32_t height);

  std::int32_t width() const noexcept { return width_; }
  std::int32_t height() const noexcept { return height_; }
  std::int64_t pixel_count() const noexcept {
    return static_cast<std::int64_t>(width_) * height_;
  }

  bool operator==(const ImageGrid&) const = default;

  std::string to_string() const;

 private:
  std::int32_t width_ = 1;
  std::int32_t height_ = 1;
};

/// Half-open run [start, start + length) of row-major pixel indices.
struct Run {
  std::int32_t start = 0;
  std::int32_t length = 0;

  std::int64_t end() const noexcept {
    return static_cast<std::int64_t>(start) + length;
  }
  bool operator==(const Run&) const = default;
};

/// Inclusive pixel bounding box. Empty masks report an empty box.
struct BoundingBox {
  std::int32_t x0 = 0;
  std::int32_t y0 = 0;
  std::int32_t x1 = -1;
  std::int32_t y1 = -1;

  bool empty() const noexcept { return x1 < x0 || y1 < y0; }
  std::int64_t area() const noexcept {
    return empty() ? 0
                   : static_cast<std::int64_t>(x1 - x0 + 1) * (y1 - y0 + 1);
  }
  bool overlaps(const BoundingBox& o) const noexcept {
    return !empty() && !o.empty() && x0 <= o.x1 && o.x0 <= x1 && y0 <= o.y1 &&
           o.y0 <= y1;
  }
  bool operator==(const BoundingBox&) const = default;
};

/// Run-length encoded binary mask. Runs are sorted, non-overlapping and
/// maximal (no two runs touch), so equal pixel sets have equal encodings.
/// Immutable after construction.
class BinaryMask {
 public:
  /// Empty mask on a 1x1 grid; mostly useful as a placeholder.
  BinaryMask() = default;
  /// Empty mask on `grid`.
  explicit BinaryMask(ImageGrid grid) : grid_(grid) {}

  /// Validates the run invariants; throws DataError on violation.
  static BinaryMask from_runs(ImageGrid grid, std::vector<Run> runs);
  /// Builds from a dense row-major bitmap (nonzero = on).
  static BinaryMask from_bitmap(ImageGrid grid,
                                std::span<const std::uint8_t> bitmap);
  static BinaryMask full(ImageGrid grid);
  /// Axis-aligned rectangle clipped to the grid.
  static BinaryMask rectangle(ImageGrid grid, std::int32_t x0, std::int32_t y0,
                              std::int32_t width, std::int32_t height);

  const ImageGrid& grid() const noexcept { return grid_; }
  std::span<const Run> runs() const noexcept { return runs_; }
  std::int64_t area() const noexcept { return area_; }
  bool empty() const noexcept { return runs_.empty(); }
  bool contains(std::int64_t pixel) const noexcept;

  std::vector<std::uint8_t> to_bitmap() const;

  bool operator==(const BinaryMask& o) const {
    return grid_ == o.grid_ && runs_ == o.runs_;
  }

 private:
  struct Trusted {};
  BinaryMask(ImageGrid grid, std::vector<Run> runs, Trusted);

  friend BinaryMask intersect(const BinaryMask&, const BinaryMask&);
  friend BinaryMask subtract(const BinaryMask&, const BinaryMask&);
  friend BinaryMask unite(const BinaryMask&, const BinaryMask&);
  friend BinaryMask subtract(const BinaryMask&, std::span<const std::uint8_t>);

  ImageGrid grid_;
  std::vector<Run> runs_;
  std::int64_t area_ = 0;
};

/// Returns an empty string when `runs` is a valid encoding on `grid`,
/// otherwise a description of the first violation.
std::string check_runs(const ImageGrid& grid, std::span<const Run> runs);

BinaryMask intersect(const BinaryMask& a, const BinaryMask& b);
BinaryMask subtract(const BinaryMask& a, const BinaryMask& b);
BinaryMask unite(const BinaryMask& a, const BinaryMask& b);
/// Pixels of `a` whose entry in the dense row-major `occupied` buffer is zero.
BinaryMask subtract(const BinaryMask& a, std::span<const std::uint8_t> occupied);

inline std::int64_t area(const BinaryMask& a) noexcept { return a.area(); }

/// Area of a ∩ b without materializing the intersection.
std::int64_t intersection_area(const BinaryMask& a, const BinaryMask& b);

struct IntersectionStats {
  std::int64_t area_i = 0;
  std::int64_t area_j = 0;
  std::int64_t area_inter = 0;
  double ratio_i = 0.0;
  double ratio_j = 0.0;

  /// True when either ratio reaches `rho`.
  bool appreciable(double rho) const noexcept {
    return ratio_i >= rho || ratio_j >= rho;
  }
};

IntersectionStats intersection_stats(const BinaryMask& a, const BinaryMask& b);
/// Same as above with the intersection area already known.
IntersectionStats intersection_stats(std::int64_t area_i, std::int64_t area_j,
                                     std::int64_t area_inter) noexcept;

/// |a ∩ b| / |a ∪ b|, 0 when both are empty.
double iou(const BinaryMask& a, const BinaryMask& b);

/// Geometry derived once per mask and reused by pairwise computations.
struct MaskSummary {
  std::int64_t area = 0;
  BoundingBox bbox;
  double centroid_x = 0.0;
  double centroid_y = 0.0;
};

MaskSummary summarize(const BinaryMask& mask);

}  // namespace ocfusion
