#include "ocfusion/mask.h"

#include <algorithm>
#include <limits>
#include <sstream>

#include "ocfusion/error.h"

namespace ocfusion {

namespace {

void check_same_grid(const BinaryMask& a, const BinaryMask& b) {
  if (a.grid() != b.grid()) {
    throw DimensionError("mask grid mismatch: " + a.grid().to_string() +
                         " vs " + b.grid().to_string());
  }
}

// Appends [start, end) and coalesces with the previous run when touching.
void push_run(std::vector<Run>& out, std::int64_t start, std::int64_t end) {
  if (end <= start) return;
  if (!out.empty() && out.back().end() >= start) {
    const std::int64_t merged_end = std::max(out.back().end(), end);
    out.back().length = static_cast<std::int32_t>(merged_end - out.back().start);
    return;
  }
  out.push_back({static_cast<std::int32_t>(start),
                 static_cast<std::int32_t>(end - start)});
}

std::int64_t sum_lengths(const std::vector<Run>& runs) {
  std::int64_t total = 0;
  for (const Run& r : runs) total += r.length;
  return total;
}

// Calls fn(y, x0, x1) for each row-segment of a run (x1 inclusive).
template <typename Fn>
void for_each_row_segment(const ImageGrid& grid, const Run& run, Fn&& fn) {
  const std::int64_t w = grid.width();
  std::int64_t p = run.start;
  const std::int64_t end = run.end();
  while (p < end) {
    const std::int64_t y = p / w;
    const std::int64_t x0 = p - y * w;
    const std::int64_t row_end = std::min(end, (y + 1) * w);
    fn(y, x0, row_end - 1 - y * w);
    p = row_end;
  }
}

}  // namespace

ImageGrid::ImageGrid(std::int32_t width, std::int32_t height)
    : width_(width), height_(height) {
  if (width < 1 || height < 1) {
    throw DataError("image grid dimensions must be >= 1, got " + to_string());
  }
  if (pixel_count() > std::numeric_limits<std::int32_t>::max()) {
    throw DataError("image grid " + to_string() + " exceeds 2^31-1 pixels");
  }
}

std::string ImageGrid::to_string() const {
  std::ostringstream os;
  os << width_ << "x" << height_;
  return os.str();
}

BinaryMask::BinaryMask(ImageGrid grid, std::vector<Run> runs, Trusted)
    : grid_(grid), runs_(std::move(runs)), area_(sum_lengths(runs_)) {}

std::string check_runs(const ImageGrid& grid, std::span<const Run> runs) {
  std::int64_t prev_end = -1;
  for (std::size_t k = 0; k < runs.size(); ++k) {
    const Run& r = runs[k];
    std::ostringstream os;
    if (r.start < 0 || r.length <= 0) {
      os << "run " << k << " [" << r.start << ", " << r.length
         << "] has negative start or non-positive length";
      return os.str();
    }
    if (r.end() > grid.pixel_count()) {
      os << "run " << k << " [" << r.start << ", " << r.length
         << "] extends past the " << grid.to_string() << " grid";
      return os.str();
    }
    if (prev_end >= 0 && r.start <= prev_end) {
      os << "run " << k << " starting at " << r.start
         << " is unsorted, overlapping or adjacent to its predecessor";
      return os.str();
    }
    prev_end = r.end();
  }
  return {};
}

BinaryMask BinaryMask::from_runs(ImageGrid grid, std::vector<Run> runs) {
  if (auto problem = check_runs(grid, runs); !problem.empty()) {
    throw DataError("invalid RLE mask: " + problem);
  }
  return BinaryMask(grid, std::move(runs), Trusted{});
}

BinaryMask BinaryMask::from_bitmap(ImageGrid grid,
                                   std::span<const std::uint8_t> bitmap) {
  if (static_cast<std::int64_t>(bitmap.size()) != grid.pixel_count()) {
    throw DimensionError("bitmap size does not match grid " + grid.to_string());
  }
  std::vector<Run> runs;
  const std::int64_t n = grid.pixel_count();
  std::int64_t p = 0;
  while (p < n) {
    while (p < n && bitmap[p] == 0) ++p;
    if (p == n) break;
    const std::int64_t start = p;
    while (p < n && bitmap[p] != 0) ++p;
    runs.push_back({static_cast<std::int32_t>(start),
                    static_cast<std::int32_t>(p - start)});
  }
  return BinaryMask(grid, std::move(runs), Trusted{});
}

BinaryMask BinaryMask::full(ImageGrid grid) {
  return BinaryMask(grid,
                    {{0, static_cast<std::int32_t>(grid.pixel_count())}},
                    Trusted{});
}

BinaryMask BinaryMask::rectangle(ImageGrid grid, std::int32_t x0,
                                 std::int32_t y0, std::int32_t width,
                                 std::int32_t height) {
  const std::int64_t xa = std::max<std::int64_t>(x0, 0);
  const std::int64_t ya = std::max<std::int64_t>(y0, 0);
  const std::int64_t xb =
      std::min<std::int64_t>(static_cast<std::int64_t>(x0) + width, grid.width());
  const std::int64_t yb = std::min<std::int64_t>(
      static_cast<std::int64_t>(y0) + height, grid.height());
  std::vector<Run> runs;
  for (std::int64_t y = ya; y < yb; ++y) {
    push_run(runs, y * grid.width() + xa, y * grid.width() + xb);
  }
  return BinaryMask(grid, std::move(runs), Trusted{});
}

bool BinaryMask::contains(std::int64_t pixel) const noexcept {
  auto it = std::upper_bound(
      runs_.begin(), runs_.end(), pixel,
      [](std::int64_t p, const Run& r) { return p < r.start; });
  if (it == runs_.begin()) return false;
  --it;
  return pixel < it->end();
}

std::vector<std::uint8_t> BinaryMask::to_bitmap() const {
  std::vector<std::uint8_t> bitmap(static_cast<std::size_t>(grid_.pixel_count()),
                                   0);
  for (const Run& r : runs_) {
    std::fill_n(bitmap.begin() + r.start, r.length, std::uint8_t{1});
  }
  return bitmap;
}

namespace {

// First run whose end lies beyond `pos`.
template <typename Runs>
auto first_reaching(const Runs& runs, std::int64_t pos) {
  return std::partition_point(runs.begin(), runs.end(),
                              [pos](const Run& r) { return r.end() <= pos; });
}

}  // namespace

BinaryMask intersect(const BinaryMask& a, const BinaryMask& b) {
  check_same_grid(a, b);
  std::vector<Run> out;
  if (a.runs_.empty() || b.runs_.empty()) {
    return BinaryMask(a.grid_, std::move(out), BinaryMask::Trusted{});
  }
  auto ia = first_reaching(a.runs_, b.runs_.front().start);
  auto ib = first_reaching(b.runs_, a.runs_.front().start);
  while (ia != a.runs_.end() && ib != b.runs_.end()) {
    const std::int64_t lo = std::max<std::int64_t>(ia->start, ib->start);
    const std::int64_t hi = std::min(ia->end(), ib->end());
    push_run(out, lo, hi);
    if (ia->end() < ib->end()) {
      ++ia;
    } else {
      ++ib;
    }
  }
  return BinaryMask(a.grid_, std::move(out), BinaryMask::Trusted{});
}

BinaryMask subtract(const BinaryMask& a,
                    std::span<const std::uint8_t> occupied) {
  if (static_cast<std::int64_t>(occupied.size()) != a.grid().pixel_count()) {
    throw DimensionError("occupancy buffer size does not match grid " +
                         a.grid().to_string());
  }
  std::vector<Run> out;
  out.reserve(a.runs_.size());
  for (const Run& r : a.runs_) {
    std::int64_t p = r.start;
    const std::int64_t end = r.end();
    while (p < end) {
      while (p < end && occupied[p] != 0) ++p;
      if (p == end) break;
      const std::int64_t start = p;
      while (p < end && occupied[p] == 0) ++p;
      out.push_back({static_cast<std::int32_t>(start),
                     static_cast<std::int32_t>(p - start)});
    }
  }
  return BinaryMask(a.grid_, std::move(out), BinaryMask::Trusted{});
}

BinaryMask subtract(const BinaryMask& a, const BinaryMask& b) {
  check_same_grid(a, b);
  std::vector<Run> out;
  auto ib = b.runs_.begin();
  for (const Run& r : a.runs_) {
    std::int64_t cursor = r.start;
    const std::int64_t end = r.end();
    while (ib != b.runs_.end() && ib->end() <= cursor) ++ib;
    auto jb = ib;
    while (jb != b.runs_.end() && jb->start < end) {
      push_run(out, cursor, jb->start);
      cursor = std::max(cursor, jb->end());
      if (jb->end() > end) break;
      ++jb;
    }
    push_run(out, cursor, end);
  }
  return BinaryMask(a.grid_, std::move(out), BinaryMask::Trusted{});
}

BinaryMask unite(const BinaryMask& a, const BinaryMask& b) {
  check_same_grid(a, b);
  std::vector<Run> out;
  out.reserve(a.runs_.size() + b.runs_.size());
  auto ia = a.runs_.begin();
  auto ib = b.runs_.begin();
  while (ia != a.runs_.end() || ib != b.runs_.end()) {
    const bool take_a =
        ib == b.runs_.end() || (ia != a.runs_.end() && ia->start <= ib->start);
    const Run& r = take_a ? *ia++ : *ib++;
    push_run(out, r.start, r.end());
  }
  return BinaryMask(a.grid_, std::move(out), BinaryMask::Trusted{});
}

std::int64_t intersection_area(const BinaryMask& a, const BinaryMask& b) {
  check_same_grid(a, b);
  std::int64_t total = 0;
  auto ra = a.runs();
  auto rb = b.runs();
  if (ra.empty() || rb.empty()) return 0;
  // Disjoint prefixes are skipped by binary search; this is the common case
  // for masks whose bounding boxes only just overlap.
  auto i = static_cast<std::size_t>(first_reaching(ra, rb.front().start) - ra.begin());
  auto j = static_cast<std::size_t>(first_reaching(rb, ra.front().start) - rb.begin());
  while (i < ra.size() && j < rb.size()) {
    const std::int64_t lo = std::max<std::int64_t>(ra[i].start, rb[j].start);
    const std::int64_t hi = std::min(ra[i].end(), rb[j].end());
    if (hi > lo) total += hi - lo;
    if (ra[i].end() < rb[j].end()) {
      ++i;
    } else {
      ++j;
    }
  }
  return total;
}

IntersectionStats intersection_stats(std::int64_t area_i, std::int64_t area_j,
                                     std::int64_t area_inter) noexcept {
  IntersectionStats s;
  s.area_i = area_i;
  s.area_j = area_j;
  s.area_inter = area_inter;
  s.ratio_i = area_i > 0 ? static_cast<double>(area_inter) / area_i : 0.0;
  s.ratio_j = area_j > 0 ? static_cast<double>(area_inter) / area_j : 0.0;
  return s;
}

IntersectionStats intersection_stats(const BinaryMask& a, const BinaryMask& b) {
  return intersection_stats(a.area(), b.area(), intersection_area(a, b));
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  const std::int64_t inter = intersection_area(a, b);
  const std::int64_t uni = a.area() + b.area() - inter;
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

MaskSummary summarize(const BinaryMask& mask) {
  MaskSummary s;
  s.area = mask.area();
  if (mask.empty()) return s;
  std::int64_t x_min = mask.grid().width();
  std::int64_t x_max = -1;
  std::int64_t sum_x = 0;
  std::int64_t sum_y = 0;
  for (const Run& r : mask.runs()) {
    for_each_row_segment(mask.grid(), r,
                         [&](std::int64_t y, std::int64_t x0, std::int64_t x1) {
                           const std::int64_t count = x1 - x0 + 1;
                           sum_x += (x0 + x1) * count / 2;
                           sum_y += y * count;
                           x_min = std::min(x_min, x0);
                           x_max = std::max(x_max, x1);
                         });
  }
  const std::int64_t w = mask.grid().width();
  const auto runs = mask.runs();
  s.bbox.x0 = static_cast<std::int32_t>(x_min);
  s.bbox.x1 = static_cast<std::int32_t>(x_max);
  s.bbox.y0 = static_cast<std::int32_t>(runs.front().start / w);
  s.bbox.y1 = static_cast<std::int32_t>((runs.back().end() - 1) / w);
  s.centroid_x = static_cast<double>(sum_x) / static_cast<double>(s.area);
  s.centroid_y = static_cast<double>(sum_y) / static_cast<double>(s.area);
  return s;
}

}  // namespace ocfusion
