#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "ocfusion/scene.h"

namespace ocfusion {

/// Matching accumulators for one category.
struct ClassAccumulator {
  double iou_sum = 0.0;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;

  ClassAccumulator& operator+=(const ClassAccumulator& o) {
    iou_sum += o.iou_sum;
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool present() const noexcept { return tp + fp + fn > 0; }
  double pq() const noexcept;
  double sq() const noexcept;
  double rq() const noexcept;
};

struct QualityTriple {
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  /// Classes contributing to the average.
  int n = 0;
};

/// Panoptic quality over one image or a corpus. Averages are unweighted means
/// over the classes that appear in either the ground truth or the prediction.
struct PQStats {
  std::map<ClassId, ClassAccumulator> per_class;
  QualityTriple all;
  QualityTriple things;
  QualityTriple stuff;

  /// Recomputes the averages from `per_class`.
  void finalize(const ClassCatalog& catalog);
};

/// Throws DataError on grid mismatch or categories missing from the catalog.
PQStats compute_pq(const PanopticMap& pred, const PanopticMap& gt,
                   const ClassCatalog& catalog);

/// Sums per-class accumulators across scenes before taking ratios.
/// Throws DataError for an empty corpus.
PQStats aggregate_pq(std::span<const PQStats> per_scene,
                     const ClassCatalog& catalog);

/// Aligned-column table with PQ / SQ / RQ for All, Things and Stuff.
std::string format_pq_table(const PQStats& stats);

}  // namespace ocfusion
