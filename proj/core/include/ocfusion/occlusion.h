#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ocfusion/mask.h"
#include "ocfusion/scene.h"

namespace ocfusion {

/// Pairwise occlusion relation over the instances of one image.
///
/// Entry (i, j) is 1 when instance i lies on top of instance j, 0 when j lies
/// on top of i, and -1 when the pair carries no relation (no appreciable
/// overlap, or ambiguous supervision). Diagonal entries are -1 and defined
/// entries are antisymmetric: at(j, i) == 1 - at(i, j).
class OcclusionMatrix {
 public:
  OcclusionMatrix() = default;
  /// n x n matrix with every entry -1.
  explicit OcclusionMatrix(std::size_t n);

  /// Row-major entries; throws DataError if the invariants do not hold.
  static OcclusionMatrix from_entries(std::size_t n,
                                      std::vector<std::int8_t> entries);

  std::size_t size() const noexcept { return n_; }
  int at(std::size_t i, std::size_t j) const;
  bool defined(std::size_t i, std::size_t j) const { return at(i, j) >= 0; }

  /// Records that `top` lies over `bottom`; writes both entries.
  void set_on_top(std::size_t top, std::size_t bottom);
  void clear(std::size_t i, std::size_t j);

  /// Number of unordered pairs with a defined relation.
  std::size_t defined_pairs() const;

  const std::vector<std::int8_t>& entries() const noexcept { return entries_; }
  bool operator==(const OcclusionMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::int8_t> entries_;
};

/// Returns an empty string when `m` satisfies the matrix invariants.
std::string check_occlusion_matrix(std::size_t n,
                                   std::span<const std::int8_t> entries);

/// Ground-truth relation by majority ownership of each appreciable
/// intersection in the panoptic ground truth. Rows follow the order of
/// `instances`; thing segments map to instances through `source_id`.
OcclusionMatrix derive_gt_occlusion(const std::vector<GtInstance>& instances,
                                    const PanopticMap& gt_panoptic, double rho);
/// Throws DataError when the scene carries no ground truth.
OcclusionMatrix derive_gt_occlusion(const Scene& scene, double rho);

/// Greedy one-to-one proposal to ground-truth matching by descending IoU.
/// Element k is the gt index matched to proposal k, if any.
std::vector<std::optional<std::size_t>> match_proposals(
    const std::vector<InstanceProposal>& proposals,
    const std::vector<GtInstance>& instances, double min_iou = 0.5);

/// Fusion ordering: higher confidence first, then larger area, then lower id.
bool ranks_before(const InstanceProposal& a, std::int64_t area_a,
                  const InstanceProposal& b, std::int64_t area_b) noexcept;

// ---------------------------------------------------------------------------
// Pair features and the linear pair classifier.

inline constexpr std::size_t kNumPairFeatures = 9;
using PairFeatures = std::array<double, kNumPairFeatures>;

/// Names in feature-vector order.
const std::array<std::string_view, kNumPairFeatures>& pair_feature_names();

/// Everything an occlusion predictor may look at for one ordered pair.
struct PairQuery {
  const InstanceProposal& i;
  const InstanceProposal& j;
  const MaskSummary& summary_i;
  const MaskSummary& summary_j;
  /// Statistics of (mask_i, mask_j) in that order.
  const IntersectionStats& stats;

  /// The same pair with roles exchanged. `swapped_stats` must outlive it.
  PairQuery swapped(const IntersectionStats& swapped_stats) const {
    return {j, i, summary_j, summary_i, swapped_stats};
  }
};

IntersectionStats swap_roles(const IntersectionStats& s) noexcept;

/// [R_i, R_j, IoU, conf_i - conf_j, ln(area_i/area_j), same_class,
///  dcx/width, dcy/height, ln(bbox_area_i/bbox_area_j)].
/// Throws DataError for zero-area masks.
PairFeatures extract_pair_features(const PairQuery& q);
PairFeatures extract_pair_features(const InstanceProposal& i,
                                   const InstanceProposal& j,
                                   const IntersectionStats& stats);

struct TrainingPair {
  PairFeatures features{};
  int label = 0;
  std::int64_t image_id = 0;
  std::int32_t proposal_i = 0;
  std::int32_t proposal_j = 0;
};

/// Mines labelled pairs from one scene. Proposals are matched to ground truth
/// instances; matched pairs with appreciable overlap and a defined ground
/// truth relation are kept, subsampled uniformly to max_pairs_per_image / 2
/// unordered pairs, and emitted in both orders.
std::vector<TrainingPair> sample_training_pairs(
    const Scene& scene, const OcclusionMatrix& gt_occlusion, double rho,
    std::size_t max_pairs_per_image, std::uint64_t seed);

struct TrainingMetadata {
  std::uint64_t seed = 0;
  int epochs = 0;
  double learning_rate = 0.0;
  std::size_t n_pairs = 0;
  /// Mean BCE before training followed by the loss after each epoch.
  std::vector<double> loss_curve;
};

struct PairClassifierModel {
  PairFeatures weights{};
  double bias = 0.0;
  TrainingMetadata training;

  double logit(const PairFeatures& f) const noexcept;
};

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1.0;
  std::uint64_t seed = 0;
};

/// Full-batch gradient descent on mean binary cross-entropy from zero
/// weights. Rejects empty input, non-finite features, and sets that break the
/// pair-inversion invariant.
PairClassifierModel train_occlusion_classifier(
    std::span<const TrainingPair> pairs, const TrainConfig& config = {});

double mean_bce(const PairClassifierModel& model,
                std::span<const TrainingPair> pairs);

/// Fraction of pairs whose thresholded logit matches the label.
double training_accuracy(const PairClassifierModel& model,
                         std::span<const TrainingPair> pairs);

/// Antisymmetrized decision: sign of logit(i, j) - logit(j, i), falling back
/// to the fusion ordering on an exact tie.
bool predict_occlude(const PairClassifierModel& model, const PairQuery& q);
bool predict_occlude(const PairClassifierModel& model,
                     const InstanceProposal& i, const InstanceProposal& j);

// ---------------------------------------------------------------------------
// Predictors consumed by fusion.

class OcclusionPredictor {
 public:
  virtual ~OcclusionPredictor() = default;
  /// True when proposal q.i should be placed on top of proposal q.j.
  virtual bool occludes(const PairQuery& q) const = 0;
  virtual std::string name() const = 0;
};

/// Detection-confidence ordering; the baseline heuristic as a predictor.
class ConfidencePredictor final : public OcclusionPredictor {
 public:
  bool occludes(const PairQuery& q) const override;
  std::string name() const override { return "confidence"; }
};

/// Answers from a ground-truth matrix through a proposal-to-instance mapping,
/// falling back to confidence ordering where no relation is defined.
class OraclePredictor final : public OcclusionPredictor {
 public:
  OraclePredictor(OcclusionMatrix matrix,
                  std::unordered_map<std::int32_t, std::size_t> proposal_to_gt);

  bool occludes(const PairQuery& q) const override;
  std::string name() const override { return "oracle"; }
  const OcclusionMatrix& matrix() const noexcept { return matrix_; }

 private:
  OcclusionMatrix matrix_;
  std::unordered_map<std::int32_t, std::size_t> proposal_to_gt_;
};

/// Builds an oracle for `proposals` from their ground-truth matching.
/// Throws DataError when a matched index is outside the matrix.
OraclePredictor oracle_predictor(
    const OcclusionMatrix& gt_occlusion,
    const std::vector<InstanceProposal>& proposals,
    const std::vector<std::optional<std::size_t>>& matching);

class ClassifierPredictor final : public OcclusionPredictor {
 public:
  explicit ClassifierPredictor(PairClassifierModel model)
      : model_(std::move(model)) {}

  bool occludes(const PairQuery& q) const override {
    return predict_occlude(model_, q);
  }
  std::string name() const override { return "classifier"; }
  const PairClassifierModel& model() const noexcept { return model_; }

 private:
  PairClassifierModel model_;
};

// ---------------------------------------------------------------------------
// Predictor accuracy against ground truth.

struct AccuracyReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t inter_total = 0;
  std::size_t inter_correct = 0;
  std::size_t intra_total = 0;
  std::size_t intra_correct = 0;
  /// Defined ground-truth ordered pairs skipped because an instance had no
  /// matched proposal.
  std::size_t unmatched = 0;

  AccuracyReport& operator+=(const AccuracyReport& o);

  /// Throw DataError when the relevant denominator is zero.
  double accuracy() const;
  double inter_accuracy() const;
  double intra_accuracy() const;
};

/// Scores `predictor` on every defined ordered pair of `gt_occlusion`,
/// querying the proposals matched to the two instances.
AccuracyReport evaluate_predictor(const OcclusionPredictor& predictor,
                                  const Scene& scene,
                                  const OcclusionMatrix& gt_occlusion);

}  // namespace ocfusion
