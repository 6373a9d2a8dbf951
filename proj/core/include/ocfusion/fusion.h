#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ocfusion/occlusion.h"
#include "ocfusion/scene.h"

namespace ocfusion {

enum class OcclusionScope { kAll, kInterClassOnly };

/// How the overlap threshold tau rejects a proposal.
enum class SkipConvention {
  /// Skip iff (area(M) - area(C)) / area(M) > tau.
  kOverlapRatio,
  /// Skip iff area(C) / area(M) <= tau.
  kRemainingFraction,
};

struct FusionParams {
  double confidence_floor = 0.5;
  double overlap_threshold = 0.5;   // tau
  double occlusion_ratio = 0.2;     // rho
  std::int64_t min_stuff_area = 4096;
  OcclusionScope occlusion_scope = OcclusionScope::kAll;
  SkipConvention skip_convention = SkipConvention::kOverlapRatio;

  static FusionParams coco() { return {}; }
  static FusionParams cityscapes() {
    FusionParams p;
    p.confidence_floor = 0.6;
    p.overlap_threshold = 0.6;
    p.occlusion_ratio = 0.1;
    p.min_stuff_area = 2048;
    return p;
  }

  /// Throws UsageError when a threshold is out of range.
  void validate() const;
};

enum class ProposalOutcome {
  kKept,
  kBelowConfidence,
  kOverlapRejected,
  /// Kept at first, then lost every pixel to later occluders.
  kEmptied,
};

std::string to_string(ProposalOutcome outcome);
std::string to_string(OcclusionScope scope);
std::string to_string(SkipConvention convention);

struct OcclusionQuery {
  std::int32_t proposal_i = 0;
  std::int32_t proposal_j = 0;
  bool answer = false;
  std::int64_t intersection_area = 0;
  std::int64_t reclaimed = 0;
};

struct ProposalRecord {
  std::int32_t proposal_id = 0;
  ProposalOutcome outcome = ProposalOutcome::kKept;
  std::int64_t mask_area = 0;
  /// |M_i - P| when the proposal is considered.
  std::int64_t unclaimed_area = 0;
  /// |C_i| after occlusion resolution, the value the skip rule sees.
  std::int64_t resolved_area = 0;
  /// Pixels owned when fusion finishes.
  std::int64_t final_area = 0;
  std::vector<OcclusionQuery> queries;
};

struct FusionTrace {
  std::vector<ProposalRecord> records;  // in processing order

  std::size_t query_count() const;
};

struct FusionResult {
  PanopticMap panoptic;
  FusionTrace trace;
};

/// Greedy fusion by detection confidence followed by stuff merging.
FusionResult fuse_by_confidence(const std::vector<InstanceProposal>& proposals,
                                const SemanticMap& semantic,
                                const ClassCatalog& catalog,
                                const FusionParams& params);

/// Occlusion-aware fusion: later proposals may reclaim intersection pixels
/// from earlier segments when the predictor places them on top.
/// Throws ContractError when the predictor answers a pair inconsistently.
FusionResult fuse_with_occlusion(const std::vector<InstanceProposal>& proposals,
                                 const SemanticMap& semantic,
                                 const ClassCatalog& catalog,
                                 const FusionParams& params,
                                 const OcclusionPredictor& predictor);

/// Assigns unclaimed pixels of each stuff class (ascending class id) to one
/// new segment when at least `min_stuff_area` of them remain.
PanopticMap merge_stuff(PanopticMap panoptic, const SemanticMap& semantic,
                        const ClassCatalog& catalog,
                        std::int64_t min_stuff_area);

}  // namespace ocfusion
