#include "ocfusion/fusion.h"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <sstream>

#include "ocfusion/error.h"

namespace ocfusion {

namespace {

void check_inputs(const std::vector<InstanceProposal>& proposals,
                  const SemanticMap& semantic, const ClassCatalog& catalog) {
  if (static_cast<std::int64_t>(semantic.labels.size()) !=
      semantic.grid.pixel_count()) {
    throw DimensionError("semantic label count does not match grid " +
                         semantic.grid.to_string());
  }
  for (const auto& p : proposals) {
    if (p.mask.grid() != semantic.grid) {
      throw DimensionError("proposal " + std::to_string(p.proposal_id) +
                           " grid " + p.mask.grid().to_string() +
                           " differs from semantic grid " +
                           semantic.grid.to_string());
    }
    if (!catalog.is_thing(p.class_id)) {
      throw DataError("proposal " + std::to_string(p.proposal_id) +
                      " has class " + std::to_string(p.class_id) +
                      ", which is not a thing class");
    }
  }
}

bool should_skip(const FusionParams& params, std::int64_t mask_area,
                 std::int64_t resolved_area) {
  if (mask_area <= 0) return true;
  const double m = static_cast<double>(mask_area);
  const double c = static_cast<double>(resolved_area);
  switch (params.skip_convention) {
    case SkipConvention::kOverlapRatio:
      return (m - c) / m > params.overlap_threshold;
    case SkipConvention::kRemainingFraction:
      return c / m <= params.overlap_threshold;
  }
  return true;
}

struct Merged {
  std::size_t proposal;  // index into proposals
  std::size_t record;    // index into trace.records
  BinaryMask claimed;
};

FusionResult fuse_impl(const std::vector<InstanceProposal>& proposals,
                       const SemanticMap& semantic, const ClassCatalog& catalog,
                       const FusionParams& params,
                       const OcclusionPredictor* predictor) {
  params.validate();
  check_inputs(proposals, semantic, catalog);
  const ImageGrid grid = semantic.grid;

  std::vector<MaskSummary> summaries(proposals.size());
  std::vector<std::size_t> order;
  std::vector<std::size_t> below_floor;
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    if (proposals[k].confidence >= params.confidence_floor) {
      summaries[k] = summarize(proposals[k].mask);
      order.push_back(k);
    } else {
      below_floor.push_back(k);
    }
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return ranks_before(proposals[a], summaries[a].area, proposals[b],
                        summaries[b].area);
  });

  FusionResult result;
  auto& records = result.trace.records;
  records.reserve(proposals.size());
  std::vector<Merged> merged;
  // Dense occupancy of the pixels owned by merged segments.
  std::vector<std::uint8_t> assigned(
      static_cast<std::size_t>(grid.pixel_count()), 0);
  const auto mark = [&](const BinaryMask& m, std::uint8_t value) {
    for (const Run& r : m.runs()) {
      std::fill_n(assigned.begin() + r.start, r.length, value);
    }
  };

  for (std::size_t i : order) {
    const InstanceProposal& pi = proposals[i];
    ProposalRecord rec;
    rec.proposal_id = pi.proposal_id;
    rec.mask_area = summaries[i].area;

    BinaryMask claimed = subtract(pi.mask, assigned);
    rec.unclaimed_area = claimed.area();

    std::vector<BinaryMask> reclaimed;
    if (predictor != nullptr) {
      for (Merged& m : merged) {
        const InstanceProposal& pj = proposals[m.proposal];
        const MaskSummary& sj = summaries[m.proposal];
        if (!summaries[i].bbox.overlaps(sj.bbox)) continue;
        const std::int64_t inter_area = intersection_area(pi.mask, pj.mask);
        if (inter_area == 0) continue;
        const IntersectionStats stats =
            intersection_stats(summaries[i].area, sj.area, inter_area);
        if (!stats.appreciable(params.occlusion_ratio)) continue;
        if (params.occlusion_scope == OcclusionScope::kInterClassOnly &&
            pi.class_id == pj.class_id) {
          continue;
        }
        const PairQuery q{pi, pj, summaries[i], sj, stats};
        const IntersectionStats swapped_stats = swap_roles(stats);
        const bool answer = predictor->occludes(q);
        const bool reverse = predictor->occludes(q.swapped(swapped_stats));
        if (answer == reverse) {
          std::ostringstream os;
          os << "occlusion predictor '" << predictor->name()
             << "' answered " << answer << " for both (" << pi.proposal_id
             << ", " << pj.proposal_id << ") and its reverse";
          throw ContractError(os.str());
        }
        OcclusionQuery logged{pi.proposal_id, pj.proposal_id, answer,
                              inter_area, 0};
        if (answer) {
          // C_j lies inside M_j, so C_j & M_i is the part of the overlap
          // that j still owns.
          const BinaryMask taken = intersect(m.claimed, pi.mask);
          if (!taken.empty()) {
            claimed = unite(claimed, taken);
            m.claimed = subtract(m.claimed, taken);
            logged.reclaimed = taken.area();
            reclaimed.push_back(taken);
          }
        }
        rec.queries.push_back(logged);
      }
    }

    rec.resolved_area = claimed.area();
    if (should_skip(params, rec.mask_area, rec.resolved_area)) {
      rec.outcome = ProposalOutcome::kOverlapRejected;
      // Pixels already taken from earlier segments stay unassigned.
      for (const BinaryMask& taken : reclaimed) mark(taken, 0);
    } else {
      rec.outcome = ProposalOutcome::kKept;
      mark(claimed, 1);
      merged.push_back({i, records.size(), std::move(claimed)});
    }
    records.push_back(std::move(rec));
  }

  for (std::size_t k : below_floor) {
    ProposalRecord rec;
    rec.proposal_id = proposals[k].proposal_id;
    rec.outcome = ProposalOutcome::kBelowConfidence;
    rec.mask_area = proposals[k].mask.area();
    records.push_back(std::move(rec));
  }

  PanopticMap panoptic(grid);
  SegmentId next_id = 1;
  for (const Merged& m : merged) {
    ProposalRecord& rec = records[m.record];
    rec.final_area = m.claimed.area();
    if (m.claimed.empty()) {
      rec.outcome = ProposalOutcome::kEmptied;
      continue;
    }
    const InstanceProposal& p = proposals[m.proposal];
    const SegmentId id = next_id++;
    panoptic.segments.push_back({id, p.class_id, true, p.proposal_id});
    for (const Run& r : m.claimed.runs()) {
      std::fill_n(panoptic.pixel_segments.begin() + r.start, r.length, id);
    }
  }

  result.panoptic = merge_stuff(std::move(panoptic), semantic, catalog,
                                params.min_stuff_area);
  return result;
}

}  // namespace

void FusionParams::validate() const {
  std::ostringstream os;
  if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0)) {
    os << "confidence floor must lie in [0, 1], got " << confidence_floor;
  } else if (!(overlap_threshold > 0.0 && overlap_threshold < 1.0)) {
    os << "tau must lie in (0, 1), got " << overlap_threshold;
  } else if (!(occlusion_ratio > 0.0 && occlusion_ratio < 1.0)) {
    os << "rho must lie in (0, 1), got " << occlusion_ratio;
  } else if (min_stuff_area < 0) {
    os << "minimum stuff area must be >= 0, got " << min_stuff_area;
  } else {
    return;
  }
  throw UsageError(os.str());
}

std::string to_string(ProposalOutcome outcome) {
  switch (outcome) {
    case ProposalOutcome::kKept:
      return "kept";
    case ProposalOutcome::kBelowConfidence:
      return "below_confidence";
    case ProposalOutcome::kOverlapRejected:
      return "overlap_rejected";
    case ProposalOutcome::kEmptied:
      return "emptied";
  }
  return "unknown";
}

std::string to_string(OcclusionScope scope) {
  return scope == OcclusionScope::kAll ? "all" : "inter_class_only";
}

std::string to_string(SkipConvention convention) {
  return convention == SkipConvention::kOverlapRatio ? "overlap_ratio"
                                                     : "remaining_fraction";
}

std::size_t FusionTrace::query_count() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.queries.size();
  return n;
}

FusionResult fuse_by_confidence(const std::vector<InstanceProposal>& proposals,
                                const SemanticMap& semantic,
                                const ClassCatalog& catalog,
                                const FusionParams& params) {
  return fuse_impl(proposals, semantic, catalog, params, nullptr);
}

FusionResult fuse_with_occlusion(const std::vector<InstanceProposal>& proposals,
                                 const SemanticMap& semantic,
                                 const ClassCatalog& catalog,
                                 const FusionParams& params,
                                 const OcclusionPredictor& predictor) {
  return fuse_impl(proposals, semantic, catalog, params, &predictor);
}

PanopticMap merge_stuff(PanopticMap panoptic, const SemanticMap& semantic,
                        const ClassCatalog& catalog,
                        std::int64_t min_stuff_area) {
  if (panoptic.grid != semantic.grid ||
      panoptic.pixel_segments.size() != semantic.labels.size()) {
    throw DimensionError("panoptic grid " + panoptic.grid.to_string() +
                         " differs from semantic grid " +
                         semantic.grid.to_string());
  }
  const ClassId max_id = catalog.max_id();
  // Stuff classes that may still receive a segment.
  std::vector<std::uint8_t> eligible(static_cast<std::size_t>(max_id) + 1, 0);
  for (ClassId c : catalog.stuff_ids()) eligible[c] = 1;
  for (const auto& s : panoptic.segments) {
    if (!s.is_thing && s.category <= max_id) eligible[s.category] = 0;
  }

  std::vector<std::int64_t> counts(eligible.size(), 0);
  const auto& labels = semantic.labels;
  auto& pixels = panoptic.pixel_segments;
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    const ClassId l = labels[p];
    if (pixels[p] == 0 && l > 0 && l <= max_id && eligible[l]) ++counts[l];
  }

  SegmentId next_id = 1;
  for (const auto& s : panoptic.segments) {
    next_id = std::max(next_id, s.segment_id + 1);
  }
  std::vector<SegmentId> id_of_class(eligible.size(), 0);
  bool any = false;
  for (ClassId c : catalog.stuff_ids()) {
    if (eligible[c] && counts[c] > 0 && counts[c] >= min_stuff_area) {
      id_of_class[c] = next_id;
      panoptic.segments.push_back({next_id, c, false, std::nullopt});
      ++next_id;
      any = true;
    }
  }
  if (!any) return panoptic;
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    const ClassId l = labels[p];
    if (pixels[p] == 0 && l > 0 && l <= max_id && id_of_class[l] != 0) {
      pixels[p] = id_of_class[l];
    }
  }
  return panoptic;
}

}  // namespace ocfusion
