#include "ocfusion/occlusion.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <tuple>

#include "ocfusion/error.h"
#include "ocfusion/rng.h"

namespace ocfusion {

namespace {

void check_rho(double rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    std::ostringstream os;
    os << "rho must lie in (0, 1), got " << rho;
    throw UsageError(os.str());
  }
}

double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

OcclusionMatrix::OcclusionMatrix(std::size_t n) : n_(n), entries_(n * n, -1) {}

std::string check_occlusion_matrix(std::size_t n,
                                   std::span<const std::int8_t> entries) {
  std::ostringstream os;
  if (entries.size() != n * n) {
    os << "expected " << n * n << " entries, got " << entries.size();
    return os.str();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (entries[i * n + i] != -1) {
      os << "diagonal entry (" << i << ", " << i << ") must be -1";
      return os.str();
    }
    for (std::size_t j = 0; j < n; ++j) {
      const int a = entries[i * n + j];
      const int b = entries[j * n + i];
      if (a < -1 || a > 1) {
        os << "entry (" << i << ", " << j << ") = " << a
           << " outside {-1, 0, 1}";
        return os.str();
      }
      if ((a < 0) != (b < 0) || (a >= 0 && a != 1 - b)) {
        os << "entries (" << i << ", " << j << ") = " << a << " and (" << j
           << ", " << i << ") = " << b << " are not antisymmetric";
        return os.str();
      }
    }
  }
  return {};
}

OcclusionMatrix OcclusionMatrix::from_entries(std::size_t n,
                                              std::vector<std::int8_t> entries) {
  if (auto problem = check_occlusion_matrix(n, entries); !problem.empty()) {
    throw DataError("invalid occlusion matrix: " + problem);
  }
  OcclusionMatrix m;
  m.n_ = n;
  m.entries_ = std::move(entries);
  return m;
}

int OcclusionMatrix::at(std::size_t i, std::size_t j) const {
  if (i >= n_ || j >= n_) {
    throw DataError("occlusion matrix index (" + std::to_string(i) + ", " +
                    std::to_string(j) + ") out of range for n = " +
                    std::to_string(n_));
  }
  return entries_[i * n_ + j];
}

void OcclusionMatrix::set_on_top(std::size_t top, std::size_t bottom) {
  if (top == bottom) throw DataError("an instance cannot occlude itself");
  at(top, bottom);  // range check
  entries_[top * n_ + bottom] = 1;
  entries_[bottom * n_ + top] = 0;
}

void OcclusionMatrix::clear(std::size_t i, std::size_t j) {
  at(i, j);
  entries_[i * n_ + j] = -1;
  entries_[j * n_ + i] = -1;
}

std::size_t OcclusionMatrix::defined_pairs() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = i + 1; j < n_; ++j)
      if (entries_[i * n_ + j] >= 0) ++count;
  return count;
}

OcclusionMatrix derive_gt_occlusion(const std::vector<GtInstance>& instances,
                                    const PanopticMap& gt_panoptic,
                                    double rho) {
  check_rho(rho);
  const ImageGrid grid = gt_panoptic.grid;
  if (static_cast<std::int64_t>(gt_panoptic.pixel_segments.size()) !=
      grid.pixel_count()) {
    throw DimensionError("gt panoptic pixel count does not match its grid");
  }
  std::unordered_map<std::int32_t, std::int32_t> index_of_instance;
  for (std::size_t k = 0; k < instances.size(); ++k) {
    if (instances[k].mask.grid() != grid) {
      throw DimensionError("gt instance " +
                           std::to_string(instances[k].instance_id) +
                           " grid " + instances[k].mask.grid().to_string() +
                           " differs from panoptic grid " + grid.to_string());
    }
    index_of_instance.emplace(instances[k].instance_id,
                              static_cast<std::int32_t>(k));
  }
  std::unordered_map<SegmentId, std::int32_t> owner_of_segment;
  for (const auto& s : gt_panoptic.segments) {
    if (!s.is_thing || !s.source_id) continue;
    auto it = index_of_instance.find(*s.source_id);
    if (it != index_of_instance.end()) {
      owner_of_segment.emplace(s.segment_id, it->second);
    }
  }

  std::vector<std::int32_t> owner(gt_panoptic.pixel_segments.size(), -1);
  for (std::size_t p = 0; p < owner.size(); ++p) {
    const SegmentId id = gt_panoptic.pixel_segments[p];
    if (id == 0) continue;
    auto it = owner_of_segment.find(id);
    if (it != owner_of_segment.end()) owner[p] = it->second;
  }

  std::vector<MaskSummary> summaries;
  summaries.reserve(instances.size());
  for (const auto& g : instances) summaries.push_back(summarize(g.mask));

  OcclusionMatrix m(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    for (std::size_t j = i + 1; j < instances.size(); ++j) {
      if (!summaries[i].bbox.overlaps(summaries[j].bbox)) continue;
      const BinaryMask inter = intersect(instances[i].mask, instances[j].mask);
      const auto stats = intersection_stats(summaries[i].area,
                                            summaries[j].area, inter.area());
      if (inter.empty() || !stats.appreciable(rho)) continue;
      std::int64_t owned_i = 0;
      std::int64_t owned_j = 0;
      for (const Run& r : inter.runs()) {
        for (std::int64_t p = r.start; p < r.end(); ++p) {
          if (owner[p] == static_cast<std::int32_t>(i)) ++owned_i;
          if (owner[p] == static_cast<std::int32_t>(j)) ++owned_j;
        }
      }
      if (owned_i > owned_j) {
        m.set_on_top(i, j);
      } else if (owned_j > owned_i) {
        m.set_on_top(j, i);
      }
    }
  }
  return m;
}

OcclusionMatrix derive_gt_occlusion(const Scene& scene, double rho) {
  if (!scene.gt_instances || !scene.gt_panoptic) {
    throw DataError("scene " + std::to_string(scene.image_id) +
                    " has no ground truth instances and panoptic map");
  }
  return derive_gt_occlusion(*scene.gt_instances, *scene.gt_panoptic, rho);
}

std::vector<std::optional<std::size_t>> match_proposals(
    const std::vector<InstanceProposal>& proposals,
    const std::vector<GtInstance>& instances, double min_iou) {
  struct Candidate {
    double iou;
    std::size_t p;
    std::size_t g;
  };
  std::vector<MaskSummary> gt_summaries;
  gt_summaries.reserve(instances.size());
  for (const auto& g : instances) gt_summaries.push_back(summarize(g.mask));

  std::vector<Candidate> candidates;
  for (std::size_t p = 0; p < proposals.size(); ++p) {
    const MaskSummary sp = summarize(proposals[p].mask);
    for (std::size_t g = 0; g < instances.size(); ++g) {
      if (!sp.bbox.overlaps(gt_summaries[g].bbox)) continue;
      const double v = iou(proposals[p].mask, instances[g].mask);
      if (v >= min_iou && v > 0.0) candidates.push_back({v, p, g});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              return std::tie(b.iou, a.p, a.g) < std::tie(a.iou, b.p, b.g);
            });
  std::vector<std::optional<std::size_t>> matching(proposals.size());
  std::vector<bool> gt_taken(instances.size(), false);
  for (const auto& c : candidates) {
    if (matching[c.p] || gt_taken[c.g]) continue;
    matching[c.p] = c.g;
    gt_taken[c.g] = true;
  }
  return matching;
}

bool ranks_before(const InstanceProposal& a, std::int64_t area_a,
                  const InstanceProposal& b, std::int64_t area_b) noexcept {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  if (area_a != area_b) return area_a > area_b;
  return a.proposal_id < b.proposal_id;
}

const std::array<std::string_view, kNumPairFeatures>& pair_feature_names() {
  static const std::array<std::string_view, kNumPairFeatures> names = {
      "ratio_i",       "ratio_j",          "iou",
      "conf_diff",     "log_area_ratio",   "same_class",
      "dcentroid_x",   "dcentroid_y",      "log_bbox_area_ratio"};
  return names;
}

IntersectionStats swap_roles(const IntersectionStats& s) noexcept {
  IntersectionStats t = s;
  std::swap(t.area_i, t.area_j);
  std::swap(t.ratio_i, t.ratio_j);
  return t;
}

PairFeatures extract_pair_features(const PairQuery& q) {
  if (q.summary_i.area <= 0 || q.summary_j.area <= 0 ||
      q.summary_i.bbox.area() <= 0 || q.summary_j.bbox.area() <= 0) {
    throw DataError("pair features need non-empty masks (proposals " +
                    std::to_string(q.i.proposal_id) + ", " +
                    std::to_string(q.j.proposal_id) + ")");
  }
  const ImageGrid& grid = q.i.mask.grid();
  const auto& s = q.stats;
  const double uni = static_cast<double>(s.area_i + s.area_j - s.area_inter);
  PairFeatures f{};
  f[0] = s.ratio_i;
  f[1] = s.ratio_j;
  f[2] = uni > 0 ? static_cast<double>(s.area_inter) / uni : 0.0;
  f[3] = q.i.confidence - q.j.confidence;
  f[4] = std::log(static_cast<double>(q.summary_i.area)) -
         std::log(static_cast<double>(q.summary_j.area));
  f[5] = q.i.class_id == q.j.class_id ? 1.0 : 0.0;
  f[6] = (q.summary_i.centroid_x - q.summary_j.centroid_x) / grid.width();
  f[7] = (q.summary_i.centroid_y - q.summary_j.centroid_y) / grid.height();
  f[8] = std::log(static_cast<double>(q.summary_i.bbox.area())) -
         std::log(static_cast<double>(q.summary_j.bbox.area()));
  return f;
}

PairFeatures extract_pair_features(const InstanceProposal& i,
                                   const InstanceProposal& j,
                                   const IntersectionStats& stats) {
  const MaskSummary si = summarize(i.mask);
  const MaskSummary sj = summarize(j.mask);
  return extract_pair_features(PairQuery{i, j, si, sj, stats});
}

std::vector<TrainingPair> sample_training_pairs(
    const Scene& scene, const OcclusionMatrix& gt_occlusion, double rho,
    std::size_t max_pairs_per_image, std::uint64_t seed) {
  check_rho(rho);
  if (!scene.gt_instances) {
    throw DataError("scene " + std::to_string(scene.image_id) +
                    " is unsupported for training: no ground truth instances");
  }
  if (max_pairs_per_image % 2 != 0) {
    throw UsageError("pairs per image must be even, got " +
                     std::to_string(max_pairs_per_image));
  }
  const auto& gt = *scene.gt_instances;
  if (gt_occlusion.size() != gt.size()) {
    throw DataError("occlusion matrix size " +
                    std::to_string(gt_occlusion.size()) +
                    " does not match the " + std::to_string(gt.size()) +
                    " gt instances of scene " + std::to_string(scene.image_id));
  }
  const auto& proposals = scene.proposals;
  const auto matching = match_proposals(proposals, gt);
  std::vector<MaskSummary> summaries;
  summaries.reserve(proposals.size());
  for (const auto& p : proposals) summaries.push_back(summarize(p.mask));

  struct Candidate {
    std::size_t a;
    std::size_t b;
    int label;
  };
  std::vector<Candidate> candidates;
  for (std::size_t a = 0; a < proposals.size(); ++a) {
    if (!matching[a]) continue;
    for (std::size_t b = a + 1; b < proposals.size(); ++b) {
      if (!matching[b]) continue;
      const int relation = gt_occlusion.at(*matching[a], *matching[b]);
      if (relation < 0) continue;
      if (!summaries[a].bbox.overlaps(summaries[b].bbox)) continue;
      const auto stats = intersection_stats(
          summaries[a].area, summaries[b].area,
          intersection_area(proposals[a].mask, proposals[b].mask));
      if (stats.area_inter == 0 || !stats.appreciable(rho)) continue;
      candidates.push_back({a, b, relation});
    }
  }
  const std::size_t keep = max_pairs_per_image / 2;
  if (candidates.size() > keep) {
    Rng rng(seed);
    rng.shuffle(candidates);
    candidates.resize(keep);
    std::sort(candidates.begin(), candidates.end(),
              [](const Candidate& x, const Candidate& y) {
                return std::tie(x.a, x.b) < std::tie(y.a, y.b);
              });
  }

  std::vector<TrainingPair> out;
  out.reserve(candidates.size() * 2);
  for (const auto& c : candidates) {
    const auto& pa = proposals[c.a];
    const auto& pb = proposals[c.b];
    const auto stats = intersection_stats(pa.mask, pb.mask);
    const auto swapped = swap_roles(stats);
    const PairQuery q{pa, pb, summaries[c.a], summaries[c.b], stats};
    out.push_back({extract_pair_features(q), c.label, scene.image_id,
                   pa.proposal_id, pb.proposal_id});
    out.push_back({extract_pair_features(q.swapped(swapped)), 1 - c.label,
                   scene.image_id, pb.proposal_id, pa.proposal_id});
  }
  return out;
}

double PairClassifierModel::logit(const PairFeatures& f) const noexcept {
  double z = bias;
  for (std::size_t k = 0; k < kNumPairFeatures; ++k) z += weights[k] * f[k];
  return z;
}

double mean_bce(const PairClassifierModel& model,
                std::span<const TrainingPair> pairs) {
  if (pairs.empty()) throw DataError("mean BCE of an empty pair set");
  double total = 0.0;
  for (const auto& p : pairs) {
    const double z = model.logit(p.features);
    total += softplus(z) - p.label * z;
  }
  return total / static_cast<double>(pairs.size());
}

double training_accuracy(const PairClassifierModel& model,
                         std::span<const TrainingPair> pairs) {
  if (pairs.empty()) throw DataError("accuracy of an empty pair set");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    const int predicted = model.logit(p.features) > 0.0 ? 1 : 0;
    if (predicted == p.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

PairClassifierModel train_occlusion_classifier(
    std::span<const TrainingPair> pairs, const TrainConfig& config) {
  if (pairs.empty()) throw DataError("cannot train on an empty pair list");
  if (config.epochs < 0) throw UsageError("epochs must be >= 0");
  if (!(config.learning_rate > 0.0) || !std::isfinite(config.learning_rate)) {
    throw UsageError("learning rate must be positive and finite");
  }
  using Key = std::tuple<std::int64_t, std::int32_t, std::int32_t, int>;
  std::map<Key, std::size_t> counts;
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1) {
      throw DataError("training label must be 0 or 1, got " +
                      std::to_string(p.label));
    }
    for (double v : p.features) {
      if (!std::isfinite(v)) {
        throw DataError("non-finite feature in pair (" +
                        std::to_string(p.proposal_i) + ", " +
                        std::to_string(p.proposal_j) + ") of image " +
                        std::to_string(p.image_id));
      }
    }
    ++counts[{p.image_id, p.proposal_i, p.proposal_j, p.label}];
  }
  for (const auto& [key, n] : counts) {
    const auto& [image, i, j, label] = key;
    auto it = counts.find({image, j, i, 1 - label});
    if (it == counts.end() || it->second != n) {
      throw DataError("training pairs break the inversion invariant at (" +
                      std::to_string(i) + ", " + std::to_string(j) +
                      ") of image " + std::to_string(image));
    }
  }

  PairClassifierModel model;
  model.training.seed = config.seed;
  model.training.epochs = config.epochs;
  model.training.learning_rate = config.learning_rate;
  model.training.n_pairs = pairs.size();
  model.training.loss_curve.push_back(mean_bce(model, pairs));

  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    PairFeatures grad{};
    double grad_bias = 0.0;
    for (const auto& p : pairs) {
      const double err = sigmoid(model.logit(p.features)) - p.label;
      for (std::size_t k = 0; k < kNumPairFeatures; ++k) {
        grad[k] += err * p.features[k];
      }
      grad_bias += err;
    }
    for (std::size_t k = 0; k < kNumPairFeatures; ++k) {
      model.weights[k] -= config.learning_rate * grad[k] * inv_n;
    }
    model.bias -= config.learning_rate * grad_bias * inv_n;
    model.training.loss_curve.push_back(mean_bce(model, pairs));
  }
  return model;
}

bool predict_occlude(const PairClassifierModel& model, const PairQuery& q) {
  const IntersectionStats swapped_stats = swap_roles(q.stats);
  const double forward = model.logit(extract_pair_features(q));
  const double backward =
      model.logit(extract_pair_features(q.swapped(swapped_stats)));
  const double score = forward - backward;
  if (score > 0.0) return true;
  if (score < 0.0) return false;
  return ranks_before(q.i, q.summary_i.area, q.j, q.summary_j.area);
}

bool predict_occlude(const PairClassifierModel& model,
                     const InstanceProposal& i, const InstanceProposal& j) {
  const MaskSummary si = summarize(i.mask);
  const MaskSummary sj = summarize(j.mask);
  const IntersectionStats stats = intersection_stats(i.mask, j.mask);
  return predict_occlude(model, PairQuery{i, j, si, sj, stats});
}

bool ConfidencePredictor::occludes(const PairQuery& q) const {
  return ranks_before(q.i, q.summary_i.area, q.j, q.summary_j.area);
}

OraclePredictor::OraclePredictor(
    OcclusionMatrix matrix,
    std::unordered_map<std::int32_t, std::size_t> proposal_to_gt)
    : matrix_(std::move(matrix)), proposal_to_gt_(std::move(proposal_to_gt)) {
  for (const auto& [proposal, gt] : proposal_to_gt_) {
    if (gt >= matrix_.size()) {
      throw DataError("proposal " + std::to_string(proposal) +
                      " maps to instance index " + std::to_string(gt) +
                      " outside the occlusion matrix of size " +
                      std::to_string(matrix_.size()));
    }
  }
}

bool OraclePredictor::occludes(const PairQuery& q) const {
  auto gi = proposal_to_gt_.find(q.i.proposal_id);
  auto gj = proposal_to_gt_.find(q.j.proposal_id);
  if (gi != proposal_to_gt_.end() && gj != proposal_to_gt_.end() &&
      gi->second != gj->second) {
    const int entry = matrix_.at(gi->second, gj->second);
    if (entry >= 0) return entry == 1;
  }
  return ranks_before(q.i, q.summary_i.area, q.j, q.summary_j.area);
}

OraclePredictor oracle_predictor(
    const OcclusionMatrix& gt_occlusion,
    const std::vector<InstanceProposal>& proposals,
    const std::vector<std::optional<std::size_t>>& matching) {
  if (matching.size() != proposals.size()) {
    throw DataError("matching size does not match the proposal count");
  }
  std::unordered_map<std::int32_t, std::size_t> map;
  for (std::size_t k = 0; k < proposals.size(); ++k) {
    if (matching[k]) map.emplace(proposals[k].proposal_id, *matching[k]);
  }
  return OraclePredictor(gt_occlusion, std::move(map));
}

AccuracyReport& AccuracyReport::operator+=(const AccuracyReport& o) {
  total += o.total;
  correct += o.correct;
  inter_total += o.inter_total;
  inter_correct += o.inter_correct;
  intra_total += o.intra_total;
  intra_correct += o.intra_correct;
  unmatched += o.unmatched;
  return *this;
}

namespace {
double ratio_or_throw(std::size_t num, std::size_t den, const char* what) {
  if (den == 0) {
    throw DataError(std::string("accuracy undefined: no defined ") + what +
                    " pairs");
  }
  return static_cast<double>(num) / static_cast<double>(den);
}
}  // namespace

double AccuracyReport::accuracy() const {
  return ratio_or_throw(correct, total, "ground truth");
}
double AccuracyReport::inter_accuracy() const {
  return ratio_or_throw(inter_correct, inter_total, "inter-class");
}
double AccuracyReport::intra_accuracy() const {
  return ratio_or_throw(intra_correct, intra_total, "intra-class");
}

AccuracyReport evaluate_predictor(const OcclusionPredictor& predictor,
                                  const Scene& scene,
                                  const OcclusionMatrix& gt_occlusion) {
  if (!scene.gt_instances) {
    throw DataError("scene " + std::to_string(scene.image_id) +
                    " has no ground truth instances");
  }
  const auto& gt = *scene.gt_instances;
  if (gt_occlusion.size() != gt.size()) {
    throw DataError("occlusion matrix size does not match gt instance count");
  }
  const auto matching = match_proposals(scene.proposals, gt);
  std::vector<std::optional<std::size_t>> proposal_of(gt.size());
  for (std::size_t p = 0; p < matching.size(); ++p) {
    if (matching[p]) proposal_of[*matching[p]] = p;
  }
  std::vector<MaskSummary> summaries;
  summaries.reserve(scene.proposals.size());
  for (const auto& p : scene.proposals) summaries.push_back(summarize(p.mask));

  AccuracyReport report;
  for (std::size_t a = 0; a < gt.size(); ++a) {
    for (std::size_t b = 0; b < gt.size(); ++b) {
      if (a == b) continue;
      const int entry = gt_occlusion.at(a, b);
      if (entry < 0) continue;
      if (!proposal_of[a] || !proposal_of[b]) {
        ++report.unmatched;
        continue;
      }
      const std::size_t pa = *proposal_of[a];
      const std::size_t pb = *proposal_of[b];
      const auto stats =
          intersection_stats(scene.proposals[pa].mask, scene.proposals[pb].mask);
      const PairQuery q{scene.proposals[pa], scene.proposals[pb], summaries[pa],
                        summaries[pb], stats};
      const bool ok = predictor.occludes(q) == (entry == 1);
      const bool intra = gt[a].class_id == gt[b].class_id;
      ++report.total;
      if (ok) ++report.correct;
      if (intra) {
        ++report.intra_total;
        if (ok) ++report.intra_correct;
      } else {
        ++report.inter_total;
        if (ok) ++report.inter_correct;
      }
    }
  }
  return report;
}

}  // namespace ocfusion
