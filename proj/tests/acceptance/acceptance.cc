// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "cli.h"
#include "ocfusion/error.h"
#include "ocfusion/fusion.h"
#include "ocfusion/io.h"
#include "ocfusion/metrics.h"
#include "ocfusion/occlusion.h"
#include "ocfusion/rng.h"
#include "ocfusion/scenegen.h"
#include "pipeline.h"

namespace {

using namespace ocfusion;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag)
      : path_(fs::temp_directory_path() /
              ("ocfusion_acceptance_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

// Runs the command-line tool in-process; throws on a nonzero exit.
std::string cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ocfusion");
  std::ostringstream out, err;
  const int code = tools::run(args, out, err);
  if (code != 0) {
    throw std::runtime_error("ocfusion " + args[1] + " exited " + std::to_string(code) +
                             ": " + err.str());
  }
  return out.str();
}

OraclePredictor oracle_for(const Scene& s, double rho) {
  return oracle_predictor(derive_gt_occlusion(s, rho), s.proposals,
                          match_proposals(s.proposals, *s.gt_instances));
}

// 1 -----------------------------------------------------------------------------
Verdict oracle_round_trip() {
  ScratchDir dir("c1");
  const auto t0 = Clock::now();
  cli({"gen-scenes", "--out", dir / "scenes", "--n", "200", "--seed", "1"});
  cli({"fuse", "--scenes", dir / "scenes", "--strategy", "ocfusion", "--predictor", "oracle",
       "--out", dir / "fused"});
  cli({"eval", "--pred", dir / "fused", "--gt", dir / "scenes", "--out", dir / "results.json"});
  const double elapsed = seconds_since(t0);

  std::size_t exact = 0, total = 0;
  for (const auto& path : list_scene_files(dir / "scenes")) {
    const Scene s = read_scene(path);
    const std::string base = dir / "fused" + "/" + path.stem().string();
    const auto fused = import_panoptic_png(base + ".png", base + ".segments.json");
    ++total;
    exact += same_partition(fused, *s.gt_panoptic);
  }
  const std::string results = read_text_file(dir / "results.json");
  const auto at = results.find("\"pq\":");
  const double pq = std::strtod(results.c_str() + at + 5, nullptr);
  return {total == 200 && exact == total && pq == 1.0 && elapsed < 60.0,
          fmt("%zu/%zu scenes pixel-exact, corpus PQ %.6f, gen+fuse+eval %.1f s (< 60 s)",
              exact, total, pq, elapsed)};
}

// 2 -----------------------------------------------------------------------------
Verdict directional_improvement() {
  SceneGenConfig cfg;
  cfg.confidence_model = ConfidenceModel::kAdversarial;
  cfg.perturbation.morph_radius = 1;
  cfg.perturbation.label_noise = 0.01;
  const auto scenes = generate_scenes(cfg, 200, 7);
  const FusionParams params;
  std::vector<PQStats> occ, base;
  std::size_t better = 0;
  for (const auto& s : scenes) {
    const auto oracle = oracle_for(s, params.occlusion_ratio);
    occ.push_back(compute_pq(
        fuse_with_occlusion(s.proposals, s.semantic, s.catalog, params, oracle).panoptic,
        *s.gt_panoptic, s.catalog));
    base.push_back(compute_pq(
        fuse_by_confidence(s.proposals, s.semantic, s.catalog, params).panoptic,
        *s.gt_panoptic, s.catalog));
    better += occ.back().things.pq > base.back().things.pq;
  }
  const auto& cat = scenes.front().catalog;
  const auto a = aggregate_pq(occ, cat), b = aggregate_pq(base, cat);
  const double d_th = 100 * (a.things.pq - b.things.pq);
  const double d_st = 100 * (a.stuff.pq - b.stuff.pq);
  const double frac = static_cast<double>(better) / scenes.size();
  return {frac >= 0.95 && d_th >= 3.0 && std::abs(d_st) <= 0.1,
          fmt("PQ^Th better on %zu/%zu scenes (%.1f%% >= 95%%), PQ^Th %.2f -> %.2f "
              "(%+.2f >= +3), PQ^St delta %+.3f (|d| <= 0.1)",
              better, scenes.size(), 100 * frac, 100 * b.things.pq, 100 * a.things.pq, d_th,
              d_st)};
}

// 3 -----------------------------------------------------------------------------
Verdict gt_derivation_equivalence() {
  const ShapeFamily shapes[] = {ShapeFamily::kMixed, ShapeFamily::kRectangle,
                                ShapeFamily::kEllipse, ShapeFamily::kConvexPolygon};
  const double rho = 0.2;
  std::size_t checked = 0, mismatches = 0;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    SceneGenConfig cfg;
    cfg.shape = shapes[k % 4];
    cfg.thing_classes = 1 + static_cast<std::int32_t>(k % 3);
    cfg.max_instances = 6 + static_cast<std::int32_t>(k % 5);
    const Scene s = generate_scene(cfg, derive_seed(3, k));
    const auto& gt = *s.gt_instances;
    const auto m = derive_gt_occlusion(s, rho);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      for (std::size_t j = 0; j < gt.size(); ++j) {
        if (i == j) continue;
        const auto st = intersection_stats(gt[i].mask, gt[j].mask);
        if (st.area_inter > 0 && st.appreciable(rho)) {
          ++checked;
          const int expected = gt[i].z_rank > gt[j].z_rank ? 1 : 0;
          mismatches += m.at(i, j) != expected;
        } else {
          mismatches += m.at(i, j) != -1;
        }
      }
    }
  }
  return {mismatches == 0 && checked > 0,
          fmt("1000 scenes, %zu appreciably-overlapping ordered pairs, %zu mismatches", checked,
              mismatches)};
}

// 4 -----------------------------------------------------------------------------
Verdict predictor_consistency() {
  Rng rng(4);
  std::size_t pairs = 0, violations = 0;
  for (int model_k = 0; model_k < 200; ++model_k) {
    PairClassifierModel model;
    const double scale = std::pow(10.0, rng.uniform(-3, 3));
    for (auto& w : model.weights) w = scale * rng.normal();
    if (model_k % 10 == 0) model.weights = {};
    model.bias = rng.normal();
    const ImageGrid grid(static_cast<std::int32_t>(rng.uniform_int(8, 64)),
                         static_cast<std::int32_t>(rng.uniform_int(8, 64)));
    auto random_proposal = [&](std::int32_t id) {
      const auto w = static_cast<std::int32_t>(rng.uniform_int(1, grid.width()));
      const auto h = static_cast<std::int32_t>(rng.uniform_int(1, grid.height()));
      const auto x = static_cast<std::int32_t>(rng.uniform_int(0, grid.width() - w));
      const auto y = static_cast<std::int32_t>(rng.uniform_int(0, grid.height() - h));
      // Coarse confidences make exact ties common.
      const double conf = std::round(rng.uniform() * 4) / 4;
      return InstanceProposal{id, static_cast<ClassId>(rng.uniform_int(1, 3)), conf,
                              BinaryMask::rectangle(grid, x, y, w, h)};
    };
    for (int t = 0; t < 60; ++t) {
      const auto a = random_proposal(1);
      auto b = rng.bernoulli(0.1) ? a : random_proposal(2);
      b.proposal_id = 2;
      ++pairs;
      violations += predict_occlude(model, a, b) == predict_occlude(model, b, a);
    }
  }
  return {violations == 0 && pairs >= 10000,
          fmt("%zu random pairs over 200 random models, %zu violations", pairs, violations)};
}

// 5 -----------------------------------------------------------------------------
Verdict classifier_accuracy() {
  const SceneGenConfig cfg;  // random confidences
  const double rho = 0.2;
  const auto scenes = generate_scenes(cfg, 500, 11);
  std::vector<TrainingPair> train;
  for (std::size_t k = 0; k < 400; ++k) {
    const auto p = sample_training_pairs(scenes[k], derive_gt_occlusion(scenes[k], rho), rho,
                                         128, k);
    train.insert(train.end(), p.begin(), p.end());
  }
  const ClassifierPredictor predictor(train_occlusion_classifier(train));
  AccuracyReport held_out;
  for (std::size_t k = 400; k < 500; ++k) {
    held_out += evaluate_predictor(predictor, scenes[k], derive_gt_occlusion(scenes[k], rho));
  }
  const double acc = held_out.accuracy();
  return {acc >= 0.85,
          fmt("trained on %zu pairs from 400 scenes; held-out accuracy %.2f%% on %zu pairs "
              "(inter %.2f%%, intra %.2f%%) >= 85%%",
              train.size(), 100 * acc, held_out.total, 100 * held_out.inter_accuracy(),
              100 * held_out.intra_accuracy())};
}

// 6 -----------------------------------------------------------------------------
Verdict pq_fixtures() {
  const ClassCatalog cat({{1, "a", true}, {2, "b", false}});
  auto row = [](std::vector<SegmentId> px, std::vector<SegmentInfo> segs) {
    PanopticMap m(ImageGrid(static_cast<std::int32_t>(px.size()), 1));
    m.pixel_segments = std::move(px);
    m.segments = std::move(segs);
    return m;
  };
  const SegmentInfo t1{1, 1, true, 1}, s2{2, 2, false, std::nullopt};

  const auto id_map = row({1, 1, 2, 2, 0}, {t1, s2});
  const double identity = compute_pq(id_map, id_map, cat).all.pq;

  // Left column class 1, right column class 2; prediction all class 1.
  PanopticMap gt(ImageGrid(2, 2)), pred(ImageGrid(2, 2));
  gt.pixel_segments = {1, 2, 1, 2};
  gt.segments = {t1, s2};
  pred.pixel_segments = {1, 1, 1, 1};
  pred.segments = {t1};
  const double half = compute_pq(pred, gt, cat).per_class.at(1).pq();

  const auto gt3 = row({1, 1, 1, 1, 1, 2, 2, 2, 2, 2}, {t1, s2});
  const auto pred3 = row({1, 1, 1, 1, 0, 0, 3, 3, 0, 0}, {t1, {3, 1, true, 3}});
  const double fp = compute_pq(pred3, gt3, cat).per_class.at(1).pq();

  return {identity == 1.0 && half == 0.0 && std::abs(fp - 0.5333333) <= 1e-6,
          fmt("identity %.6f, IoU=0.5 class PQ %.6f, 0.8 IoU + 1 FP %.6f", identity, half, fp)};
}

// 7 -----------------------------------------------------------------------------
Verdict ablation_chain() {
  SceneGenConfig cfg;
  cfg.confidence_model = ConfidenceModel::kAdversarial;
  cfg.thing_classes = 2;
  cfg.perturbation.morph_radius = 1;
  const auto scenes = generate_scenes(cfg, 200, 5);
  FusionParams all, inter;
  inter.occlusion_scope = OcclusionScope::kInterClassOnly;
  std::vector<PQStats> pa, pi, pb;
  std::size_t strict = 0, broken = 0, intra_pairs = 0, overlap_pairs = 0;
  for (const auto& s : scenes) {
    const auto oracle = oracle_for(s, all.occlusion_ratio);
    const auto m = derive_gt_occlusion(s, all.occlusion_ratio);
    const auto& gt = *s.gt_instances;
    for (std::size_t i = 0; i < gt.size(); ++i) {
      for (std::size_t j = i + 1; j < gt.size(); ++j) {
        if (!m.defined(i, j)) continue;
        ++overlap_pairs;
        intra_pairs += gt[i].class_id == gt[j].class_id;
      }
    }
    auto score = [&](const FusionResult& r) {
      return compute_pq(r.panoptic, *s.gt_panoptic, s.catalog);
    };
    pa.push_back(score(fuse_with_occlusion(s.proposals, s.semantic, s.catalog, all, oracle)));
    pi.push_back(score(fuse_with_occlusion(s.proposals, s.semantic, s.catalog, inter, oracle)));
    pb.push_back(score(fuse_by_confidence(s.proposals, s.semantic, s.catalog, all)));
    const double x = pa.back().things.pq, y = pi.back().things.pq, z = pb.back().things.pq;
    const bool chain = x >= y && y >= z;
    broken += !chain;
    strict += chain && x > z;
  }
  const auto& cat = scenes.front().catalog;
  const double a = aggregate_pq(pa, cat).things.pq, i = aggregate_pq(pi, cat).things.pq,
               b = aggregate_pq(pb, cat).things.pq;
  const double frac = static_cast<double>(strict) / scenes.size();
  return {a >= i && i >= b && frac >= 0.8,
          fmt("PQ^Th all %.2f >= inter %.2f >= baseline %.2f; chain strict on %zu/%zu scenes "
              "(%.1f%% >= 80%%), %zu scenes break the chain; %zu/%zu related pairs intra-class",
              100 * a, 100 * i, 100 * b, strict, scenes.size(), 100 * frac, broken, intra_pairs,
              overlap_pairs)};
}

// 8 -----------------------------------------------------------------------------
Verdict performance_overhead() {
  SceneGenConfig cfg;
  cfg.width = 640;
  cfg.height = 480;
  cfg.min_instances = 30;
  cfg.max_instances = 70;
  cfg.min_extent = 0.05;
  cfg.max_extent = 0.2;
  cfg.perturbation.morph_radius = 1;
  cfg.perturbation.spurious_rate = 0.3;
  std::vector<tools::SceneEntry> entries;
  std::size_t max_props = 0;
  for (auto& s : generate_scenes(cfg, 30, 3)) {
    max_props = std::max(max_props, s.proposals.size());
    entries.push_back({"", "", std::move(s)});
  }
  const auto r =
      tools::bench_fusion(entries, FusionParams{}, tools::PredictorKind::kOracle, nullptr, 5);
  return {max_props <= 100 && r.ratio() <= 1.10,
          fmt("30 scenes 640x480, <= %zu proposals each; confidence %.3f ms, ocfusion %.3f ms "
              "per scene, ratio %.3f (<= 1.10), %zu queries",
              max_props, r.baseline_ms, r.occlusion_ms, r.ratio(), r.queries)};
}

// 9 -----------------------------------------------------------------------------
std::string sweep_once(const ScratchDir& dir, const std::string& tag,
                       std::string& all_outputs) {
  const double taus[] = {0.4, 0.5, 0.6};
  const char* rhos[] = {"0.05", "0.1", "0.2"};
  std::string table = fmt("%-8s|", "tau\\rho");
  for (const char* r : rhos) table += fmt(" %8s", r);
  table += "\n";
  for (double tau : taus) {
    table += fmt("%-8.1f|", tau);
    for (const char* rho : rhos) {
      const std::string out = dir / (tag + "_fused");
      const std::string res = dir / (tag + "_results.json");
      cli({"fuse", "--scenes", dir / "scenes", "--strategy", "ocfusion", "--predictor",
           "oracle", "--tau", fmt("%.1f", tau), "--rho", rho, "--trace", "--out", out});
      cli({"eval", "--pred", out, "--gt", dir / "scenes", "--out", res});
      const std::string json = read_text_file(res);
      all_outputs += json + read_text_file(dir / (tag + "_results.txt"));
      for (const auto& f : list_scene_files(dir / "scenes")) {
        const std::string base = out + "/" + f.stem().string();
        all_outputs += read_text_file(base + ".png") + read_text_file(base + ".trace.json");
      }
      fs::remove_all(out);
      const auto at = json.find("\"pq\":");
      table += fmt(" %8.3f", 100 * std::strtod(json.c_str() + at + 5, nullptr));
    }
    table += "\n";
  }
  return table;
}

Verdict sweep_determinism() {
  ScratchDir dir("c9");
  SceneGenConfig cfg;
  cfg.confidence_model = ConfidenceModel::kAdversarial;
  cfg.perturbation.morph_radius = 2;
  cfg.perturbation.spurious_rate = 0.2;
  cfg.perturbation.label_noise = 0.02;
  write_text_file(dir / "config.json", config_to_json(cfg));
  cli({"gen-scenes", "--out", dir / "scenes", "--n", "30", "--config", dir / "config.json",
       "--seed", "9"});
  std::string bytes_a, bytes_b;
  const std::string a = sweep_once(dir, "a", bytes_a);
  const std::string b = sweep_once(dir, "b", bytes_b);
  std::printf("%s", a.c_str());
  const bool same = a == b && bytes_a == bytes_b;
  return {same, fmt("3x3 PQ table over 30 scenes; two runs %s (%zu output bytes compared)",
                    same ? "byte-identical" : "DIFFER", bytes_a.size())};
}

// 10 ----------------------------------------------------------------------------
Verdict format_round_trips() {
  ScratchDir dir("c10");
  Rng rng(10);
  std::size_t json_ok = 0, png_ok = 0;
  const int n = 100;
  for (int k = 0; k < n; ++k) {
    SceneGenConfig cfg;
    cfg.width = static_cast<std::int32_t>(rng.uniform_int(96, 320));
    cfg.height = static_cast<std::int32_t>(rng.uniform_int(96, 240));
    cfg.min_stuff_area = 512;
    cfg.confidence_model = static_cast<ConfidenceModel>(rng.uniform_int(0, 2));
    cfg.perturbation.morph_radius = static_cast<std::int32_t>(rng.uniform_int(0, 3));
    cfg.perturbation.dropout = rng.uniform(0, 0.2);
    cfg.perturbation.spurious_rate = rng.uniform(0, 0.5);
    cfg.perturbation.label_noise = rng.uniform(0, 0.05);
    const Scene s = generate_scene(cfg, rng.next(), k + 1);
    write_scene(dir / "scene.json", s);
    const Scene back = read_scene(dir / "scene.json");
    json_ok += back == s && scene_to_json(back) == read_text_file(dir / "scene.json");

    const auto fused = fuse_by_confidence(s.proposals, s.semantic, s.catalog, {}).panoptic;
    bool png = true;
    for (const auto* map : {&fused, &*s.gt_panoptic}) {
      export_panoptic_png(*map, dir / "p.png", dir / "p.json");
      png = png && import_panoptic_png(dir / "p.png", dir / "p.json") == *map;
    }
    png_ok += png;
  }
  const auto c = encode_segment_id(70000);
  const bool fixture = c[0] == 112 && c[1] == 17 && c[2] == 1 &&
                       decode_segment_id(112, 17, 1) == 70000;
  return {json_ok == n && png_ok == n && fixture,
          fmt("scene JSON lossless %zu/%d, panoptic PNG lossless %zu/%d, "
              "70000 -> (%d,%d,%d)",
              json_ok, n, png_ok, n, c[0], c[1], c[2])};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> fn;
  };
  const std::vector<Criterion> criteria{
      {1, "oracle round-trip", oracle_round_trip},
      {2, "directional improvement", directional_improvement},
      {3, "gt derivation equals z-order", gt_derivation_equivalence},
      {4, "predictor consistency", predictor_consistency},
      {5, "trained classifier accuracy", classifier_accuracy},
      {6, "PQ unit fixtures", pq_fixtures},
      {7, "ablation switch", ablation_chain},
      {8, "performance overhead", performance_overhead},
      {9, "hyperparameter sweep", sweep_determinism},
      {10, "format round-trips", format_round_trips},
  };
  std::set<int> wanted;
  for (int k = 1; k < argc; ++k) wanted.insert(std::atoi(argv[k]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = Clock::now();
    Verdict v;
    try {
      v = c.fn();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("%s  %2d  %-30s %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", c.id, c.name,
                v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
