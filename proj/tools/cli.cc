#include "cli.h"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "ocfusion/error.h"
#include "ocfusion/io.h"
#include "ocfusion/metrics.h"
#include "ocfusion/rng.h"
#include "ocfusion/scenegen.h"
#include "pipeline.h"

namespace ocfusion::tools {

namespace fs = std::filesystem;

namespace {

// Adds `context` to an error while keeping its exit code.
template <typename Fn>
auto in_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), context + ": " + e.what());
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw DataError("cannot create directory " + dir.string());
  }
}

std::optional<PairClassifierModel> load_model(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return model_from_json(read_text_file(path), path);
}

// Fusion thresholds: a profile supplies the defaults and explicit flags
// override it. The option defaults shown by --help are the COCO values.
struct FusionFlags {
  std::string profile = "coco";
  double tau = 0.5;
  double rho = 0.2;
  double cmin = 0.5;
  std::int64_t min_stuff_area = 4096;
  std::string scope = "all";
  std::string skip = "overlap";
  CLI::Option* o_tau = nullptr;
  CLI::Option* o_rho = nullptr;
  CLI::Option* o_cmin = nullptr;
  CLI::Option* o_min_stuff = nullptr;

  void add_to(CLI::App* app) {
    app->add_option("--profile", profile, "Threshold profile")
        ->check(CLI::IsMember({"coco", "cityscapes"}))
        ->capture_default_str();
    o_tau = app->add_option("--tau", tau, "Overlap threshold tau, in (0, 1)")
                ->capture_default_str();
    o_rho = app->add_option("--rho", rho,
                            "Minimum intersection ratio for occlusion, in (0, 1)")
                ->capture_default_str();
    o_cmin = app->add_option("--cmin", cmin, "Confidence floor, in [0, 1]")
                 ->capture_default_str();
    o_min_stuff = app->add_option("--min-stuff-area", min_stuff_area,
                                  "Minimum pixels for a stuff segment")
                      ->capture_default_str();
    app->add_option("--scope", scope, "Pairs eligible for occlusion queries")
        ->check(CLI::IsMember({"all", "inter"}))
        ->capture_default_str();
    app->add_option("--skip-convention", skip,
                    "overlap: skip when the occluded share exceeds tau; "
                    "remaining: skip when the kept share is at most tau")
        ->check(CLI::IsMember({"overlap", "remaining"}))
        ->capture_default_str();
  }

  FusionParams resolve() const {
    FusionParams p =
        profile == "cityscapes" ? FusionParams::cityscapes() : FusionParams::coco();
    if (o_tau->count() > 0) p.overlap_threshold = tau;
    if (o_rho->count() > 0) p.occlusion_ratio = rho;
    if (o_cmin->count() > 0) p.confidence_floor = cmin;
    if (o_min_stuff->count() > 0) p.min_stuff_area = min_stuff_area;
    p.occlusion_scope = parse_scope(scope);
    p.skip_convention = parse_skip_convention(skip);
    p.validate();
    return p;
  }
};

// ---------------------------------------------------------------------------

struct GenScenes {
  std::string out;
  std::size_t n = 100;
  std::string config;
  std::uint64_t seed = 0;
  int jobs = 1;

  void add_to(CLI::App* app) {
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--n", n, "Number of scenes")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--config", config, "Generator config (JSON)");
    app->add_option("--seed", seed, "Corpus seed")->capture_default_str();
    app->add_option("--jobs", jobs, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  int run(std::ostream& out_stream) const {
    SceneGenConfig cfg;
    if (!config.empty()) cfg = config_from_json(read_text_file(config), config);
    cfg.validate();
    ensure_dir(out);
    const CorpusManifest m = generate_corpus(cfg, n, seed, out, jobs);
    out_stream << "wrote " << m.scenes.size() << " scenes to " << out
               << " (manifest " << m.hash() << ")\n";
    return 0;
  }
};

struct DeriveOcc {
  std::string scenes;
  double rho = 0.2;
  std::string out;
  int jobs = 1;

  void add_to(CLI::App* app) {
    app->add_option("--scenes", scenes, "Scene directory")->required();
    app->add_option("--rho", rho, "Minimum intersection ratio, in (0, 1)")
        ->capture_default_str();
    app->add_option("--out", out, "Output directory")->required();
    app->add_option("--jobs", jobs, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  int run(std::ostream& out_stream) const {
    if (!(rho > 0.0 && rho < 1.0)) {
      throw UsageError("--rho must lie in (0, 1)");
    }
    const auto entries = load_scene_dir(scenes, jobs);
    ensure_dir(out);
    std::vector<std::string> docs(entries.size());
    std::vector<std::size_t> defined(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t k) {
      const SceneEntry& e = entries[k];
      in_context(e.path.string(), [&] {
        OcclusionFile f;
        f.image_id = e.scene.image_id;
        f.matrix = derive_gt_occlusion(e.scene, rho);
        for (const auto& g : *e.scene.gt_instances) {
          f.instance_ids.push_back(g.instance_id);
        }
        defined[k] = f.matrix.defined_pairs();
        docs[k] = occlusion_to_json(f);
      });
    });
    std::size_t total = 0;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      write_text_file(fs::path(out) / (entries[k].stem + ".occ.json"), docs[k]);
      total += defined[k];
    }
    out_stream << "derived " << entries.size() << " occlusion matrices ("
               << total << " related pairs) into " << out << "\n";
    return 0;
  }
};

// Occlusion file of `entry`, checked against its ground truth instances.
OcclusionFile load_occlusion(const fs::path& dir, const SceneEntry& entry) {
  const fs::path path = dir / (entry.stem + ".occ.json");
  OcclusionFile f = occlusion_from_json(read_text_file(path), path.string());
  const auto& gt = entry.scene.gt_instances;
  if (!gt) throw DataError(entry.path.string() + ": scene has no ground truth");
  bool ok = f.image_id == entry.scene.image_id && f.instance_ids.size() == gt->size();
  for (std::size_t k = 0; ok && k < gt->size(); ++k) {
    ok = f.instance_ids[k] == (*gt)[k].instance_id;
  }
  if (!ok) {
    throw DataError(path.string() + ": does not match the instances of " +
                    entry.path.string());
  }
  return f;
}

struct TrainOcc {
  std::string scenes;
  std::string occ;
  std::size_t pairs_per_image = 128;
  int epochs = TrainConfig{}.epochs;
  double lr = TrainConfig{}.learning_rate;
  std::uint64_t seed = 0;
  double rho = 0.2;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--scenes", scenes, "Scene directory")->required();
    app->add_option("--occ", occ, "Occlusion matrix directory")->required();
    app->add_option("--pairs-per-image", pairs_per_image,
                    "Ordered pairs sampled per image")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20))
        ->capture_default_str();
    app->add_option("--epochs", epochs, "Gradient descent epochs")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--lr", lr, "Learning rate")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--seed", seed, "Pair sampling seed")->capture_default_str();
    app->add_option("--rho", rho, "Minimum intersection ratio, in (0, 1)")
        ->capture_default_str();
    app->add_option("--out", out, "Output model file")->required();
  }

  int run(std::ostream& out_stream) const {
    if (!(rho > 0.0 && rho < 1.0)) {
      throw UsageError("--rho must lie in (0, 1)");
    }
    const auto entries = load_scene_dir(scenes);
    std::vector<TrainingPair> pairs;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const auto& e = entries[k];
      const OcclusionFile f = load_occlusion(occ, e);
      const auto p = in_context(e.path.string(), [&] {
        return sample_training_pairs(e.scene, f.matrix, rho, pairs_per_image,
                                     derive_seed(seed, k));
      });
      pairs.insert(pairs.end(), p.begin(), p.end());
    }
    const PairClassifierModel model =
        train_occlusion_classifier(pairs, {epochs, lr, seed});
    write_text_file(out, model_to_json(model));
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "trained on %zu pairs from %zu scenes: loss %.6f -> %.6f, "
                  "training accuracy %.4f\n",
                  pairs.size(), entries.size(),
                  model.training.loss_curve.front(),
                  model.training.loss_curve.back(),
                  training_accuracy(model, pairs));
    out_stream << buf;
    return 0;
  }
};

struct Fuse {
  std::string scenes;
  std::string strategy = "ocfusion";
  std::string predictor = "oracle";
  std::string model;
  FusionFlags fusion;
  std::string out;
  bool trace = false;
  int jobs = 1;

  void add_to(CLI::App* app) {
    app->add_option("--scenes", scenes, "Scene directory")->required();
    app->add_option("--strategy", strategy, "Fusion strategy")
        ->check(CLI::IsMember({"confidence", "ocfusion"}))
        ->capture_default_str();
    app->add_option("--predictor", predictor,
                    "Occlusion predictor for --strategy ocfusion")
        ->check(CLI::IsMember({"oracle", "classifier", "confidence"}))
        ->capture_default_str();
    app->add_option("--model", model, "Classifier model (JSON)");
    fusion.add_to(app);
    app->add_option("--out", out, "Output directory")->required();
    app->add_flag("--trace", trace, "Also write a per-scene fusion trace");
    app->add_option("--jobs", jobs, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  int run(std::ostream& out_stream) const {
    const FusionParams params = fusion.resolve();
    const Strategy strat = parse_strategy(strategy);
    const PredictorKind kind = parse_predictor(predictor);
    if (strat == Strategy::kOcclusion && kind == PredictorKind::kClassifier &&
        model.empty()) {
      throw UsageError("--predictor classifier needs --model");
    }
    const auto m = load_model(model);
    const auto entries = load_scene_dir(scenes, jobs);
    ensure_dir(out);

    std::vector<FusionResult> results(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t k) {
      const SceneEntry& e = entries[k];
      in_context(e.path.string(), [&] {
        std::unique_ptr<OcclusionPredictor> p;
        if (strat == Strategy::kOcclusion) {
          p = make_predictor(kind, e.scene, params.occlusion_ratio,
                             m ? &*m : nullptr);
        }
        results[k] = fuse_scene(e.scene, strat, params, p.get());
      });
    });

    TraceSummary summary;
    const std::string strategy_name =
        strat == Strategy::kConfidence ? "confidence" : "ocfusion/" + predictor;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const fs::path base = fs::path(out) / entries[k].stem;
      export_panoptic_png(results[k].panoptic, base.string() + ".png",
                          base.string() + ".segments.json");
      if (trace) {
        write_text_file(base.string() + ".trace.json",
                        trace_to_json(results[k].trace,
                                      entries[k].scene.image_id, strategy_name));
      }
      summary.add(results[k].trace);
    }
    out_stream << "fused " << entries.size() << " scenes with "
               << strategy_name << ": " << summary.kept << " of "
               << summary.proposals << " proposals kept, " << summary.queries
               << " occlusion queries\n";
    return 0;
  }
};

struct Eval {
  std::string pred;
  std::string gt;
  std::string out;
  int jobs = 1;

  void add_to(CLI::App* app) {
    app->add_option("--pred", pred, "Directory of fused PNG pairs")->required();
    app->add_option("--gt", gt, "Scene directory with ground truth")->required();
    app->add_option("--out", out,
                    "Results JSON; the text table goes next to it as .txt")
        ->required();
    app->add_option("--jobs", jobs, "Worker threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  }

  int run(std::ostream& out_stream) const {
    const auto entries = load_scene_dir(gt, jobs);
    const ClassCatalog& catalog = common_catalog(entries);
    std::vector<PQStats> stats(entries.size());
    std::vector<std::optional<TraceSummary>> traces(entries.size());
    parallel_for(entries.size(), jobs, [&](std::size_t k) {
      const SceneEntry& e = entries[k];
      if (!e.scene.gt_panoptic) {
        throw DataError(e.path.string() + ": scene has no ground truth");
      }
      const fs::path base = fs::path(pred) / e.stem;
      const std::string png = base.string() + ".png";
      const PanopticMap map =
          import_panoptic_png(png, base.string() + ".segments.json");
      const auto problems = validate(map, catalog);
      if (!problems.empty()) {
        throw DataError(png + ": " + problems.front());
      }
      stats[k] = in_context(png, [&] {
        return compute_pq(map, *e.scene.gt_panoptic, catalog);
      });
      const fs::path trace = base.string() + ".trace.json";
      if (fs::exists(trace)) {
        traces[k] = trace_summary_from_json(read_text_file(trace), trace.string());
      }
    });
    const PQStats total = aggregate_pq(stats, catalog);
    std::optional<TraceSummary> summary;
    if (std::all_of(traces.begin(), traces.end(),
                    [](const auto& t) { return t.has_value(); })) {
      summary.emplace();
      for (const auto& t : traces) {
        summary->scenes += t->scenes;
        summary->proposals += t->proposals;
        summary->kept += t->kept;
        summary->overlap_rejected += t->overlap_rejected;
        summary->below_confidence += t->below_confidence;
        summary->emptied += t->emptied;
        summary->queries += t->queries;
        summary->positive_answers += t->positive_answers;
        summary->reclaimed_pixels += t->reclaimed_pixels;
      }
    }
    fs::path table = fs::path(out).replace_extension(".txt");
    if (table == fs::path(out)) table = out + ".table.txt";
    write_results(total, catalog, entries.size(), summary, out, table);
    out_stream << format_pq_table(total);
    return 0;
  }
};

struct EvalOcc {
  std::string predictor = "classifier";
  std::string model;
  std::string scenes;
  std::string occ;

  void add_to(CLI::App* app) {
    app->add_option("--predictor", predictor, "Predictor to score")
        ->check(CLI::IsMember({"oracle", "classifier", "confidence"}))
        ->capture_default_str();
    app->add_option("--model", model, "Classifier model (JSON)");
    app->add_option("--scenes", scenes, "Scene directory")->required();
    app->add_option("--occ", occ, "Occlusion matrix directory")->required();
  }

  int run(std::ostream& out_stream) const {
    const PredictorKind kind = parse_predictor(predictor);
    if (kind == PredictorKind::kClassifier && model.empty()) {
      throw UsageError("--predictor classifier needs --model");
    }
    const auto m = load_model(model);
    const auto entries = load_scene_dir(scenes);
    AccuracyReport report;
    for (const auto& e : entries) {
      const OcclusionFile f = load_occlusion(occ, e);
      in_context(e.path.string(), [&] {
        const auto p = make_predictor(kind, e.scene, 0.2, m ? &*m : nullptr,
                                      &f.matrix);
        report += evaluate_predictor(*p, e.scene, f.matrix);
      });
    }
    auto line = [&](const char* name, std::size_t correct, std::size_t total) {
      char buf[128];
      if (total == 0) {
        std::snprintf(buf, sizeof buf, "%-12s n/a (no pairs)\n", name);
      } else {
        std::snprintf(buf, sizeof buf, "%-12s %.4f (%zu / %zu)\n", name,
                      static_cast<double>(correct) / static_cast<double>(total),
                      correct, total);
      }
      out_stream << buf;
    };
    out_stream << "predictor:   " << predictor << "\n";
    line("accuracy:", report.correct, report.total);
    line("inter-class:", report.inter_correct, report.inter_total);
    line("intra-class:", report.intra_correct, report.intra_total);
    out_stream << "unmatched:   " << report.unmatched << " ordered pairs\n";
    if (report.total == 0) throw DataError("no ground-truth pairs to score");
    return 0;
  }
};

struct Bench {
  std::string scenes;
  int repeat = 5;
  std::string predictor = "oracle";
  std::string model;
  FusionFlags fusion;

  void add_to(CLI::App* app) {
    app->add_option("--scenes", scenes, "Scene directory")->required();
    app->add_option("--repeat", repeat, "Timed runs per scene and strategy")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--predictor", predictor, "Occlusion predictor")
        ->check(CLI::IsMember({"oracle", "classifier", "confidence"}))
        ->capture_default_str();
    app->add_option("--model", model, "Classifier model (JSON)");
    fusion.add_to(app);
  }

  int run(std::ostream& out_stream) const {
    const FusionParams params = fusion.resolve();
    const PredictorKind kind = parse_predictor(predictor);
    if (kind == PredictorKind::kClassifier && model.empty()) {
      throw UsageError("--predictor classifier needs --model");
    }
    const auto m = load_model(model);
    const auto entries = load_scene_dir(scenes);
    const BenchResult r =
        bench_fusion(entries, params, kind, m ? &*m : nullptr, repeat);
    out_stream << format_bench(r);
    return 0;
  }
};

struct Render {
  std::string panoptic;
  std::string table;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("--panoptic", panoptic, "Panoptic id-map PNG")->required();
    app->add_option("--table", table,
                    "Segment table (default: <panoptic stem>.segments.json)");
    app->add_option("--out", out, "Output PNG")->required();
  }

  int run(std::ostream& out_stream) const {
    fs::path t = table;
    if (t.empty()) {
      t = fs::path(panoptic);
      t.replace_extension(".segments.json");
    }
    const PanopticMap map = import_panoptic_png(panoptic, t);
    render_panoptic_png(map, out);
    out_stream << "rendered " << map.segments.size() << " segments to " << out
               << "\n";
    return 0;
  }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Panoptic fusion with explicit occlusion ordering"};
  app.name("ocfusion");
  app.require_subcommand(1);
  app.set_version_flag("--version", "ocfusion 0.1.0");

  GenScenes gen;
  DeriveOcc derive;
  TrainOcc train;
  Fuse fuse;
  Eval eval;
  EvalOcc eval_occ;
  Bench bench;
  Render render;
  auto* c_gen = app.add_subcommand("gen-scenes", "Generate a synthetic corpus");
  auto* c_derive = app.add_subcommand(
      "derive-occ", "Derive ground-truth occlusion matrices");
  auto* c_train = app.add_subcommand("train-occ", "Train the pair classifier");
  auto* c_fuse = app.add_subcommand("fuse", "Fuse proposals into panoptic maps");
  auto* c_eval = app.add_subcommand("eval", "Panoptic quality of fused maps");
  auto* c_eval_occ =
      app.add_subcommand("eval-occ", "Pairwise accuracy of a predictor");
  auto* c_bench = app.add_subcommand("bench", "Time both fusion strategies");
  auto* c_render = app.add_subcommand("render", "Colour rendering of a map");
  gen.add_to(c_gen);
  derive.add_to(c_derive);
  train.add_to(c_train);
  fuse.add_to(c_fuse);
  eval.add_to(c_eval);
  eval_occ.add_to(c_eval_occ);
  bench.add_to(c_bench);
  render.add_to(c_render);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    // help() delegates to the selected subcommand.
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "ocfusion: " << e.what() << "\n";
    err << "run 'ocfusion --help' for usage\n";
    return static_cast<int>(ErrorKind::kUsage);
  }

  try {
    if (*c_gen) return gen.run(out);
    if (*c_derive) return derive.run(out);
    if (*c_train) return train.run(out);
    if (*c_fuse) return fuse.run(out);
    if (*c_eval) return eval.run(out);
    if (*c_eval_occ) return eval_occ.run(out);
    if (*c_bench) return bench.run(out);
    if (*c_render) return render.run(out);
  } catch (const Error& e) {
    err << "ocfusion: error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "ocfusion: error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::kData);
  } catch (const std::exception& e) {
    err << "ocfusion: internal error: " << e.what() << "\n";
    return 1;
  }
  return static_cast<int>(ErrorKind::kUsage);
}

int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace ocfusion::tools
