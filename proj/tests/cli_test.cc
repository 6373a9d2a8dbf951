#include <gtest/gtest.h>

#include <sstream>

#include "cli.h"
#include "json.hpp"
#include "ocfusion/io.h"
#include "ocfusion/scenegen.h"
#include "test_support.h"

namespace ocfusion {
namespace {

namespace fs = std::filesystem;

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "ocfusion");
  std::ostringstream out, err;
  const int code = tools::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Small corpus shared by every test in this file.
class CliFlow : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    SceneGenConfig cfg;
    cfg.width = 128;
    cfg.height = 96;
    cfg.min_stuff_area = 512;
    cfg.confidence_model = ConfidenceModel::kAdversarial;
    write_text_file(path("config.json"), config_to_json(cfg));
    const auto r = cli({"gen-scenes", "--out", path("scenes"), "--n", "6",
                        "--config", path("config.json"), "--seed", "3"});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static testing::TempDir* dir_;
};

testing::TempDir* CliFlow::dir_ = nullptr;

TEST_F(CliFlow, GeneratesCorpusWithManifest) {
  EXPECT_EQ(list_scene_files(path("scenes")).size(), 6u);
  const auto m = manifest_from_json(read_text_file(path("scenes") + "/manifest.json"));
  EXPECT_EQ(m.scenes.size(), 6u);
  EXPECT_EQ(m.seed, 3u);
}

TEST_F(CliFlow, OracleFusionEvaluatesToPerfectPq) {
  auto r = cli({"fuse", "--scenes", path("scenes"), "--strategy", "ocfusion",
                "--predictor", "oracle", "--min-stuff-area", "512", "--out",
                path("fused_oracle"), "--trace"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("fused_oracle") + "/scene_000001.png"));
  EXPECT_TRUE(fs::exists(path("fused_oracle") + "/scene_000001.segments.json"));
  EXPECT_TRUE(fs::exists(path("fused_oracle") + "/scene_000001.trace.json"));

  r = cli({"eval", "--pred", path("fused_oracle"), "--gt", path("scenes"), "--out",
           path("results.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(read_text_file(path("results.json")));
  EXPECT_EQ(j["all"]["pq"].get<double>(), 1.0);
  EXPECT_EQ(j["n_scenes"].get<int>(), 6);
  EXPECT_TRUE(j.contains("fusion"));
  EXPECT_TRUE(fs::exists(path("results.txt")));
  EXPECT_NE(r.out.find("100.000"), std::string::npos);
}

TEST_F(CliFlow, FusionIsByteIdenticalAcrossRunsAndJobCounts) {
  for (const char* jobs : {"1", "3"}) {
    const auto r = cli({"fuse", "--scenes", path("scenes"), "--strategy", "confidence",
                        "--out", path(std::string("det_") + jobs), "--trace", "--jobs", jobs});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const auto& e : fs::directory_iterator(path("det_1"))) {
    const auto name = e.path().filename().string();
    EXPECT_EQ(read_text_file(e.path()), read_text_file(path("det_3") + "/" + name)) << name;
  }
}

TEST_F(CliFlow, DeriveTrainAndScoreClassifier) {
  auto r = cli({"derive-occ", "--scenes", path("scenes"), "--out", path("occ")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("occ") + "/scene_000001.occ.json"));

  r = cli({"train-occ", "--scenes", path("scenes"), "--occ", path("occ"), "--epochs", "50",
           "--out", path("model.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto model = model_from_json(read_text_file(path("model.json")));
  EXPECT_EQ(model.training.epochs, 50);

  r = cli({"eval-occ", "--scenes", path("scenes"), "--occ", path("occ"), "--predictor",
           "classifier", "--model", path("model.json")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy"), std::string::npos);

  r = cli({"eval-occ", "--scenes", path("scenes"), "--occ", path("occ"), "--predictor",
           "oracle"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("accuracy:    1.0000"), std::string::npos);

  r = cli({"fuse", "--scenes", path("scenes"), "--strategy", "ocfusion", "--predictor",
           "classifier", "--model", path("model.json"), "--out", path("fused_cls")});
  EXPECT_EQ(r.code, 0) << r.err;

  // The classifier needs a model.
  r = cli({"fuse", "--scenes", path("scenes"), "--strategy", "ocfusion", "--predictor",
           "classifier", "--out", path("fused_none")});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliFlow, BenchAndRender) {
  auto r = cli({"bench", "--scenes", path("scenes"), "--repeat", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("overhead"), std::string::npos);

  r = cli({"fuse", "--scenes", path("scenes"), "--out", path("fused_render")});
  ASSERT_EQ(r.code, 0) << r.err;
  r = cli({"render", "--panoptic", path("fused_render") + "/scene_000002.png", "--out",
           path("colour.png")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(path("colour.png")));
}

TEST_F(CliFlow, ExitCodes) {
  EXPECT_EQ(cli({"fuse", "--scenes", path("scenes"), "--out", path("x"), "--tau", "1.5"}).code, 2);
  EXPECT_EQ(cli({"fuse", "--scenes", path("scenes"), "--out", path("x"), "--bogus"}).code, 2);
  EXPECT_EQ(cli({"fuse", "--scenes", path("scenes"), "--out", path("x"), "--scope", "some"}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({}).code, 2);

  const auto missing = cli({"fuse", "--scenes", path("no_such_dir"), "--out", path("x")});
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("no_such_dir"), std::string::npos);

  fs::create_directories(path("broken"));
  write_text_file(path("broken") + "/scene_000001.json", "{\"version\": 1,");
  const auto broken = cli({"fuse", "--scenes", path("broken"), "--out", path("x")});
  EXPECT_EQ(broken.code, 3);
  EXPECT_NE(broken.err.find("scene_000001.json"), std::string::npos);
}

TEST(CliHelp, FuseListsCocoDefaults) {
  const auto r = cli({"fuse", "--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* flag : {"--strategy", "--predictor", "--model", "--tau", "--rho", "--cmin",
                           "--min-stuff-area", "--scope", "--skip-convention", "--trace",
                           "--profile"}) {
    EXPECT_NE(r.out.find(flag), std::string::npos) << flag;
  }
  EXPECT_NE(r.out.find("4096"), std::string::npos);
  EXPECT_NE(r.out.find("0.2"), std::string::npos);
}

TEST(CliHelp, EverySubcommandHasHelp) {
  for (const char* sub : {"gen-scenes", "derive-occ", "train-occ", "fuse", "eval", "eval-occ",
                          "bench", "render"}) {
    EXPECT_EQ(cli({sub, "--help"}).code, 0) << sub;
  }
}

}  // namespace
}  // namespace ocfusion
