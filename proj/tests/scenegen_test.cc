#include <gtest/gtest.h>

#include "ocfusion/error.h"
#include "ocfusion/io.h"
#include "ocfusion/occlusion.h"
#include "ocfusion/scenegen.h"
#include "test_support.h"

namespace ocfusion {
namespace {

TEST(GenerateScene, DeterministicPerSeed) {
  SceneGenConfig cfg;
  cfg.perturbation.morph_radius = 2;
  cfg.perturbation.spurious_rate = 0.2;
  cfg.perturbation.label_noise = 0.05;
  const auto a = generate_scene(cfg, 123, 7);
  const auto b = generate_scene(cfg, 123, 7);
  EXPECT_EQ(a, b);
  EXPECT_EQ(scene_to_json(a), scene_to_json(b));
  EXPECT_NE(scene_to_json(a), scene_to_json(generate_scene(cfg, 124, 7)));
}

TEST(GenerateScene, UnperturbedProposalsAreAmodalMasks) {
  const SceneGenConfig cfg;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    const auto& gt = *s.gt_instances;
    ASSERT_EQ(s.proposals.size(), gt.size());
    for (std::size_t k = 0; k < gt.size(); ++k) {
      EXPECT_EQ(s.proposals[k].mask, gt[k].mask);
      EXPECT_EQ(s.proposals[k].class_id, gt[k].class_id);
    }
    EXPECT_TRUE(validate(s).empty());
  }
}

// Every covered pixel belongs to the nearest covering instance, and nothing
// is void.
TEST(GenerateScene, GroundTruthFollowsDepthOrder) {
  const SceneGenConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    const auto& gt = *s.gt_instances;
    const auto& pan = *s.gt_panoptic;
    std::vector<testing::Bitmap> bits;
    for (const auto& g : gt) bits.push_back(g.mask.to_bitmap());
    for (std::size_t p = 0; p < pan.pixel_segments.size(); ++p) {
      const SegmentId id = pan.pixel_segments[p];
      ASSERT_NE(id, 0);
      int top = -1;
      for (std::size_t k = 0; k < gt.size(); ++k) {
        if (bits[k][p] && (top < 0 || gt[k].z_rank > gt[top].z_rank)) {
          top = static_cast<int>(k);
        }
      }
      const SegmentInfo* seg = pan.find(id);
      ASSERT_NE(seg, nullptr);
      if (top < 0) {
        ASSERT_FALSE(seg->is_thing);
      } else {
        ASSERT_TRUE(seg->is_thing);
        ASSERT_EQ(seg->source_id, gt[top].instance_id);
      }
    }
  }
}

TEST(GenerateScene, LayoutConstraintsHold) {
  const SceneGenConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    const auto& pan = *s.gt_panoptic;
    const auto areas = segment_areas(pan);
    for (std::size_t k = 0; k < pan.segments.size(); ++k) {
      const auto& seg = pan.segments[k];
      if (!seg.is_thing) {
        EXPECT_GE(areas[k], cfg.min_stuff_area);
        continue;
      }
      const auto& inst = (*s.gt_instances)[static_cast<std::size_t>(*seg.source_id - 1)];
      EXPECT_GE(static_cast<double>(areas[k]),
                cfg.min_visible_fraction * static_cast<double>(inst.mask.area()));
    }
    EXPECT_FALSE(s.catalog.stuff_ids().empty());
  }
}

TEST(GenerateScene, NestedShapesPutTheInnerOneOnTop) {
  SceneGenConfig cfg;
  cfg.shape = ShapeFamily::kRectangle;
  cfg.confidence_model = ConfidenceModel::kAdversarial;
  int nested = 0;
  for (std::uint64_t seed = 0; seed < 400 && nested < 3; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    const auto& gt = *s.gt_instances;
    for (std::size_t a = 0; a < gt.size(); ++a) {
      for (std::size_t b = 0; b < gt.size(); ++b) {
        if (a == b || subtract(gt[a].mask, gt[b].mask).area() != 0) continue;
        ++nested;  // a lies inside b
        EXPECT_GT(gt[a].z_rank, gt[b].z_rank);
        EXPECT_LT(s.proposals[a].confidence, s.proposals[b].confidence);
      }
    }
  }
  EXPECT_GT(nested, 0);
}

TEST(GenerateScene, ConfidenceModels) {
  for (auto model : {ConfidenceModel::kAdversarial, ConfidenceModel::kCorrelated}) {
    SceneGenConfig cfg;
    cfg.confidence_model = model;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Scene s = generate_scene(cfg, seed);
      const auto& gt = *s.gt_instances;
      for (std::size_t a = 0; a < gt.size(); ++a) {
        for (std::size_t b = 0; b < gt.size(); ++b) {
          if (gt[a].z_rank <= gt[b].z_rank) continue;
          if (model == ConfidenceModel::kAdversarial) {
            EXPECT_LT(s.proposals[a].confidence, s.proposals[b].confidence);
          } else {
            EXPECT_GT(s.proposals[a].confidence, s.proposals[b].confidence);
          }
        }
      }
    }
  }
}

TEST(GenerateScene, DerivedRelationEqualsDepthOrder) {
  SceneGenConfig cfg;
  cfg.shape = ShapeFamily::kMixed;
  std::size_t defined = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    const auto& gt = *s.gt_instances;
    const auto m = derive_gt_occlusion(s, 0.2);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      for (std::size_t j = 0; j < gt.size(); ++j) {
        if (i == j) continue;
        const auto st = intersection_stats(gt[i].mask, gt[j].mask);
        if (st.area_inter > 0 && st.appreciable(0.2)) {
          ASSERT_TRUE(m.defined(i, j));
          ASSERT_EQ(m.at(i, j) == 1, gt[i].z_rank > gt[j].z_rank);
          ++defined;
        } else {
          ASSERT_FALSE(m.defined(i, j));
        }
      }
    }
  }
  EXPECT_GT(defined, 100u);
}

TEST(GenerateScene, PerturbationsChangeProposals) {
  SceneGenConfig cfg;
  cfg.perturbation.dropout = 0.5;
  cfg.perturbation.spurious_rate = 1.0;
  std::size_t proposals = 0, instances = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scene s = generate_scene(cfg, seed);
    proposals += s.proposals.size();
    instances += s.gt_instances->size();
    EXPECT_TRUE(validate(s).empty());
  }
  EXPECT_NE(proposals, instances);
}

TEST(SceneGenConfig, ValidationRejectsBadValues) {
  SceneGenConfig c;
  c.perturbation.dropout = 1.5;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.min_instances = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.perturbation.morph_radius = -1;
  EXPECT_THROW(c.validate(), UsageError);
  c = {};
  c.depth_cue = 2.0;
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_NO_THROW(SceneGenConfig{}.validate());
  EXPECT_THROW(parse_shape_family("blob"), UsageError);
  EXPECT_EQ(parse_confidence_model(to_string(ConfidenceModel::kAdversarial)),
            ConfidenceModel::kAdversarial);
}

TEST(GenerateCorpus, ManifestIsDeterministic) {
  testing::TempDir a("corpus_a"), b("corpus_b");
  SceneGenConfig cfg;
  cfg.width = 128;
  cfg.height = 96;
  cfg.min_stuff_area = 512;
  const auto one = generate_corpus(cfg, 1, 5, a.path());
  ASSERT_EQ(one.scenes.size(), 1u);
  EXPECT_TRUE(std::filesystem::exists(a / one.scenes[0].file));
  EXPECT_TRUE(std::filesystem::exists(a / "manifest.json"));

  const auto m1 = generate_corpus(cfg, 6, 9, a.path(), 1);
  const auto m2 = generate_corpus(cfg, 6, 9, b.path(), 3);
  EXPECT_EQ(m1.hash(), m2.hash());
  EXPECT_EQ(read_text_file(a / "manifest.json"), read_text_file(b / "manifest.json"));
  for (const auto& e : m1.scenes) {
    EXPECT_EQ(read_text_file(a / e.file), read_text_file(b / e.file));
  }
  EXPECT_THROW(generate_corpus(cfg, 0, 9, a.path()), UsageError);
}

}  // namespace
}  // namespace ocfusion
