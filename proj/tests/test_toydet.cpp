// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "afd/checkpoint.hpp"
#include "afd/config.hpp"
#include "afd/detector.hpp"
#include "afd/error.hpp"
#include "afd/optim.hpp"
#include "afd/parallel.hpp"
#include "afd/postprocess.hpp"
#include "afd/rng.hpp"
#include "afd/scene.hpp"
#include "afd/targets.hpp"
#include "oracles.hpp"

using namespace afd;

TEST(Scene, Deterministic) {
  const SceneConfig cfg;
  const Scene a = gen_scene(42, cfg), b = gen_scene(42, cfg), c = gen_scene(43, cfg);
  EXPECT_EQ(a.image, b.image);
  EXPECT_NE(a.image, c.image);
}

TEST(Scene, ObjectsInsideImageAndWellFormed) {
  const SceneConfig cfg;
  for (const Scene& s : gen_dataset(7, 100, cfg)) {
    ASSERT_GE(s.objects.size(), cfg.min_objects);
    ASSERT_LE(s.objects.size(), cfg.max_objects);
    for (const auto& o : s.objects) {
      EXPECT_TRUE(o.box.valid());
      EXPECT_GE(o.box.x_min, 0.0);
      EXPECT_GE(o.box.y_min, 0.0);
      EXPECT_LE(o.box.x_max, 64.0);
      EXPECT_LE(o.box.y_max, 64.0);
      EXPECT_GE(o.cls, 0);
      EXPECT_LT(o.cls, 3);
    }
    for (double v : s.image) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Scene, NoiselessPixelsOutsideBoxesAreBackground) {
  SceneConfig cfg;
  cfg.noise_sigma = 0.0;
  const Scene s = gen_scene(3, cfg);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      bool inside = false;
      for (const auto& o : s.objects)
        inside = inside || (x >= o.box.x_min && x < o.box.x_max && y >= o.box.y_min && y < o.box.y_max);
      if (!inside) ASSERT_EQ(s.image[y * 64 + x], cfg.background);
    }
}

TEST(Scene, InvalidConfigRejected) {
  SceneConfig cfg;
  cfg.num_classes = 9;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Scene, ContainerRoundTrip) {
  const SceneConfig cfg;
  const auto scenes = gen_dataset(1, 5, cfg);
  const auto back = dataset_from_container(deserialize(serialize(dataset_to_container(scenes, cfg))));
  ASSERT_EQ(back.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(back[i].image, scenes[i].image);
    ASSERT_EQ(back[i].objects.size(), scenes[i].objects.size());
    for (std::size_t k = 0; k < scenes[i].objects.size(); ++k) {
      EXPECT_EQ(back[i].objects[k].cls, scenes[i].objects[k].cls);
      EXPECT_EQ(back[i].objects[k].box.x_max, scenes[i].objects[k].box.x_max);
    }
  }
  EXPECT_TRUE(dataset_from_container(deserialize(serialize(dataset_to_container({}, cfg)))).empty());
}

TEST(Checkpoint, RoundTripBitExact) {
  Rng rng(1);
  Container c;
  c.add("a", oracle::random_tensor({2, 3}, rng, -1e300, 1e300));
  c.add("b", Tensor::scalar(-0.0));
  c.metadata["seed"] = "7";
  const auto bytes = serialize(c);
  EXPECT_EQ(serialize(deserialize(bytes)), bytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "AFDC");
}

TEST(Checkpoint, VersionAndCorruptionAreHardErrors) {
  Container c;
  c.add("x", Tensor::scalar(1.0));
  auto bytes = serialize(c);
  auto bumped = bytes;
  bumped[4] ^= 0x7f;
  EXPECT_THROW(deserialize(bumped), CheckpointMismatch);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize(bad_magic), IoError);
  bytes.pop_back();
  EXPECT_THROW(deserialize(bytes), IoError);
  EXPECT_THROW(c.tensor("missing"), CheckpointMismatch);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "afd_ckpt_test.afdc";
  Container c;
  c.add("w", Tensor({3}, {1.5, -2.0, 1e-300}));
  save_container(c, path);
  EXPECT_EQ(serialize(load_container(path)), serialize(c));
  std::filesystem::remove(path);
  EXPECT_THROW(load_container(path), IoError);
}

TEST(Anchors, LevelsAndOrder) {
  const DetectorSpec spec;
  const auto levels = spec.anchor_levels();
  ASSERT_EQ(levels.size(), 2u);
  EXPECT_EQ(levels[0].height, 8u);
  EXPECT_EQ(levels[1].height, 4u);
  const auto flat = flatten_anchors(levels);
  EXPECT_EQ(flat.size(), 8u * 8 * 2 + 4u * 4 * 2);
  // (level 0, row 0, col 1, anchor 1)
  const Box b = flat[2 + 1];
  EXPECT_DOUBLE_EQ(0.5 * (b.x_min + b.x_max), 12.0);
  EXPECT_DOUBLE_EQ(b.width(), 15.0);
  EXPECT_THROW(make_anchor_levels(64, {7}, {10.0}, {1.0}), IndivisibleShape);
}

TEST(Boxes, EncodeDecodeInverse) {
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Box anchor{rng.uniform(0, 20), rng.uniform(0, 20), 0, 0};
    const Box a{anchor.x_min, anchor.y_min, anchor.x_min + rng.uniform(4, 30), anchor.y_min + rng.uniform(4, 30)};
    const Box g{rng.uniform(0, 20), rng.uniform(0, 20), 0, 0};
    const Box gt{g.x_min, g.y_min, g.x_min + rng.uniform(4, 30), g.y_min + rng.uniform(4, 30)};
    const Box back = decode_box(encode_box(gt, a), a);
    EXPECT_NEAR(back.x_min, gt.x_min, 1e-10);
    EXPECT_NEAR(back.y_max, gt.y_max, 1e-10);
  }
}

TEST(Detector, ForwardShapes) {
  const DetectorSpec spec;
  const DetectorParams p = DetectorParams::init(spec, 0, false);
  const auto scenes = gen_dataset(0, 2, SceneConfig{});
  const DetectorOutput out = forward(spec, p, batch_images(scenes, {0, 1}, 64));
  ASSERT_EQ(out.features.size(), 2u);
  EXPECT_EQ(out.features[0].shape(), (Shape{2, 32, 8, 8}));
  EXPECT_EQ(out.features[1].shape(), (Shape{2, 32, 4, 4}));
  EXPECT_EQ(out.heads.cls[0].shape(), (Shape{2, 8, 8, 8}));
  EXPECT_EQ(out.heads.loc[1].shape(), (Shape{2, 8, 4, 4}));
  EXPECT_EQ(out.heads.obj[0].shape(), (Shape{2, 2, 8, 8}));
  const FlatOutputs flat = flatten_heads(out.heads, 2);
  EXPECT_EQ(flat.cls.shape(), (Shape{2, 160, 4}));
  EXPECT_EQ(flat.loc.shape(), (Shape{2, 160, 4}));
  EXPECT_EQ(flat.obj.shape(), (Shape{2, 160}));
  // anchor 1 of cell (0,0) on level 0, class 2
  EXPECT_EQ(flat.cls[(0 * 160 + 1) * 4 + 2], out.heads.cls[0][(1 * 4 + 2) * 64]);
}

TEST(Detector, FrozenParamsRecordNothing) {
  const DetectorSpec spec;
  const DetectorParams p = DetectorParams::init(spec, 0, false);
  for (const auto& t : p.parameters()) EXPECT_FALSE(t.requires_grad());
  const auto scenes = gen_dataset(0, 1, SceneConfig{});
  const DetectorOutput out = forward(spec, p, batch_images(scenes, {0}, 64));
  EXPECT_FALSE(out.heads.cls[0].requires_grad());
}

TEST(Detector, CheckpointRoundTrip) {
  DetectorSpec spec;
  spec.channels = 8;
  const DetectorParams p = DetectorParams::init(spec, 5, true);
  Container c;
  p.add_to(c, "s.");
  spec_to_metadata(spec, c, "s.");
  const DetectorSpec back_spec = spec_from_metadata(c, "s.");
  EXPECT_EQ(back_spec.channels, 8u);
  const DetectorParams q = DetectorParams::from(c, "s.", back_spec, false);
  const auto pa = p.parameters(), qa = q.parameters();
  ASSERT_EQ(pa.size(), qa.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].data().begin(), pa[i].data().end(), qa[i].data().begin()));
  }
  EXPECT_EQ(p.names().size(), pa.size());
}

TEST(Targets, AssignmentRules) {
  const std::vector<Box> anchors{{0, 0, 10, 10}, {5, 0, 15, 10}, {30, 30, 40, 40}, {1, 0, 11, 10}};
  GroundTruth gt{{{0, 0, 10, 10}}, {2}};
  const AnchorTargets t = assign_targets(anchors, gt);
  EXPECT_EQ(t.labels[0], 3);  // exact match, class 2 + 1
  EXPECT_EQ(t.labels[1], 0);  // IoU 1/3 is background
  EXPECT_EQ(t.labels[2], 0);
  EXPECT_EQ(t.labels[3], 3);  // IoU 9/11
  EXPECT_EQ(t.positives(), 2u);
  EXPECT_EQ(t.objectness(), (std::vector<int>{kPositive, kNegative, kNegative, kPositive}));
  EXPECT_NEAR(t.deltas[3].dx, -0.1, 1e-12);

  // an object with no anchor above threshold still gets its best anchor
  GroundTruth small{{{31, 31, 35, 35}}, {0}};
  const AnchorTargets s = assign_targets(anchors, small);
  EXPECT_EQ(s.labels[2], 1);

  // 0.4 <= IoU < 0.5 is ignored
  GroundTruth mid{{{0, 0, 10, 10}, {30, 30, 40, 40}}, {0, 1}};
  const std::vector<Box> a2{{0, 0, 10, 10}, {4, 0, 14, 10}, {30, 30, 40, 40}};
  const AnchorTargets m = assign_targets(a2, mid);
  EXPECT_EQ(m.labels[1], kIgnore);  // IoU 3/7
}

TEST(Targets, TaskLossUniformLogits) {
  // zero logits: class CE = ln(K+1) for every sampled anchor
  const std::size_t m = 3;
  FlatOutputs out{Tensor::zeros({1, m, 4}), Tensor::zeros({1, m, 4}), Tensor::zeros({1, m})};
  AnchorTargets t;
  t.labels = {0, 2, kIgnore};
  t.deltas.assign(m, BoxDelta{});
  t.matched.assign(m, kUnmatched);
  const TaskLoss l = task_loss(out, {t});
  EXPECT_NEAR(l.cls.item(), std::log(4.0), 1e-12);
  EXPECT_NEAR(l.rpn.item(), std::log(2.0), 1e-12);
  EXPECT_NEAR(l.total.item(), std::log(4.0) + std::log(2.0), 1e-12);
  t.labels = {kIgnore, kIgnore, kIgnore};
  EXPECT_THROW(task_loss(out, {t}), NoSampledAnchors);
}

TEST(PostProcess, GreedyNms) {
  const std::vector<Box> boxes{{0, 0, 10, 10}, {1, 0, 11, 10}, {20, 20, 30, 30}, {0, 0, 10, 9}};
  EXPECT_EQ(nms(boxes, 0.5), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(nms(boxes, 0.95), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(PostProcess, DecodeAndNms) {
  // two anchors on the same spot, both confident class 1
  const std::vector<Box> anchors{{10, 10, 20, 20}, {10, 10, 20, 20}, {40, 40, 50, 50}};
  const std::vector<double> logits{0, 0, 5, 0,  0, 0, 4, 0,  5, 0, 0, 0};
  const std::vector<double> offsets(12, 0.0);
  const auto dets = decode_and_nms(logits, offsets, anchors, 3, 64.0, DecodeConfig{});
  ASSERT_FALSE(dets.empty());
  EXPECT_EQ(dets[0].cls, 1);
  EXPECT_DOUBLE_EQ(dets[0].box.x_min, 10.0);
  std::size_t class1 = 0;
  for (const auto& d : dets) {
    class1 += d.cls == 1 && d.score > 0.5;
    EXPECT_GE(d.score, 0.05);
  }
  EXPECT_EQ(class1, 1u);
  for (std::size_t i = 1; i < dets.size(); ++i) EXPECT_GE(dets[i - 1].score, dets[i].score);
  DecodeConfig bad;
  bad.iou_thresh = 1.5;
  EXPECT_THROW(decode_and_nms(logits, offsets, anchors, 3, 64.0, bad), DomainError);
}

TEST(PostProcess, ClipBox) {
  const Box b = clip_box({-5, 3, 70, 80}, 64.0);
  EXPECT_EQ(b.x_min, 0.0);
  EXPECT_EQ(b.x_max, 64.0);
  EXPECT_EQ(b.y_max, 64.0);
}

TEST(PostProcess, ProposalsStayOnGrid) {
  const DetectorSpec spec;
  const DetectorParams p = DetectorParams::init(spec, 1, false);
  const auto scenes = gen_dataset(0, 2, SceneConfig{});
  const DetectorOutput out = forward(spec, p, batch_images(scenes, {0, 1}, 64));
  const ProposalSet set = proposals_from_teacher(flatten_heads(out.heads, 2), spec.anchor_levels(), 64.0, {});
  ASSERT_EQ(set.levels.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    const double cells = l == 0 ? 8.0 : 4.0;
    ASSERT_EQ(set.levels[l].size(), 2u);
    for (const auto& img : set.levels[l]) {
      EXPECT_LE(img.size(), 8u);
      for (const auto& sb : img) {
        EXPECT_TRUE(sb.box.valid());
        EXPECT_GE(sb.box.x_min, 0.0);
        EXPECT_LE(sb.box.x_max, cells);
      }
    }
  }
}

TEST(Optim, StepScheduleMirrorsDecayEpochs) {
  const std::vector<std::size_t> decays{16, 22};
  EXPECT_DOUBLE_EQ(lr_at_epoch(0.02, decays, 0.1, 15), 0.02);
  EXPECT_DOUBLE_EQ(lr_at_epoch(0.02, decays, 0.1, 16), 0.02 * 0.1);
  EXPECT_DOUBLE_EQ(lr_at_epoch(0.02, decays, 0.1, 22), 0.02 * 0.1 * 0.1);
  const OptimConfig o;
  EXPECT_EQ(o.momentum, 0.9);
  EXPECT_EQ(o.weight_decay, 1e-4);
  EXPECT_EQ(o.epochs, 24u);
}

TEST(Optim, MomentumUpdateByHand) {
  Tensor w({2}, {1.0, -2.0}, true);
  Sgd sgd({w}, 0.9, 0.1);
  auto loss = [&] { return sum_all(square(w)); };  // grad 2w
  loss().backward();
  sgd.step(0.5);
  sgd.zero_grad();
  // v = 2w + 0.1w = 2.1w ; w' = w - 0.5 * 2.1w = -0.05w
  EXPECT_NEAR(w[0], -0.05, 1e-15);
  EXPECT_NEAR(w[1], 0.1, 1e-15);
  loss().backward();
  sgd.step(0.5);
  // v2 = 0.9 * 2.1w0 + 2.1w1, with w0 = (1,-2), w1 = -0.05 w0
  const double v0 = 0.9 * 2.1 * 1.0 + 2.1 * -0.05;
  EXPECT_NEAR(w[0], -0.05 - 0.5 * v0, 1e-14);
}

TEST(Optim, ClippingBoundsUpdate) {
  Tensor w({1}, {10.0}, true);
  Sgd sgd({w}, 0.0, 0.0);
  sum_all(square(w)).backward();
  EXPECT_NEAR(sgd.step(1.0, 1.0), 20.0, 1e-12);
  EXPECT_NEAR(w[0], 9.0, 1e-12);
  EXPECT_THROW(Sgd({Tensor::scalar(1.0)}, 0.9, 0.0), DetachedTensor);
}

TEST(Parallel, VisitsEveryIndexOnceAndPropagatesErrors) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) {
                 if (i == 7) throw DomainError("x");
               }),
               DomainError);
}
