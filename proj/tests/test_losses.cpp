// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "afd/error.hpp"
#include "afd/gcontext.hpp"
#include "afd/gradcheck_suites.hpp"
#include "afd/losses.hpp"
#include "afd/rng.hpp"
#include "oracles.hpp"

using namespace afd;

namespace {

Tensor image(const Tensor& x, std::size_t b) {
  return reshape(slice(x, 0, b, b + 1), {x.dim(1), x.dim(2), x.dim(3)});
}

BatchMasks masks_for(const FpnFeatures& t, const FpnFeatures& s, const MaskConfig& cfg) {
  BatchMasks out;
  for (std::size_t l = 0; l < t.size(); ++l) {
    std::vector<LevelMasks> per;
    for (std::size_t b = 0; b < t[l].dim(0); ++b) {
      per.push_back(level_masks(image(t[l], b), image(s[l], b),
                                Tensor::full({t[l].dim(2), t[l].dim(3)}, 1.0), cfg));
    }
    out.push_back(std::move(per));
  }
  return out;
}

// Masks with a constant spatial and channel value.
BatchMasks constant_masks(const std::vector<Shape>& shapes, double value) {
  BatchMasks out;
  for (const auto& s : shapes) {
    std::vector<LevelMasks> per;
    for (std::size_t b = 0; b < s[0]; ++b) {
      LevelMasks m;
      m.spatial = Tensor::full({s[2], s[3]}, value);
      m.channel = Tensor::full({s[1]}, value);
      per.push_back(m);
    }
    out.push_back(std::move(per));
  }
  return out;
}

std::vector<double> spatial_of(const LevelMasks& m) {
  return {m.spatial.data().begin(), m.spatial.data().end()};
}

BatchMasks scaled(const BatchMasks& m, double f) {
  BatchMasks out = m;
  for (auto& level : out)
    for (auto& lm : level) lm.spatial = lm.spatial * f;
  return out;
}

AnchorLevel level(std::size_t stride, std::size_t hw, std::vector<double> sizes) {
  AnchorLevel lv;
  lv.stride = stride;
  lv.height = lv.width = hw;
  lv.sizes = std::move(sizes);
  return lv;
}

double loc_oracle(const Tensor& s, const Tensor& t, const AnchorLevel& lv,
                  const std::vector<LevelMasks>& masks) {
  const std::size_t n = s.dim(0), a = lv.per_cell(), h = s.dim(2), w = s.dim(3);
  double total = 0.0;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t an = 0; an < a; ++an)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          double ts[4], tt[4];
          for (std::size_t k = 0; k < 4; ++k) {
            ts[k] = s[((b * 4 * a + 4 * an + k) * h + i) * w + j];
            tt[k] = t[((b * 4 * a + 4 * an + k) * h + i) * w + j];
          }
          const double acx = (j + 0.5) * lv.stride, acy = (i + 0.5) * lv.stride;
          const Box bs = oracle::decode(acx, acy, lv.sizes[an], ts, kMaxLogScale);
          const Box bt = oracle::decode(acx, acy, lv.sizes[an], tt, kMaxLogScale);
          total += (1.0 - oracle::box_iou(bs, bt)) * masks[b].spatial[i * w + j];
        }
  return total / static_cast<double>(n);
}

}  // namespace

TEST(Losses, PublishedWeights) {
  const LossWeights one = LossWeights::one_stage(), two = LossWeights::two_stage();
  EXPECT_EQ(one.nu, 5e-4);
  EXPECT_EQ(one.upsilon, 2e-2);
  EXPECT_EQ(one.beta, 1e-1);
  EXPECT_EQ(two.nu, 6e-5);
  EXPECT_EQ(two.upsilon, 4e-3);
  EXPECT_EQ(two.beta, 1e-1);
  EXPECT_EQ(one.lambda1, 1.0);
  EXPECT_EQ(one.lambda2, 1.0);
}

TEST(Losses, TotalLossArithmetic) {
  LossComponents c{Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0),
                   Tensor::scalar(1.0), Tensor::scalar(1.0), Tensor::scalar(1.0)};
  EXPECT_EQ(total_loss(c, LossWeights{1.0, 1.0, 1.0, 1.0, 1.0}).item(), 6.0);
  c.glob = Tensor::scalar(std::numeric_limits<double>::infinity());
  EXPECT_THROW(total_loss(c, LossWeights{}), NonFiniteComponent);
}

TEST(Losses, FeatureDistillMatchesLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const MaskConfig cfg{trial % 2 ? 0.4 : 0.1, trial % 3 ? std::size_t(4) : std::size_t(2)};
    FpnFeatures t{oracle::random_tensor({2, 4, 8, 8}, rng, -2, 2), oracle::random_tensor({2, 4, 4, 4}, rng, -2, 2)};
    FpnFeatures s{oracle::random_tensor({2, 4, 8, 8}, rng, -2, 2), oracle::random_tensor({2, 4, 4, 4}, rng, -2, 2)};
    const BatchMasks m = masks_for(t, s, cfg);
    std::vector<std::vector<oracle::Masks>> om(2);
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t b = 0; b < 2; ++b) {
        const std::size_t plane = t[l].numel() / 2;
        const oracle::Chw vt{t[l].data().data() + b * plane, 4, t[l].dim(2), t[l].dim(3)};
        const oracle::Chw vs{s[l].data().data() + b * plane, 4, s[l].dim(2), s[l].dim(3)};
        om[l].push_back(oracle::level_masks(vt, vs, cfg.instance_size, cfg.temperature));
      }
    EXPECT_NEAR(feature_distill_loss(t, s, m).item(), oracle::feature_distill(t, s, om), 1e-9);
  }
}

TEST(Losses, FeatureAttnMatchesLoopOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t inst = trial % 2 ? 2 : 4;
    FpnFeatures t{oracle::random_tensor({2, 4, 8, 8}, rng), oracle::random_tensor({2, 4, 4, 4}, rng)};
    FpnFeatures s{oracle::random_tensor({2, 4, 8, 8}, rng), oracle::random_tensor({2, 4, 4, 4}, rng)};
    EXPECT_NEAR(feature_attn_loss(t, s, inst).item(), oracle::feature_attn(t, s, inst), 1e-9);
  }
}

TEST(Losses, FeatureAttnSinglePatchDegenerates) {
  Rng rng(3);
  FpnFeatures t{oracle::random_tensor({1, 3, 4, 4}, rng)};
  FpnFeatures s{oracle::random_tensor({1, 3, 4, 4}, rng)};
  double cha = 0.0, spa = 0.0;
  for (std::size_t k = 0; k < 16; ++k) {
    double d = 0.0;
    for (std::size_t c = 0; c < 3; ++c) d += (s[0][c * 16 + k] - t[0][c * 16 + k]) / 3.0;
    cha += d * d;
  }
  for (std::size_t c = 0; c < 3; ++c) {
    double d = 0.0;
    for (std::size_t k = 0; k < 16; ++k) d += (s[0][c * 16 + k] - t[0][c * 16 + k]) / 16.0;
    spa += d * d;
  }
  EXPECT_NEAR(feature_attn_loss(t, s, 4).item(), std::sqrt(cha) + std::sqrt(spa), 1e-12);
}

TEST(Losses, ClsHeadMatchesLoopOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t a = 1 + trial % 2, k = 2 + trial % 3;
    Tensor s = oracle::random_tensor({2, a * k, 4, 4}, rng, -3, 3);
    Tensor t = oracle::random_tensor({2, a * k, 4, 4}, rng, -3, 3);
    FpnFeatures ft{oracle::random_tensor({2, 4, 4, 4}, rng)}, fs{oracle::random_tensor({2, 4, 4, 4}, rng)};
    const BatchMasks m = masks_for(ft, fs, MaskConfig{});
    std::vector<std::vector<double>> sp{spatial_of(m[0][0]), spatial_of(m[0][1])};
    EXPECT_NEAR(cls_head_loss({s}, {t}, a, m).item(), oracle::cls_head(s, t, a, sp), 1e-9);
  }
}

TEST(Losses, ClsHeadUniformTeacherIsLogK) {
  const std::size_t k = 4;
  Tensor t = Tensor::zeros({1, k, 3, 3});
  const BatchMasks m = constant_masks({{1, 1, 3, 3}}, 1.0);
  EXPECT_NEAR(cls_head_loss({t}, {t}, 1, m).item(), 9.0 * std::log(4.0), 1e-12);
}

TEST(Losses, ClsHeadGradientVanishesAtEquality) {
  Rng rng(5);
  Tensor t = oracle::random_tensor({2, 6, 4, 4}, rng, -2, 2);
  Tensor s({2, 6, 4, 4}, std::vector<double>(t.data().begin(), t.data().end()), true);
  FpnFeatures f{oracle::random_tensor({2, 4, 4, 4}, rng)};
  const BatchMasks m = masks_for(f, f, MaskConfig{});
  cls_head_loss({s}, {t}, 2, m).backward();
  for (double g : s.grad()) EXPECT_NEAR(g, 0.0, 1e-10);
}

TEST(Losses, IouHandCases) {
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {0, 0, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_DOUBLE_EQ(iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0);
  EXPECT_THROW(iou({0, 0, 0, 2}, {0, 0, 1, 1}), InvalidBox);
}

TEST(Losses, LocHeadShiftedTeacher) {
  // anchor side 2 at centre (4,4); teacher moved by one pixel on both axes
  const AnchorLevel lv = level(8, 1, {2.0});
  Tensor s = Tensor::zeros({1, 4, 1, 1});
  Tensor t({1, 4, 1, 1}, {0.5, 0.5, 0.0, 0.0});
  const BatchMasks m = constant_masks({{1, 1, 1, 1}}, 1.0);
  EXPECT_NEAR(loc_head_loss({s}, {t}, {lv}, m).item(), 6.0 / 7.0, 1e-12);
  EXPECT_EQ(loc_head_loss({t}, {t}, {lv}, m).item(), 0.0);
}

TEST(Losses, LocHeadMatchesLoopOracle) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const AnchorLevel lv = level(8, 4, {10.0, 15.0});
    Tensor s = oracle::random_tensor({2, 8, 4, 4}, rng, -0.6, 0.6);
    Tensor t = oracle::random_tensor({2, 8, 4, 4}, rng, -0.6, 0.6);
    FpnFeatures ft{oracle::random_tensor({2, 4, 4, 4}, rng)}, fs{oracle::random_tensor({2, 4, 4, 4}, rng)};
    const BatchMasks m = masks_for(ft, fs, MaskConfig{});
    EXPECT_NEAR(loc_head_loss({s}, {t}, {lv}, m).item(), loc_oracle(s, t, lv, m[0]), 1e-9);
  }
}

TEST(Losses, LocHeadMonotoneInDisplacement) {
  const AnchorLevel lv = level(8, 1, {10.0});
  Tensor t = Tensor::zeros({1, 4, 1, 1});
  const BatchMasks m = constant_masks({{1, 1, 1, 1}}, 1.0);
  double prev = -1.0;
  for (double dx = 0.0; dx <= 2.0; dx += 0.05) {
    Tensor s({1, 4, 1, 1}, {dx, 0.0, 0.0, 0.0});
    const double v = loc_head_loss({s}, {t}, {lv}, m).item();
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_NEAR(prev, 1.0, 1e-12);
}

TEST(Losses, MaskLinearity) {
  Rng rng(7);
  FpnFeatures t{oracle::random_tensor({2, 4, 8, 8}, rng), oracle::random_tensor({2, 4, 4, 4}, rng)};
  FpnFeatures s{oracle::random_tensor({2, 4, 8, 8}, rng), oracle::random_tensor({2, 4, 4, 4}, rng)};
  const BatchMasks m = masks_for(t, s, MaskConfig{});
  const BatchMasks m2 = scaled(m, 2.0);
  EXPECT_NEAR(feature_distill_loss(t, s, m2).item(),
              std::sqrt(2.0) * feature_distill_loss(t, s, m).item(), 1e-9);

  Tensor cs = oracle::random_tensor({2, 6, 8, 8}, rng), ct = oracle::random_tensor({2, 6, 8, 8}, rng);
  Tensor cs1 = oracle::random_tensor({2, 6, 4, 4}, rng), ct1 = oracle::random_tensor({2, 6, 4, 4}, rng);
  EXPECT_NEAR(cls_head_loss({cs, cs1}, {ct, ct1}, 2, m2).item(),
              2.0 * cls_head_loss({cs, cs1}, {ct, ct1}, 2, m).item(), 1e-9);

  const std::vector<AnchorLevel> lv{level(8, 8, {10.0, 15.0}), level(16, 4, {20.0, 30.0})};
  Tensor ls = oracle::random_tensor({2, 8, 8, 8}, rng, -.5, .5), lt = oracle::random_tensor({2, 8, 8, 8}, rng, -.5, .5);
  Tensor ls1 = oracle::random_tensor({2, 8, 4, 4}, rng, -.5, .5), lt1 = oracle::random_tensor({2, 8, 4, 4}, rng, -.5, .5);
  EXPECT_NEAR(loc_head_loss({ls, ls1}, {lt, lt1}, lv, m2).item(),
              2.0 * loc_head_loss({ls, ls1}, {lt, lt1}, lv, m).item(), 1e-9);
}

TEST(Losses, IdentityZeroSuite) {
  Rng rng(8);
  FpnFeatures f{oracle::random_tensor({2, 4, 8, 8}, rng), oracle::random_tensor({2, 4, 4, 4}, rng)};
  const std::vector<Adapter> id{Adapter::identity(4), Adapter::identity(4)};
  const FpnFeatures adapted = adapt_features(f, id);
  const BatchMasks m = masks_for(f, adapted, MaskConfig{});
  EXPECT_LT(std::fabs(feature_distill_loss(f, adapted, m).item()), 1e-10);
  EXPECT_LT(std::fabs(feature_attn_loss(f, adapted, 4).item()), 1e-10);
  GcBlockParams gc = GcBlockParams::init(4, 4, kDefaultGlobalWeight, 1);
  for (double& v : gc.expand_w.mutable_data()) v = rng.uniform(-1, 1);
  EXPECT_LT(std::fabs(global_loss(f[0], adapted[0], gc).item()), 1e-10);
  const std::vector<AnchorLevel> lv{level(8, 8, {10.0, 15.0})};
  Tensor off = oracle::random_tensor({2, 8, 8, 8}, rng, -.5, .5);
  EXPECT_LT(std::fabs(loc_head_loss({off}, {off}, lv, {m[0]}).item()), 1e-10);
}

TEST(Losses, RpnHandCases) {
  // one positive with perfect objectness, offsets off by 0.5 on each coordinate
  Tensor obj({2}, {40.0, -40.0});
  Tensor off({2, 4}, {0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0});
  Tensor tgt = Tensor::zeros({2, 4});
  EXPECT_NEAR(rpn_loss(obj, off, {kPositive, kNegative}, tgt, 1.0, 1.0).item(), 0.5, 1e-12);
  EXPECT_NEAR(rpn_loss(obj, tgt, {kPositive, kNegative}, tgt, 1.0, 1.0).item(), 0.0, 1e-6);
  EXPECT_THROW(rpn_loss(obj, off, {kIgnore, kIgnore}, tgt, 1.0, 1.0), NoSampledAnchors);
}

TEST(Losses, RpnMatchesLoopOracle) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t m = 20;
    Tensor obj = oracle::random_tensor({m}, rng, -4, 4);
    Tensor off = oracle::random_tensor({m, 4}, rng, -2, 2);
    Tensor tgt = oracle::random_tensor({m, 4}, rng, -2, 2);
    std::vector<int> labels(m);
    for (auto& l : labels) l = static_cast<int>(rng.integer(-1, 1));
    labels[0] = kNegative;
    const double l1 = rng.uniform(0.5, 2.0), l2 = rng.uniform(0.5, 2.0);
    double cls = 0.0, reg = 0.0;
    std::size_t nc = 0, nr = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (labels[i] == kIgnore) continue;
      ++nc;
      const double y = labels[i] == kPositive ? 1.0 : 0.0;
      cls += oracle::softplus(obj[i]) - y * obj[i];
      if (labels[i] != kPositive) continue;
      ++nr;
      for (std::size_t k = 0; k < 4; ++k) reg += oracle::smooth_l1(off[i * 4 + k] - tgt[i * 4 + k]);
    }
    const double ref = l1 * cls / nc + l2 * reg / std::max<std::size_t>(nr, 1);
    EXPECT_NEAR(rpn_loss(obj, off, labels, tgt, l1, l2).item(), ref, 1e-9);
  }
}

TEST(Losses, AllLossesNonNegative) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    FpnFeatures t{oracle::random_tensor({2, 4, 8, 8}, rng)}, s{oracle::random_tensor({2, 4, 8, 8}, rng)};
    const BatchMasks m = masks_for(t, s, MaskConfig{});
    EXPECT_GE(feature_distill_loss(t, s, m).item(), 0.0);
    EXPECT_GE(feature_attn_loss(t, s, 4).item(), 0.0);
    const std::vector<AnchorLevel> lv{level(8, 8, {10.0})};
    Tensor a = oracle::random_tensor({2, 4, 8, 8}, rng), b = oracle::random_tensor({2, 4, 8, 8}, rng);
    EXPECT_GE(loc_head_loss({a}, {b}, lv, m).item(), 0.0);
    EXPECT_GE(cls_head_loss({a}, {b}, 2, m).item(), 0.0);
  }
}

TEST(Losses, ShapeMismatchesRejected) {
  Rng rng(11);
  FpnFeatures t{oracle::random_tensor({2, 4, 8, 8}, rng)}, s{oracle::random_tensor({2, 3, 8, 8}, rng)};
  EXPECT_THROW(feature_attn_loss(t, s, 4), ShapeMismatch);
  EXPECT_THROW(cls_head_loss({t[0]}, {t[0]}, 3, constant_masks({{2, 4, 8, 8}}, 1.0)), ShapeMismatch);
}

TEST(Losses, LossGradientSuitePasses) {
  for (const auto& r : gradcheck_losses(0)) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_rel_error;
    EXPECT_LT(r.max_rel_error, kLossTolerance) << r.name;
  }
}
