// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "afd/error.hpp"
#include "afd/gcontext.hpp"
#include "afd/rng.hpp"
#include "oracles.hpp"

using namespace afd;

namespace {

void randomize(Tensor& t, Rng& rng, double scale) {
  for (double& v : t.mutable_data()) v = scale * rng.uniform(-1.0, 1.0);
}

GcBlockParams trained_block(std::size_t c, std::uint64_t seed) {
  GcBlockParams p = GcBlockParams::init(c, 4, kDefaultGlobalWeight, seed);
  Rng rng(seed + 1);
  randomize(p.context_b, rng, 0.5);
  randomize(p.reduce_b, rng, 0.5);
  randomize(p.norm_gamma, rng, 1.0);
  randomize(p.norm_beta, rng, 0.5);
  randomize(p.expand_w, rng, 0.5);
  randomize(p.expand_b, rng, 0.5);
  return p;
}

oracle::GcParams to_oracle(const GcBlockParams& p) {
  auto v = [](const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
  oracle::GcParams o;
  o.context_w = v(p.context_w);
  o.context_b = p.context_b[0];
  o.reduce_w = v(p.reduce_w);
  o.reduce_b = v(p.reduce_b);
  o.gamma = v(p.norm_gamma);
  o.beta = v(p.norm_beta);
  o.expand_w = v(p.expand_w);
  o.expand_b = v(p.expand_b);
  o.c = p.channels;
  o.r = p.channels / p.reduction;
  o.eps = p.norm_epsilon;
  return o;
}

}  // namespace

TEST(GcBlock, Defaults) {
  EXPECT_EQ(kDefaultGlobalWeight, 5e-4);
  EXPECT_EQ(kDefaultGcReduction, 4u);
}

TEST(GcBlock, IdentityAtInitBitExact) {
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const GcBlockParams p = GcBlockParams::init(8, 4, kDefaultGlobalWeight, trial);
    for (double v : p.expand_w.data()) EXPECT_EQ(v, 0.0);
    Tensor f = oracle::random_tensor({2, 8, 4, 4}, rng, -3.0, 3.0);
    Tensor out = gc_forward(f, p);
    for (std::size_t i = 0; i < f.numel(); ++i) ASSERT_EQ(out[i], f[i]);
  }
}

TEST(GcBlock, MatchesLoopOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const GcBlockParams p = trained_block(8, 100 + trial);
    Tensor f = oracle::random_tensor({2, 8, 4, 4}, rng, -2.0, 2.0);
    Tensor out = gc_forward(f, p);
    const auto op = to_oracle(p);
    const std::size_t plane = 8 * 16;
    for (std::size_t b = 0; b < 2; ++b) {
      const oracle::Chw img{f.data().data() + b * plane, 8, 4, 4};
      const auto ref = oracle::gc_block(img, op);
      EXPECT_LT(oracle::max_abs_diff(out.data().subspan(b * plane, plane), ref), 1e-9);
    }
  }
}

TEST(GcBlock, ContextIsConvexCombination) {
  Rng rng(3);
  const GcBlockParams p = trained_block(4, 7);
  Tensor f = oracle::random_tensor({1, 4, 3, 3}, rng);
  Tensor ctx = gc_context(f, p);
  for (std::size_t c = 0; c < 4; ++c) {
    double lo = 1e9, hi = -1e9;
    for (std::size_t k = 0; k < 9; ++k) {
      lo = std::min(lo, f[c * 9 + k]);
      hi = std::max(hi, f[c * 9 + k]);
    }
    EXPECT_GE(ctx[c], lo - 1e-12);
    EXPECT_LE(ctx[c], hi + 1e-12);
  }
}

TEST(GcBlock, ContextLogitShiftInvariance) {
  // adding a constant to L1's bias shifts every softmax logit equally
  Rng rng(4);
  GcBlockParams p = trained_block(8, 9);
  Tensor f = oracle::random_tensor({2, 8, 4, 4}, rng);
  const auto before = gc_forward(f, p);
  std::vector<double> ref(before.data().begin(), before.data().end());
  p.context_b.mutable_data()[0] += 3.0;
  EXPECT_LT(oracle::max_abs_diff(gc_forward(f, p).data(), ref), 1e-12);
}

TEST(GcBlock, GlobalLossAtInitIsWeightedMse) {
  Rng rng(5);
  const GcBlockParams p = GcBlockParams::init(8, 4, kDefaultGlobalWeight, 3);
  Tensor t = oracle::random_tensor({2, 8, 4, 4}, rng);
  Tensor s = oracle::random_tensor({2, 8, 4, 4}, rng);
  double ref = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) ref += (t[i] - s[i]) * (t[i] - s[i]);
  EXPECT_NEAR(global_loss(t, s, p).item(), kDefaultGlobalWeight * ref, 1e-12);
  EXPECT_EQ(global_loss(t, t, p).item(), 0.0);
}

TEST(GcBlock, TeacherBranchDetached) {
  Rng rng(6);
  const GcBlockParams p = trained_block(8, 11);
  Tensor t = oracle::random_tensor({1, 8, 4, 4}, rng, -1.0, 1.0, true);
  Tensor s = oracle::random_tensor({1, 8, 4, 4}, rng, -1.0, 1.0, true);
  global_loss(t, s, p).backward();
  for (double g : t.grad()) EXPECT_EQ(g, 0.0);
  double norm = 0.0;
  for (double g : s.grad()) norm += g * g;
  EXPECT_GT(norm, 0.0);
}

TEST(GcBlock, ReductionMustDivideChannels) {
  EXPECT_THROW(GcBlockParams::init(6, 4, kDefaultGlobalWeight, 0), ShapeMismatch);
}
