// SPDX-License-Identifier: Apache-2.0
//
// Distillation losses between a frozen teacher and a student detector.
// Batched inputs are [N,...]; per-image sums are averaged over the batch, so
// with N = 1 every loss is exactly the per-image formula. Teacher-side inputs
// are always detached.
#pragma once

#include <cstddef>
#include <vector>

#include "afd/anchors.hpp"
#include "afd/attention.hpp"
#include "afd/tensor.hpp"

namespace afd {

/// Per-level feature maps [N,C,H,W].
using FpnFeatures = std::vector<Tensor>;

/// masks[level][image].
using BatchMasks = std::vector<std::vector<LevelMasks>>;

struct LossWeights {
  double nu = 5e-4;       // feature distillation
  double upsilon = 2e-2;  // attention-feature loss
  double beta = 1e-1;     // head distillation
  double lambda1 = 1.0;   // RPN objectness
  double lambda2 = 1.0;   // RPN regression

  static LossWeights one_stage() { return {5e-4, 2e-2, 1e-1, 1.0, 1.0}; }
  static LossWeights two_stage() { return {6e-5, 4e-3, 1e-1, 1.0, 1.0}; }
  void validate() const;
};

/// 1x1 convolution mapping student channels onto teacher channels.
struct Adapter {
  Tensor weight;  // [Ct,Cs,1,1]
  Tensor bias;    // [Ct]
  Tensor operator()(const Tensor& x) const;
  static Adapter identity(std::size_t channels);
};

FpnFeatures adapt_features(const FpnFeatures& student,
                           const std::vector<Adapter>& adapters);

/// Stacks one level's per-image spatial masks into [N,H,W].
Tensor stack_spatial(const std::vector<LevelMasks>& masks);
/// Stacks one level's per-image channel masks into [N,C].
Tensor stack_channel(const std::vector<LevelMasks>& masks);

/// sum_l sqrt(sum_{c,i,j} (n(F_T) - n(F_S))^2 * LG_sp[i,j] * LG_ch[c]) per
/// image, where n() is normalize_features over the batch. The inner sum is
/// clamped at 0 before the square root.
Tensor feature_distill_loss(const FpnFeatures& teacher,
                            const FpnFeatures& adapted_student,
                            const BatchMasks& masks);

/// Channel mean -> [N,H,W] spatial map.
Tensor attn_feature_ch(const Tensor& x);
/// Spatial mean -> [N,C] channel vector.
Tensor attn_feature_sp(const Tensor& x);

/// l_cha + l_spa summed over levels; the channel term averages a global
/// difference norm with the mean of the per-patch norms.
Tensor feature_attn_loss(const FpnFeatures& teacher, const FpnFeatures& student,
                         std::size_t instance_size);

/// Mask-weighted soft cross-entropy between teacher and student class
/// distributions. Logits are [N, A*K, H, W] per level with the class axis
/// anchor-major.
Tensor cls_head_loss(const std::vector<Tensor>& student_logits,
                     const std::vector<Tensor>& teacher_logits,
                     std::size_t num_anchors, const BatchMasks& masks);

/// Decodes [dx,dy,dw,dh] offsets per anchor into corner boxes, [N,1,H,W] each.
struct DecodedBoxes {
  Tensor x_min, y_min, x_max, y_max;
};
DecodedBoxes decode_level(const Tensor& offsets, const AnchorLevel& anchors,
                          std::size_t a);

/// Elementwise IoU of two decoded box sets.
Tensor box_iou(const DecodedBoxes& a, const DecodedBoxes& b);

/// Mask-weighted (1 - IoU) between decoded student and teacher boxes.
/// Offsets are [N, 4*A, H, W] per level.
Tensor loc_head_loss(const std::vector<Tensor>& student_offsets,
                     const std::vector<Tensor>& teacher_offsets,
                     const std::vector<AnchorLevel>& anchors,
                     const BatchMasks& masks);

enum AnchorLabel : int { kIgnore = -1, kNegative = 0, kPositive = 1 };

/// lambda1 / N_cls * sum BCE(p_i, p*_i) + lambda2 / N_reg * sum_{p*=1}
/// smooth_l1(t_i - t*_i). `objectness` holds logits [M]; offsets [M,4].
Tensor rpn_loss(const Tensor& objectness, const Tensor& offsets,
                const std::vector<int>& labels, const Tensor& target_offsets,
                double lambda1, double lambda2);

struct LossComponents {
  Tensor fd, fa, glob, cls_h, loc_h, rpn;
};

/// nu*fd + upsilon*fa + glob + beta*(cls_h + loc_h) + rpn.
Tensor total_loss(const LossComponents& c, const LossWeights& w);

}  // namespace afd
