// SPDX-License-Identifier: Apache-2.0
//
// Anchor target assignment and the detector's own training loss.
#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "afd/box.hpp"
#include "afd/detector.hpp"
#include "afd/scene.hpp"
#include "afd/tensor.hpp"

namespace afd {

inline constexpr double kPositiveIou = 0.5;
inline constexpr double kNegativeIou = 0.4;
inline constexpr std::size_t kUnmatched = std::numeric_limits<std::size_t>::max();

struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<int> classes;  // 0..K-1
};

GroundTruth ground_truth(const Scene& scene);

/// Per-anchor targets. `labels` holds -1 (ignored), 0 (background) or
/// class + 1; `deltas` are meaningful for positives only.
struct AnchorTargets {
  std::vector<int> labels;
  std::vector<BoxDelta> deltas;
  std::vector<std::size_t> matched;  // ground-truth index or kUnmatched

  /// -1 / 0 / 1 labels for the objectness branch.
  std::vector<int> objectness() const;
  std::size_t positives() const;
};

/// IoU >= pos_iou is positive, < neg_iou negative, anything between is
/// ignored. The best anchor of every ground truth is positive as well (ties
/// go to the lowest anchor index).
AnchorTargets assign_targets(const std::vector<Box>& anchors, const GroundTruth& gt,
                             double pos_iou = kPositiveIou,
                             double neg_iou = kNegativeIou);

struct TaskLoss {
  Tensor total;  // cls + rpn
  Tensor cls;    // cross-entropy averaged over sampled anchors
  Tensor rpn;    // objectness BCE + smooth-l1 on positive offsets
};

/// Loss of flattened outputs against one AnchorTargets per image.
TaskLoss task_loss(const FlatOutputs& out, const std::vector<AnchorTargets>& targets,
                   double lambda1 = 1.0, double lambda2 = 1.0);

}  // namespace afd
