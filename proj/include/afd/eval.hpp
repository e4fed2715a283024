// SPDX-License-Identifier: Apache-2.0
//
// VOC-style matching, all-points interpolated AP, and mAP.
#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <vector>

#include "afd/box.hpp"
#include "afd/postprocess.hpp"
#include "afd/targets.hpp"

namespace afd {

inline constexpr double kMatchIou = 0.5;

/// `dets` must be sorted by descending score. Each detection takes the ground
/// truth with the highest IoU (first on ties). It is a true positive when
/// that IoU is at least `iou_thresh` and the ground truth is still unclaimed;
/// otherwise it is a false positive.
std::vector<bool> match_detections(const std::vector<Box>& dets,
                                   const std::vector<Box>& gts,
                                   double iou_thresh = kMatchIou);

struct PrCurve {
  std::vector<double> scores;  // descending
  std::vector<std::size_t> tp, fp;  // cumulative
  std::vector<double> precision, recall;
  std::size_t num_gt = 0;
};

/// Builds the curve from (score, is_tp) pairs. Pairs are stably sorted by
/// descending score first.
PrCurve pr_curve(std::vector<std::pair<double, bool>> scored, std::size_t num_gt);

/// Area under the precision envelope (max precision at recall >= r).
/// Throws NoGroundTruth when num_gt == 0.
double average_precision(const PrCurve& curve);

/// Mean over classes that have ground truth; throws NoGroundTruth if none.
double mean_ap(const std::vector<std::optional<double>>& per_class);

struct EvalResult {
  std::vector<std::optional<double>> ap;  // empty optional: no ground truth
  std::vector<PrCurve> curves;
  double map = 0.0;
};

/// Matches per image and class, then pools detections of each class over
/// all images. Images are visited in order, so equal scores keep
/// (image, rank) order.
EvalResult evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<GroundTruth>& gts, std::size_t num_classes,
                    double iou_thresh = kMatchIou);

/// Rows `class,score,precision,recall`.
void write_pr_csv(std::ostream& out, const EvalResult& result);

}  // namespace afd
