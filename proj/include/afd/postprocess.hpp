// SPDX-License-Identifier: Apache-2.0
//
// Turning dense head outputs into detections and teacher proposals.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "afd/anchors.hpp"
#include "afd/attention.hpp"
#include "afd/box.hpp"
#include "afd/detector.hpp"

namespace afd {

struct Detection {
  Box box;
  int cls = 0;
  double score = 0.0;  // in [0,1]
};

struct DecodeConfig {
  double score_thresh = 0.05;
  double iou_thresh = 0.5;
  std::size_t max_detections = 100;
};

/// Greedy suppression of boxes already sorted by descending score. Returns
/// the kept positions.
std::vector<std::size_t> nms(const std::vector<Box>& sorted_boxes, double iou_thresh);

/// Clips a box to [0, size] on both axes.
Box clip_box(const Box& b, double size);

/// One image: `cls_logits` [M*(K+1)], `offsets` [M*4] in anchor order.
/// Scores are class softmax probabilities; boxes are decoded, clipped, and
/// suppressed per class. Output is sorted by descending score, ties by
/// anchor index then class.
std::vector<Detection> decode_and_nms(std::span<const double> cls_logits,
                                      std::span<const double> offsets,
                                      const std::vector<Box>& anchors,
                                      std::size_t num_classes,
                                      double image_size, const DecodeConfig& cfg);

/// Detections for every image of a batch of flattened outputs.
std::vector<std::vector<Detection>> detect(const FlatOutputs& out,
                                           const std::vector<Box>& anchors,
                                           std::size_t num_classes,
                                           double image_size,
                                           const DecodeConfig& cfg);

struct ProposalConfig {
  std::size_t top_n = 8;
  double iou_thresh = 0.7;
};

/// Top objectness boxes per image after decode, clip and class-agnostic NMS,
/// mapped into each level's cell coordinates and clipped to the level grid.
/// Equal scores keep anchor order.
ProposalSet proposals_from_teacher(const FlatOutputs& teacher,
                                   const std::vector<AnchorLevel>& levels,
                                   double image_size, const ProposalConfig& cfg);

}  // namespace afd
