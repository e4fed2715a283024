// SPDX-License-Identifier: Apache-2.0
#include "afd/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "afd/error.hpp"
#include "afd/parallel.hpp"

namespace afd {
namespace {

struct Candidate {
  Box box;
  double score;
  std::size_t anchor;
  int cls;
};

bool by_score(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.anchor != b.anchor) return a.anchor < b.anchor;
  return a.cls < b.cls;
}

Box decode_clipped(std::span<const double> offsets, std::size_t i, const Box& anchor,
                   double size) {
  const BoxDelta d{offsets[i * 4], offsets[i * 4 + 1], offsets[i * 4 + 2], offsets[i * 4 + 3]};
  return clip_box(decode_box(d, anchor), size);
}

double overlap_or_zero(const Box& a, const Box& b) {
  return a.valid() && b.valid() ? iou(a, b) : 0.0;
}

std::vector<Candidate> suppress(std::vector<Candidate> cands, double iou_thresh) {
  std::stable_sort(cands.begin(), cands.end(), by_score);
  std::vector<Box> boxes;
  for (const auto& c : cands) boxes.push_back(c.box);
  std::vector<Candidate> kept;
  for (std::size_t k : nms(boxes, iou_thresh)) kept.push_back(cands[k]);
  return kept;
}

}  // namespace

std::vector<std::size_t> nms(const std::vector<Box>& boxes, double iou_thresh) {
  std::vector<std::size_t> kept;
  std::vector<bool> removed(boxes.size(), false);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (removed[i]) continue;
    kept.push_back(i);
    for (std::size_t j = i + 1; j < boxes.size(); ++j) {
      if (!removed[j] && overlap_or_zero(boxes[i], boxes[j]) > iou_thresh) removed[j] = true;
    }
  }
  return kept;
}

Box clip_box(const Box& b, double size) {
  return {std::clamp(b.x_min, 0.0, size), std::clamp(b.y_min, 0.0, size),
          std::clamp(b.x_max, 0.0, size), std::clamp(b.y_max, 0.0, size)};
}

std::vector<Detection> decode_and_nms(std::span<const double> cls_logits,
                                      std::span<const double> offsets,
                                      const std::vector<Box>& anchors,
                                      std::size_t num_classes, double image_size,
                                      const DecodeConfig& cfg) {
  if (!(cfg.score_thresh > 0.0 && cfg.score_thresh < 1.0) ||
      !(cfg.iou_thresh > 0.0 && cfg.iou_thresh < 1.0)) {
    throw DomainError("decode thresholds must lie in (0,1)");
  }
  const std::size_t m = anchors.size(), kc = num_classes + 1;
  if (cls_logits.size() != m * kc || offsets.size() != m * 4) {
    throw ShapeMismatch("decode_and_nms: outputs do not match anchors");
  }
  std::vector<std::vector<Candidate>> per_class(num_classes);
  std::vector<double> prob(kc);
  for (std::size_t i = 0; i < m; ++i) {
    const double* z = cls_logits.data() + i * kc;
    const double zmax = *std::max_element(z, z + kc);
    double total = 0.0;
    for (std::size_t k = 0; k < kc; ++k) total += prob[k] = std::exp(z[k] - zmax);
    std::optional<Box> box;
    for (std::size_t k = 1; k < kc; ++k) {
      const double score = prob[k] / total;
      if (score < cfg.score_thresh) continue;
      if (!box) box = decode_clipped(offsets, i, anchors[i], image_size);
      if (!box->valid()) break;
      per_class[k - 1].push_back({*box, score, i, static_cast<int>(k - 1)});
    }
  }
  std::vector<Candidate> all;
  for (auto& cands : per_class) {
    auto kept = suppress(std::move(cands), cfg.iou_thresh);
    all.insert(all.end(), kept.begin(), kept.end());
  }
  std::sort(all.begin(), all.end(), by_score);
  if (all.size() > cfg.max_detections) all.resize(cfg.max_detections);
  std::vector<Detection> out;
  for (const auto& c : all) out.push_back({c.box, c.cls, c.score});
  return out;
}

std::vector<std::vector<Detection>> detect(const FlatOutputs& out,
                                           const std::vector<Box>& anchors,
                                           std::size_t num_classes, double image_size,
                                           const DecodeConfig& cfg) {
  const std::size_t n = out.cls.dim(0), m = anchors.size(), kc = num_classes + 1;
  std::vector<std::vector<Detection>> dets(n);
  parallel_for(n, [&](std::size_t b) {
    dets[b] = decode_and_nms(out.cls.data().subspan(b * m * kc, m * kc),
                             out.loc.data().subspan(b * m * 4, m * 4), anchors,
                             num_classes, image_size, cfg);
  });
  return dets;
}

ProposalSet proposals_from_teacher(const FlatOutputs& teacher,
                                   const std::vector<AnchorLevel>& levels,
                                   double image_size, const ProposalConfig& cfg) {
  if (cfg.top_n < 1) throw DomainError("top_n must be at least 1");
  const auto anchors = flatten_anchors(levels);
  const std::size_t n = teacher.obj.dim(0), m = anchors.size();
  if (teacher.obj.dim(1) != m) throw ShapeMismatch("objectness does not match anchors");
  ProposalSet set;
  set.levels.assign(levels.size(), std::vector<ProposalList>(n));
  for (std::size_t b = 0; b < n; ++b) {
    const auto obj = teacher.obj.data().subspan(b * m, m);
    const auto offsets = teacher.loc.data().subspan(b * m * 4, m * 4);
    std::vector<Candidate> cands;
    for (std::size_t i = 0; i < m; ++i) {
      const Box box = decode_clipped(offsets, i, anchors[i], image_size);
      if (!box.valid()) continue;
      cands.push_back({box, 1.0 / (1.0 + std::exp(-obj[i])), i, 0});
    }
    auto kept = suppress(std::move(cands), cfg.iou_thresh);
    if (kept.size() > cfg.top_n) kept.resize(cfg.top_n);
    for (std::size_t l = 0; l < levels.size(); ++l) {
      const double s = static_cast<double>(levels[l].stride);
      for (const auto& c : kept) {
        const Box cell{std::clamp(c.box.x_min / s, 0.0, double(levels[l].width)),
                       std::clamp(c.box.y_min / s, 0.0, double(levels[l].height)),
                       std::clamp(c.box.x_max / s, 0.0, double(levels[l].width)),
                       std::clamp(c.box.y_max / s, 0.0, double(levels[l].height))};
        if (cell.valid()) set.levels[l][b].push_back({cell, c.score});
      }
    }
  }
  return set;
}

}  // namespace afd
