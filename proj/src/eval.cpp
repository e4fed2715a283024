// SPDX-License-Identifier: Apache-2.0
#include "afd/eval.hpp"

#include <algorithm>
#include <iomanip>

#include "afd/error.hpp"

namespace afd {

std::vector<bool> match_detections(const std::vector<Box>& dets,
                                   const std::vector<Box>& gts, double iou_thresh) {
  std::vector<bool> tp(dets.size(), false), used(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = -1.0;
    std::size_t best_k = gts.size();
    for (std::size_t k = 0; k < gts.size(); ++k) {
      const double v = dets[d].valid() ? iou(dets[d], gts[k]) : 0.0;
      if (v > best) {
        best = v;
        best_k = k;
      }
    }
    if (best_k < gts.size() && best >= iou_thresh && !used[best_k]) {
      tp[d] = true;
      used[best_k] = true;
    }
  }
  return tp;
}

PrCurve pr_curve(std::vector<std::pair<double, bool>> scored, std::size_t num_gt) {
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  PrCurve c;
  c.num_gt = num_gt;
  std::size_t tp = 0, fp = 0;
  for (const auto& [score, hit] : scored) {
    hit ? ++tp : ++fp;
    c.scores.push_back(score);
    c.tp.push_back(tp);
    c.fp.push_back(fp);
    c.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    c.recall.push_back(num_gt > 0 ? static_cast<double>(tp) / static_cast<double>(num_gt) : 0.0);
  }
  return c;
}

double average_precision(const PrCurve& c) {
  if (c.num_gt == 0) throw NoGroundTruth("average precision of a class without ground truth");
  const std::size_t n = c.precision.size();
  std::vector<double> envelope(c.precision);
  for (std::size_t i = n; i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (c.recall[i] > prev_recall) {
      ap += (c.recall[i] - prev_recall) * envelope[i];
      prev_recall = c.recall[i];
    }
  }
  return ap;
}

double mean_ap(const std::vector<std::optional<double>>& per_class) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& ap : per_class) {
    if (!ap) continue;
    total += *ap;
    ++count;
  }
  if (count == 0) throw NoGroundTruth("no class has ground truth");
  return total / static_cast<double>(count);
}

EvalResult evaluate(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<GroundTruth>& gts, std::size_t num_classes,
                    double iou_thresh) {
  if (dets.size() != gts.size()) throw ShapeMismatch("one detection list per image expected");
  std::vector<std::vector<std::pair<double, bool>>> scored(num_classes);
  std::vector<std::size_t> num_gt(num_classes, 0);
  for (std::size_t img = 0; img < dets.size(); ++img) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      std::vector<Box> gt_boxes, det_boxes;
      std::vector<double> scores;
      for (std::size_t g = 0; g < gts[img].boxes.size(); ++g) {
        if (gts[img].classes[g] == static_cast<int>(k)) gt_boxes.push_back(gts[img].boxes[g]);
      }
      for (const auto& d : dets[img]) {
        if (d.cls != static_cast<int>(k)) continue;
        det_boxes.push_back(d.box);
        scores.push_back(d.score);
      }
      num_gt[k] += gt_boxes.size();
      const auto hits = match_detections(det_boxes, gt_boxes, iou_thresh);
      for (std::size_t i = 0; i < hits.size(); ++i) scored[k].emplace_back(scores[i], hits[i]);
    }
  }
  EvalResult r;
  for (std::size_t k = 0; k < num_classes; ++k) {
    r.curves.push_back(pr_curve(std::move(scored[k]), num_gt[k]));
    r.ap.push_back(num_gt[k] > 0 ? std::optional(average_precision(r.curves.back()))
                                 : std::nullopt);
  }
  r.map = mean_ap(r.ap);
  return r;
}

void write_pr_csv(std::ostream& out, const EvalResult& result) {
  out << "class,score,precision,recall\n" << std::setprecision(17);
  for (std::size_t k = 0; k < result.curves.size(); ++k) {
    const PrCurve& c = result.curves[k];
    for (std::size_t i = 0; i < c.scores.size(); ++i) {
      out << k << ',' << c.scores[i] << ',' << c.precision[i] << ',' << c.recall[i] << '\n';
    }
  }
}

}  // namespace afd
