// SPDX-License-Identifier: Apache-2.0
#include "afd/targets.hpp"

#include "afd/error.hpp"
#include "afd/losses.hpp"

namespace afd {

GroundTruth ground_truth(const Scene& scene) {
  GroundTruth gt;
  for (const auto& o : scene.objects) {
    gt.boxes.push_back(o.box);
    gt.classes.push_back(o.cls);
  }
  return gt;
}

std::vector<int> AnchorTargets::objectness() const {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[i] = labels[i] < 0 ? kIgnore : (labels[i] > 0 ? kPositive : kNegative);
  }
  return out;
}

std::size_t AnchorTargets::positives() const {
  std::size_t n = 0;
  for (int l : labels) n += l > 0;
  return n;
}

AnchorTargets assign_targets(const std::vector<Box>& anchors, const GroundTruth& gt,
                             double pos_iou, double neg_iou) {
  if (gt.boxes.size() != gt.classes.size()) {
    throw ShapeMismatch("ground truth boxes and classes differ in length");
  }
  const std::size_t m = anchors.size(), g = gt.boxes.size();
  AnchorTargets t;
  t.labels.assign(m, 0);
  t.deltas.assign(m, BoxDelta{});
  t.matched.assign(m, kUnmatched);
  if (g == 0) return t;

  std::vector<double> overlap(m * g);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < g; ++k) overlap[i * g + k] = iou(anchors[i], gt.boxes[k]);
  }
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < g; ++k) {
      if (overlap[i * g + k] > overlap[i * g + best]) best = k;
    }
    const double v = overlap[i * g + best];
    if (v >= pos_iou) {
      t.matched[i] = best;
    } else if (v >= neg_iou) {
      t.labels[i] = -1;
    }
  }
  for (std::size_t k = 0; k < g; ++k) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i) {
      if (overlap[i * g + k] > overlap[best * g + k]) best = i;
    }
    if (overlap[best * g + k] > 0.0) t.matched[best] = k;
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (t.matched[i] == kUnmatched) continue;
    const std::size_t k = t.matched[i];
    t.labels[i] = gt.classes[k] + 1;
    t.deltas[i] = encode_box(gt.boxes[k], anchors[i]);
  }
  return t;
}

TaskLoss task_loss(const FlatOutputs& out, const std::vector<AnchorTargets>& targets,
                   double lambda1, double lambda2) {
  const std::size_t n = out.cls.dim(0), m = out.cls.dim(1), kc = out.cls.dim(2);
  if (targets.size() != n) throw ShapeMismatch("one target set per image expected");
  std::vector<double> onehot(n * m * kc, 0.0), deltas(n * m * 4, 0.0);
  std::vector<int> obj_labels;
  obj_labels.reserve(n * m);
  std::size_t sampled = 0;
  for (std::size_t b = 0; b < n; ++b) {
    const AnchorTargets& t = targets[b];
    if (t.labels.size() != m) throw ShapeMismatch("targets do not match anchor count");
    for (std::size_t i = 0; i < m; ++i) {
      const int label = t.labels[i];
      if (label >= 0) {
        if (static_cast<std::size_t>(label) >= kc) throw ShapeMismatch("label exceeds class outputs");
        onehot[(b * m + i) * kc + label] = 1.0;
        ++sampled;
      }
      const BoxDelta& d = t.deltas[i];
      double* dst = &deltas[(b * m + i) * 4];
      dst[0] = d.dx;
      dst[1] = d.dy;
      dst[2] = d.dw;
      dst[3] = d.dh;
    }
    const auto obj = t.objectness();
    obj_labels.insert(obj_labels.end(), obj.begin(), obj.end());
  }
  if (sampled == 0) throw NoSampledAnchors("task_loss: every anchor is ignored");
  Tensor cls = neg(sum_all(log_softmax(out.cls, {2}) * Tensor({n, m, kc}, std::move(onehot)))) *
               (1.0 / static_cast<double>(sampled));
  Tensor rpn = rpn_loss(reshape(out.obj, {n * m}), reshape(out.loc, {n * m, 4}), obj_labels,
                        Tensor({n * m, 4}, std::move(deltas)), lambda1, lambda2);
  return {cls + rpn, cls, rpn};
}

}  // namespace afd
