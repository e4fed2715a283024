// SPDX-License-Identifier: Apache-2.0
#include "afd/losses.hpp"

#include <cmath>

#include "afd/error.hpp"
#include "afd/featnorm.hpp"

namespace afd {
namespace {

void check_levels(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeMismatch(std::string(what) + ": level counts " +
                        std::to_string(a) + " vs " + std::to_string(b));
  }
}

void check_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(what) + ": " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
  }
}

Tensor stack(const std::vector<Tensor>& parts) {
  std::vector<Tensor> rows;
  rows.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s{1};
    s.insert(s.end(), p.shape().begin(), p.shape().end());
    rows.push_back(reshape(p, s));
  }
  return rows.size() == 1 ? rows.front() : concat(rows, 0);
}

// Euclidean norm of each image's slice, [N].
Tensor per_image_norm(const Tensor& diff) {
  std::vector<std::size_t> axes;
  for (std::size_t d = 1; d < diff.rank(); ++d) axes.push_back(d);
  return sqrt_clamped(sum(square(diff), axes));
}

Tensor clamp_tensor(const Tensor& x, double lo, double hi) {
  return minimum(maximum(x, Tensor::scalar(lo)), Tensor::scalar(hi));
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {nu, upsilon, beta, lambda1, lambda2}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DomainError("loss weights must be finite and nonnegative");
    }
  }
}

Tensor Adapter::operator()(const Tensor& x) const {
  return conv2d(x, weight, bias, 1, 0);
}

Adapter Adapter::identity(std::size_t channels) {
  std::vector<double> w(channels * channels, 0.0);
  for (std::size_t c = 0; c < channels; ++c) w[c * channels + c] = 1.0;
  return {Tensor({channels, channels, 1, 1}, std::move(w)),
          Tensor::zeros({channels})};
}

FpnFeatures adapt_features(const FpnFeatures& student,
                           const std::vector<Adapter>& adapters) {
  check_levels(student.size(), adapters.size(), "adapt_features");
  FpnFeatures out;
  for (std::size_t l = 0; l < student.size(); ++l) {
    out.push_back(adapters[l](student[l]));
  }
  return out;
}

Tensor stack_spatial(const std::vector<LevelMasks>& masks) {
  std::vector<Tensor> parts;
  for (const auto& m : masks) parts.push_back(m.spatial);
  return stack(parts);
}

Tensor stack_channel(const std::vector<LevelMasks>& masks) {
  std::vector<Tensor> parts;
  for (const auto& m : masks) parts.push_back(m.channel);
  return stack(parts);
}

Tensor feature_distill_loss(const FpnFeatures& teacher,
                            const FpnFeatures& adapted_student,
                            const BatchMasks& masks) {
  check_levels(teacher.size(), adapted_student.size(), "feature_distill_loss");
  check_levels(teacher.size(), masks.size(), "feature_distill_loss masks");
  Tensor total = Tensor::scalar(0.0);
  std::size_t batch = 0;
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    check_same(teacher[l], adapted_student[l], "feature_distill_loss");
    const Shape& shape = teacher[l].shape();
    batch = shape[0];
    check_levels(masks[l].size(), batch, "feature_distill_loss images");
    Tensor nt = normalize_features(teacher[l].detach());
    Tensor ns = normalize_features(adapted_student[l]);
    Tensor weight = expand(stack_spatial(masks[l]), shape, {1}) *
                    expand(stack_channel(masks[l]), shape, {2, 3});
    Tensor inner = sum(square(ns - nt) * weight, {1, 2, 3});
    total = total + sum_all(sqrt_clamped(inner));
  }
  return batch > 1 ? total * (1.0 / static_cast<double>(batch)) : total;
}

Tensor attn_feature_ch(const Tensor& x) { return mean(x, {1}); }

Tensor attn_feature_sp(const Tensor& x) { return mean(x, {2, 3}); }

Tensor feature_attn_loss(const FpnFeatures& teacher, const FpnFeatures& student,
                         std::size_t instance_size) {
  check_levels(teacher.size(), student.size(), "feature_attn_loss");
  Tensor total = Tensor::scalar(0.0);
  std::size_t batch = 0;
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    check_same(teacher[l], student[l], "feature_attn_loss");
    batch = teacher[l].dim(0);
    Tensor t = teacher[l].detach();
    Tensor dch = attn_feature_ch(student[l]) - attn_feature_ch(t);
    const auto patches = split_patches(dch, instance_size);
    Tensor local = per_image_norm(patches.front());
    for (std::size_t p = 1; p < patches.size(); ++p) {
      local = local + per_image_norm(patches[p]);
    }
    if (patches.size() > 1) local = local * (1.0 / static_cast<double>(patches.size()));
    Tensor cha = (per_image_norm(dch) + local) * 0.5;
    Tensor spa = per_image_norm(attn_feature_sp(student[l]) - attn_feature_sp(t));
    total = total + sum_all(cha + spa);
  }
  return batch > 1 ? total * (1.0 / static_cast<double>(batch)) : total;
}

Tensor cls_head_loss(const std::vector<Tensor>& student_logits,
                     const std::vector<Tensor>& teacher_logits,
                     std::size_t num_anchors, const BatchMasks& masks) {
  check_levels(student_logits.size(), teacher_logits.size(), "cls_head_loss");
  check_levels(student_logits.size(), masks.size(), "cls_head_loss masks");
  Tensor total = Tensor::scalar(0.0);
  std::size_t batch = 0;
  for (std::size_t l = 0; l < student_logits.size(); ++l) {
    const Tensor& s = student_logits[l];
    check_same(s, teacher_logits[l], "cls_head_loss");
    if (num_anchors == 0 || s.dim(1) % num_anchors != 0) {
      throw ShapeMismatch("cls_head_loss: channels not divisible by anchors");
    }
    batch = s.dim(0);
    const std::size_t k = s.dim(1) / num_anchors;
    Tensor weight = stack_spatial(masks[l]);
    if (weight.shape() != Shape{batch, s.dim(2), s.dim(3)}) {
      throw ShapeMismatch("cls_head_loss: mask " + shape_str(weight.shape()) +
                          " vs logits " + shape_str(s.shape()));
    }
    Tensor t = teacher_logits[l].detach();
    for (std::size_t a = 0; a < num_anchors; ++a) {
      Tensor log_ps = log_softmax(slice(s, 1, a * k, (a + 1) * k), {1});
      Tensor pt = softmax(slice(t, 1, a * k, (a + 1) * k), {1});
      Tensor ce = neg(reshape(sum(pt * log_ps, {1}), weight.shape()));
      total = total + sum_all(ce * weight);
    }
  }
  return batch > 1 ? total * (1.0 / static_cast<double>(batch)) : total;
}

DecodedBoxes decode_level(const Tensor& offsets, const AnchorLevel& anchors,
                          std::size_t a) {
  const std::size_t n = offsets.dim(0), h = offsets.dim(2), w = offsets.dim(3);
  if (h != anchors.height || w != anchors.width ||
      offsets.dim(1) != 4 * anchors.per_cell()) {
    throw ShapeMismatch("offsets " + shape_str(offsets.shape()) +
                        " do not match the anchor grid");
  }
  std::vector<double> cx(n * h * w), cy(n * h * w);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        const Box box = anchors.box(i, j, a);
        cx[(b * h + i) * w + j] = 0.5 * (box.x_min + box.x_max);
        cy[(b * h + i) * w + j] = 0.5 * (box.y_min + box.y_max);
      }
    }
  }
  const double size = anchors.sizes[a];
  Shape shape{n, 1, h, w};
  Tensor acx(shape, std::move(cx)), acy(shape, std::move(cy));
  Tensor ccx = acx + slice(offsets, 1, 4 * a, 4 * a + 1) * size;
  Tensor ccy = acy + slice(offsets, 1, 4 * a + 1, 4 * a + 2) * size;
  Tensor half_w = exp(clamp_tensor(slice(offsets, 1, 4 * a + 2, 4 * a + 3),
                                   -kMaxLogScale, kMaxLogScale)) * (0.5 * size);
  Tensor half_h = exp(clamp_tensor(slice(offsets, 1, 4 * a + 3, 4 * a + 4),
                                   -kMaxLogScale, kMaxLogScale)) * (0.5 * size);
  return {ccx - half_w, ccy - half_h, ccx + half_w, ccy + half_h};
}

Tensor box_iou(const DecodedBoxes& a, const DecodedBoxes& b) {
  Tensor iw = relu(minimum(a.x_max, b.x_max) - maximum(a.x_min, b.x_min));
  Tensor ih = relu(minimum(a.y_max, b.y_max) - maximum(a.y_min, b.y_min));
  Tensor inter = iw * ih;
  Tensor area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  Tensor area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  return inter / (area_a + area_b - inter);
}

Tensor loc_head_loss(const std::vector<Tensor>& student_offsets,
                     const std::vector<Tensor>& teacher_offsets,
                     const std::vector<AnchorLevel>& anchors,
                     const BatchMasks& masks) {
  check_levels(student_offsets.size(), teacher_offsets.size(), "loc_head_loss");
  check_levels(student_offsets.size(), anchors.size(), "loc_head_loss anchors");
  check_levels(student_offsets.size(), masks.size(), "loc_head_loss masks");
  Tensor total = Tensor::scalar(0.0);
  std::size_t batch = 0;
  for (std::size_t l = 0; l < student_offsets.size(); ++l) {
    const Tensor& s = student_offsets[l];
    check_same(s, teacher_offsets[l], "loc_head_loss");
    batch = s.dim(0);
    Tensor weight = reshape(stack_spatial(masks[l]), {batch, 1, s.dim(2), s.dim(3)});
    Tensor t = teacher_offsets[l].detach();
    for (std::size_t a = 0; a < anchors[l].per_cell(); ++a) {
      Tensor overlap = box_iou(decode_level(s, anchors[l], a),
                               decode_level(t, anchors[l], a));
      total = total + sum_all((1.0 - overlap) * weight);
    }
  }
  return batch > 1 ? total * (1.0 / static_cast<double>(batch)) : total;
}

Tensor rpn_loss(const Tensor& objectness, const Tensor& offsets,
                const std::vector<int>& labels, const Tensor& target_offsets,
                double lambda1, double lambda2) {
  const std::size_t m = labels.size();
  if (objectness.shape() != Shape{m} || offsets.shape() != Shape{m, 4} ||
      target_offsets.shape() != Shape{m, 4}) {
    throw ShapeMismatch("rpn_loss expects objectness [M], offsets [M,4]");
  }
  std::vector<double> sampled(m, 0.0), target(m, 0.0), positive(m * 4, 0.0);
  std::size_t n_cls = 0, n_reg = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] == kIgnore) continue;
    sampled[i] = 1.0;
    ++n_cls;
    if (labels[i] == kPositive) {
      target[i] = 1.0;
      for (std::size_t k = 0; k < 4; ++k) positive[i * 4 + k] = 1.0;
      ++n_reg;
    }
  }
  if (n_cls == 0) throw NoSampledAnchors("rpn_loss: every anchor is ignored");
  Tensor z = objectness;
  Tensor bce = softplus(z) - z * Tensor({m}, std::move(target));
  Tensor cls = sum_all(bce * Tensor({m}, std::move(sampled))) *
               (lambda1 / static_cast<double>(n_cls));
  Tensor reg = sum_all(smooth_l1(offsets - target_offsets.detach()) *
                       Tensor({m, 4}, std::move(positive))) *
               (lambda2 / static_cast<double>(std::max<std::size_t>(n_reg, 1)));
  return cls + reg;
}

Tensor total_loss(const LossComponents& c, const LossWeights& w) {
  for (const Tensor* t : {&c.fd, &c.fa, &c.glob, &c.cls_h, &c.loc_h, &c.rpn}) {
    if (t->numel() != 1) throw NotScalar("loss component is not a scalar");
    if (!std::isfinite(t->item())) throw NonFiniteComponent("loss component");
  }
  return c.fd * w.nu + c.fa * w.upsilon + c.glob + (c.cls_h + c.loc_h) * w.beta + c.rpn;
}

}  // namespace afd
