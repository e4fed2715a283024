// SPDX-License-Identifier: Apache-2.0
#include "afd/gcontext.hpp"

#include <cmath>

#include "afd/error.hpp"
#include "afd/rng.hpp"

namespace afd {
namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::vector<double> v(numel_of(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& x : v) x = sd * rng.normal();
  return Tensor(std::move(shape), std::move(v), true);
}

void check_features(const Tensor& f, const GcBlockParams& p) {
  if (f.rank() != 4 || f.dim(1) != p.channels) {
    throw ShapeMismatch("gc block over " + std::to_string(p.channels) +
                        " channels got " + shape_str(f.shape()));
  }
}

}  // namespace

GcBlockParams GcBlockParams::init(std::size_t channels, std::size_t reduction,
                                  double loss_weight, std::uint64_t seed) {
  if (reduction == 0 || channels % reduction != 0) {
    throw ShapeMismatch("reduction " + std::to_string(reduction) +
                        " must divide " + std::to_string(channels));
  }
  const std::size_t hidden = channels / reduction;
  Rng rng(seed);
  GcBlockParams p;
  p.channels = channels;
  p.reduction = reduction;
  p.loss_weight = loss_weight;
  p.context_w = he_normal({1, channels, 1, 1}, channels, rng);
  p.context_b = Tensor::zeros({1}, true);
  p.reduce_w = he_normal({hidden, channels, 1, 1}, channels, rng);
  p.reduce_b = Tensor::zeros({hidden}, true);
  p.norm_gamma = Tensor::full({hidden}, 1.0, true);
  p.norm_beta = Tensor::zeros({hidden}, true);
  p.expand_w = Tensor::zeros({channels, hidden, 1, 1}, true);
  p.expand_b = Tensor::zeros({channels}, true);
  return p;
}

std::vector<Tensor> GcBlockParams::parameters() const {
  return {context_w, context_b, reduce_w, reduce_b,
          norm_gamma, norm_beta, expand_w, expand_b};
}

Tensor gc_context(const Tensor& f, const GcBlockParams& p) {
  check_features(f, p);
  const std::size_t n = f.dim(0), c = f.dim(1), hw = f.dim(2) * f.dim(3);
  Tensor logits = reshape(conv2d(f, p.context_w, p.context_b, 1, 0), {n, hw});
  Tensor attn = expand(softmax(logits, {1}), {n, c, hw}, {1});
  return sum(reshape(f, {n, c, hw}) * attn, {2});
}

Tensor gc_forward(const Tensor& f, const GcBlockParams& p) {
  const std::size_t n = f.dim(0), c = p.channels;
  const std::size_t hidden = c / p.reduction;
  Tensor ctx = reshape(gc_context(f, p), {n, c, 1, 1});
  Tensor t = reshape(relu(conv2d(ctx, p.reduce_w, p.reduce_b, 1, 0)), {n, hidden});

  Tensor centered = t - expand(mean(t, {1}), {n, hidden}, {1});
  Tensor var = mean(square(centered), {1});
  Tensor normed = centered / expand(sqrt(var + p.norm_epsilon), {n, hidden}, {1});
  normed = normed * expand(p.norm_gamma, {n, hidden}, {0}) +
           expand(p.norm_beta, {n, hidden}, {0});

  Tensor u = conv2d(reshape(normed, {n, hidden, 1, 1}), p.expand_w, p.expand_b, 1, 0);
  return f + expand(reshape(u, {n, c}), f.shape(), {2, 3});
}

Tensor global_loss(const Tensor& teacher, const Tensor& student,
                   const GcBlockParams& p) {
  if (teacher.shape() != student.shape()) {
    throw ShapeMismatch("global_loss: teacher " + shape_str(teacher.shape()) +
                        " vs student " + shape_str(student.shape()));
  }
  Tensor diff = gc_forward(teacher.detach(), p) - gc_forward(student, p);
  return sum_all(square(diff)) * p.loss_weight;
}

}  // namespace afd
