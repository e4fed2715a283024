// SPDX-License-Identifier: Apache-2.0
#include "afd/optim.hpp"

#include <cmath>

#include "afd/error.hpp"

namespace afd {

double lr_at_epoch(double base, const std::vector<std::size_t>& decay_epochs,
                   double factor, std::size_t epoch) {
  double lr = base;
  for (std::size_t d : decay_epochs) {
    if (d <= epoch) lr *= factor;
  }
  return lr;
}

Sgd::Sgd(std::vector<Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) {
    if (!p.requires_grad() || !p.is_leaf()) {
      throw DetachedTensor("optimizer parameters must be leaves that require grad");
    }
    velocity_.emplace_back(p.numel(), 0.0);
  }
}

double Sgd::step(double lr, double clip) {
  std::vector<std::vector<double>> grads;
  double sq = 0.0;
  for (const auto& p : params_) {
    grads.push_back(p.grad());
    for (double g : grads.back()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw DomainError("non-finite gradient");
  const double factor = clip > 0.0 && norm > clip ? clip / norm : 1.0;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& w = params_[k].mutable_data();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + grads[k][i] * factor + weight_decay_ * w[i];
      w[i] -= lr * v[i];
    }
  }
  return norm;
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace afd
