// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "afd/tensor.hpp"

namespace afd {

/// base * factor^(number of decay epochs <= epoch), epochs counted from 0.
double lr_at_epoch(double base, const std::vector<std::size_t>& decay_epochs,
                   double factor, std::size_t epoch);

/// SGD with heavy-ball momentum and L2 weight decay folded into the
/// gradient:  v = mu * v + (g + wd * w);  w -= lr * v.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double momentum, double weight_decay);

  /// Applies one update from the accumulated gradients. With clip > 0 the
  /// joint gradient is rescaled to L2 norm at most `clip` first. Returns the
  /// gradient norm before clipping.
  double step(double lr, double clip = 0.0);
  void zero_grad();

  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

}  // namespace afd
