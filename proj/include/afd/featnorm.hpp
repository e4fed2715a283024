// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "afd/tensor.hpp"

namespace afd {

inline constexpr double kNormEpsilon = 1e-5;

/// Per-channel statistics over every batch and spatial position.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> variance;  // biased (divides by m)
  double epsilon = kNormEpsilon;
};

/// Computes NormStats for x[N,C,H,W]; throws DegenerateBatch when N*H*W < 2.
NormStats norm_stats(const Tensor& x, double epsilon = kNormEpsilon);

/// (x - mean_c) / sqrt(var_c + eps) with one (mean, var) pair per channel,
/// shared by all locations. Differentiable through the statistics.
Tensor normalize_features(const Tensor& x, double epsilon = kNormEpsilon);

}  // namespace afd
