// SPDX-License-Identifier: Apache-2.0
//
// Global-context relation block:
//   B(F) = F + L3(LayerNorm(ReLU(L2(sum_j softmax_j(L1 F) F_j))))
// with L1: C->1, L2: C->C/r, L3: C/r->C, all 1x1 convolutions. L3 starts at
// zero so B is the identity until trained.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "afd/tensor.hpp"

namespace afd {

inline constexpr double kDefaultGlobalWeight = 5e-4;
inline constexpr std::size_t kDefaultGcReduction = 4;

struct GcBlockParams {
  Tensor context_w, context_b;      // L1: [1,C,1,1], [1]
  Tensor reduce_w, reduce_b;        // L2: [C/r,C,1,1], [C/r]
  Tensor norm_gamma, norm_beta;     // [C/r]
  Tensor expand_w, expand_b;        // L3: [C,C/r,1,1], [C]
  std::size_t channels = 0;
  std::size_t reduction = kDefaultGcReduction;
  double loss_weight = kDefaultGlobalWeight;
  double norm_epsilon = 1e-5;

  /// L1/L2 drawn from N(0, 2/fan_in), LayerNorm at (1, 0), L3 exactly zero.
  static GcBlockParams init(std::size_t channels, std::size_t reduction,
                            double loss_weight, std::uint64_t seed);

  std::vector<Tensor> parameters() const;
};

/// Per-image softmax-pooled context vector [N,C].
Tensor gc_context(const Tensor& features, const GcBlockParams& params);

Tensor gc_forward(const Tensor& features, const GcBlockParams& params);

/// Lambda * sum (B(F_T) - B(F_S))^2 with the teacher branch detached.
Tensor global_loss(const Tensor& teacher, const Tensor& student,
                   const GcBlockParams& params);

}  // namespace afd
