// SPDX-License-Identifier: Apache-2.0
//
// Assembles the distillation objective from teacher and student detector
// outputs: attention masks per level and image, the feature, attention,
// global and head terms, and their weighted total.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "afd/attention.hpp"
#include "afd/checkpoint.hpp"
#include "afd/detector.hpp"
#include "afd/gcontext.hpp"
#include "afd/losses.hpp"

namespace afd {

/// Trainable modules that exist only for distillation: one channel adapter
/// per FPN level and the shared global-context block.
struct DistillModules {
  std::vector<Adapter> adapters;
  GcBlockParams gc;

  static DistillModules init(std::size_t student_channels, std::size_t teacher_channels,
                             std::size_t levels, std::size_t gc_reduction,
                             double glob_weight, std::uint64_t seed);
  std::vector<Tensor> parameters() const;
  void add_to(Container& c) const;
};

struct ObjectiveConfig {
  MaskConfig mask;
  LossWeights weights;
  /// Keep masks on the tape so gradients flow through them.
  bool mask_grad = false;
};

/// masks[level][image] from teacher features and adapted student features.
/// With `proposals`, each image's region is the union of its proposals.
BatchMasks compute_masks(const FpnFeatures& teacher, const FpnFeatures& adapted_student,
                         const ProposalSet* proposals, const MaskConfig& cfg,
                         bool mask_grad);

struct DistillTerms {
  LossComponents parts;
  Tensor total;  // weighted sum including parts.rpn
};

/// `rpn` is the student's objectness/regression loss, shared with the task
/// loss. The attention and global terms compare batch-normalized features.
DistillTerms distill_objective(const DetectorOutput& teacher, const DetectorOutput& student,
                               const DistillModules& modules,
                               const std::vector<AnchorLevel>& levels, const Tensor& rpn,
                               const ObjectiveConfig& cfg,
                               const ProposalSet* proposals = nullptr);

}  // namespace afd
