// SPDX-License-Identifier: Apache-2.0
//
// Run configuration, read from JSON with strict key checking. Every field is
// optional; absent fields keep the defaults below.
//
//   {
//     "seed": 0,
//     "data":    {"train": 512, "val": 128, "num_classes": 3, "noise": 0.05},
//     "teacher": {"channels": 32},
//     "student": {"channels": 8},
//     "mask":    {"temperature": 0.1, "instance_size": 4,
//                 "channel_scale": "hw" | "c", "spatial_scale": "c" | "hw",
//                 "use_proposal_mask": false, "proposal_top_n": 8,
//                 "mask_grad": false},
//     "loss":    {"stage": "one" | "two", "nu": ..., "upsilon": ..., "beta": ...,
//                 "lambda1": 1, "lambda2": 1, "glob_weight": 5e-4,
//                 "gc_reduction": 4},
//     "teacher_optim": {...}, "student_optim": {...}
//   }
//
// Optimizer blocks: epochs, batch_size, lr, momentum, weight_decay,
// decay_epochs (list), decay_factor, grad_clip (0 disables).
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "afd/attention.hpp"
#include "afd/detector.hpp"
#include "afd/losses.hpp"
#include "afd/postprocess.hpp"
#include "afd/scene.hpp"

namespace afd {

struct OptimConfig {
  std::size_t epochs = 24;
  std::size_t batch_size = 8;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<std::size_t> decay_epochs{16, 22};
  double decay_factor = 0.1;
  double grad_clip = 0.0;

  void validate(const char* name) const;
};

struct DataConfig {
  std::size_t train = 512;
  std::size_t val = 128;
  std::size_t num_classes = 3;
  double noise = 0.05;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataConfig data;
  std::size_t teacher_channels = kTeacherChannels;
  std::size_t student_channels = kStudentChannels;
  MaskConfig mask;
  std::size_t proposal_top_n = 8;
  bool mask_grad = false;
  LossWeights weights;
  double glob_weight = 5e-4;
  std::size_t gc_reduction = 4;
  OptimConfig teacher_optim;
  OptimConfig student_optim;

  DetectorSpec teacher_spec() const;
  DetectorSpec student_spec() const;
  SceneConfig scene_config() const;
  /// Throws ConfigError (or IndivisibleShape) on any inconsistency,
  /// including instance sizes that do not tile every FPN level.
  void validate() const;
  /// FNV-1a of the canonical JSON dump.
  std::string hash() const;
  std::string to_json() const;
};

RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace afd
