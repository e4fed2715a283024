// SPDX-License-Identifier: Apache-2.0
//
// Training loops for the teacher and the student, evaluation, and the
// per-epoch metrics record.
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "afd/checkpoint.hpp"
#include "afd/config.hpp"
#include "afd/detector.hpp"
#include "afd/eval.hpp"
#include "afd/scene.hpp"

namespace afd {

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double task_loss = 0.0;
  double l_fd = 0.0, l_fa = 0.0, l_glob = 0.0, l_cls_h = 0.0, l_loc_h = 0.0, l_rpn = 0.0;
  double total = 0.0;
  double val_map = 0.0;
};

/// One JSON object, fixed key order, 17 significant digits.
std::string to_json_line(const EpochMetrics& m);
EpochMetrics metrics_from_json(const std::string& line);

using MetricsSink = std::function<void(const EpochMetrics&)>;

struct Split {
  std::vector<Scene> train, val;
};

/// First `train` scenes for training, the next `val` for validation.
Split split_dataset(const std::vector<Scene>& scenes, std::size_t train, std::size_t val);

enum class DistillMode { kAfd, kBaseline };

struct TrainResult {
  std::vector<EpochMetrics> history;
  Container checkpoint;
};

/// Trains the teacher on the task loss alone.
TrainResult train_teacher(const RunConfig& cfg, const Split& data,
                          const MetricsSink& sink = {});

/// Trains a student from the frozen teacher checkpoint. Baseline and AFD runs
/// with the same config share initial weights and batch order.
TrainResult distill(const RunConfig& cfg, const Container& teacher_ckpt, const Split& data,
                    DistillMode mode, const MetricsSink& sink = {});

EvalResult evaluate_detector(const DetectorSpec& spec, const DetectorParams& params,
                             const std::vector<Scene>& scenes, std::size_t batch_size = 32);

/// Loads the detector stored in a teacher or student checkpoint.
struct LoadedDetector {
  DetectorSpec spec;
  DetectorParams params;
};
LoadedDetector load_detector(const Container& ckpt);

/// Merges metrics files into a CSV keyed by epoch with val_map, total and
/// task_loss columns per run (run name = file stem).
void write_report(const std::vector<std::string>& run_paths, std::ostream& out);

}  // namespace afd
