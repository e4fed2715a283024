// SPDX-License-Identifier: Apache-2.0
#include "afd/trainer.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "afd/error.hpp"
#include "afd/objective.hpp"
#include "afd/optim.hpp"
#include "afd/postprocess.hpp"
#include "afd/rng.hpp"
#include "afd/targets.hpp"
#include "json.hpp"

namespace afd {
namespace {

using nlohmann::ordered_json;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1))]);
  }
  return order;
}

std::vector<std::vector<std::size_t>> batches(const std::vector<std::size_t>& order,
                                              std::size_t batch_size) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < order.size(); b += batch_size) {
    out.emplace_back(order.begin() + b, order.begin() + std::min(order.size(), b + batch_size));
  }
  return out;
}

std::vector<AnchorTargets> all_targets(const std::vector<Scene>& scenes,
                                       const std::vector<Box>& anchors) {
  std::vector<AnchorTargets> out;
  for (const auto& s : scenes) out.push_back(assign_targets(anchors, ground_truth(s)));
  return out;
}

template <typename T>
std::vector<T> pick(const std::vector<T>& xs, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  for (std::size_t i : idx) out.push_back(xs[i]);
  return out;
}

void set_common_metadata(Container& c, const RunConfig& cfg, std::size_t epochs,
                         const char* kind) {
  c.metadata["kind"] = kind;
  c.metadata["config_hash"] = cfg.hash();
  c.metadata["seed"] = std::to_string(cfg.seed);
  c.metadata["epoch"] = std::to_string(epochs);
  c.metadata["data_train"] = std::to_string(cfg.data.train);
  c.metadata["data_val"] = std::to_string(cfg.data.val);
}

struct Accumulator {
  EpochMetrics sum;
  std::size_t steps = 0;

  void add(double task, const LossComponents* parts, double rpn, double total) {
    sum.task_loss += task;
    sum.l_rpn += rpn;
    sum.total += total;
    if (parts) {
      sum.l_fd += parts->fd.item();
      sum.l_fa += parts->fa.item();
      sum.l_glob += parts->glob.item();
      sum.l_cls_h += parts->cls_h.item();
      sum.l_loc_h += parts->loc_h.item();
    }
    ++steps;
  }

  EpochMetrics mean(std::size_t epoch, double lr, double val_map) const {
    EpochMetrics m = sum;
    const double k = 1.0 / static_cast<double>(std::max<std::size_t>(steps, 1));
    for (double* v : {&m.task_loss, &m.l_fd, &m.l_fa, &m.l_glob, &m.l_cls_h, &m.l_loc_h,
                      &m.l_rpn, &m.total}) {
      *v *= k;
    }
    m.epoch = epoch;
    m.lr = lr;
    m.val_map = val_map;
    return m;
  }
};

}  // namespace

std::string to_json_line(const EpochMetrics& m) {
  ordered_json j;
  j["epoch"] = m.epoch;
  j["lr"] = m.lr;
  j["task_loss"] = m.task_loss;
  j["l_fd"] = m.l_fd;
  j["l_fa"] = m.l_fa;
  j["l_glob"] = m.l_glob;
  j["l_cls_h"] = m.l_cls_h;
  j["l_loc_h"] = m.l_loc_h;
  j["l_rpn"] = m.l_rpn;
  j["total"] = m.total;
  j["val_map"] = m.val_map;
  return j.dump();
}

EpochMetrics metrics_from_json(const std::string& line) {
  try {
    const auto j = ordered_json::parse(line);
    EpochMetrics m;
    m.epoch = j.at("epoch").get<std::size_t>();
    m.lr = j.at("lr").get<double>();
    m.task_loss = j.at("task_loss").get<double>();
    m.l_fd = j.at("l_fd").get<double>();
    m.l_fa = j.at("l_fa").get<double>();
    m.l_glob = j.at("l_glob").get<double>();
    m.l_cls_h = j.at("l_cls_h").get<double>();
    m.l_loc_h = j.at("l_loc_h").get<double>();
    m.l_rpn = j.at("l_rpn").get<double>();
    m.total = j.at("total").get<double>();
    m.val_map = j.at("val_map").get<double>();
    return m;
  } catch (const ordered_json::exception& e) {
    throw IoError(std::string("malformed metrics line: ") + e.what());
  }
}

Split split_dataset(const std::vector<Scene>& scenes, std::size_t train, std::size_t val) {
  if (scenes.size() < train + val) {
    throw ConfigError("dataset holds " + std::to_string(scenes.size()) + " scenes, config needs " +
                      std::to_string(train + val));
  }
  return {{scenes.begin(), scenes.begin() + train},
          {scenes.begin() + train, scenes.begin() + train + val}};
}

EvalResult evaluate_detector(const DetectorSpec& spec, const DetectorParams& params,
                             const std::vector<Scene>& scenes, std::size_t batch_size) {
  const auto anchors = flatten_anchors(spec.anchor_levels());
  std::vector<std::vector<Detection>> dets;
  std::vector<GroundTruth> gts;
  for (std::size_t b = 0; b < scenes.size(); b += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = b; i < std::min(scenes.size(), b + batch_size); ++i) idx.push_back(i);
    const auto out = forward(spec, params, batch_images(scenes, idx, spec.image_size));
    auto batch = detect(flatten_heads(out.heads, spec.num_anchors()), anchors, spec.num_classes,
                        static_cast<double>(spec.image_size), DecodeConfig{});
    for (auto& d : batch) dets.push_back(std::move(d));
  }
  for (const auto& s : scenes) gts.push_back(ground_truth(s));
  return evaluate(dets, gts, spec.num_classes);
}

TrainResult train_teacher(const RunConfig& cfg, const Split& data, const MetricsSink& sink) {
  cfg.validate();
  const DetectorSpec spec = cfg.teacher_spec();
  const OptimConfig& opt = cfg.teacher_optim;
  DetectorParams params = DetectorParams::init(spec, derive_seed(cfg.seed, "teacher"), true);
  Sgd sgd(params.parameters(), opt.momentum, opt.weight_decay);
  const auto anchors = flatten_anchors(spec.anchor_levels());
  const auto targets = all_targets(data.train, anchors);

  TrainResult result;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = lr_at_epoch(opt.lr, opt.decay_epochs, opt.decay_factor, epoch);
    Accumulator acc;
    const auto order = shuffled(data.train.size(), derive_seed(cfg.seed, "teacher-shuffle", epoch));
    for (const auto& idx : batches(order, opt.batch_size)) {
      const auto out = forward(spec, params, batch_images(data.train, idx, spec.image_size));
      const TaskLoss task = task_loss(flatten_heads(out.heads, spec.num_anchors()),
                                      pick(targets, idx), cfg.weights.lambda1,
                                      cfg.weights.lambda2);
      task.total.backward();
      sgd.step(lr, opt.grad_clip);
      sgd.zero_grad();
      acc.add(task.total.item(), nullptr, task.rpn.item(), task.total.item());
    }
    const double val_map = evaluate_detector(spec, params, data.val).map;
    result.history.push_back(acc.mean(epoch, lr, val_map));
    if (sink) sink(result.history.back());
  }
  params.add_to(result.checkpoint, "");
  spec_to_metadata(spec, result.checkpoint, "");
  set_common_metadata(result.checkpoint, cfg, opt.epochs, "teacher");
  return result;
}

LoadedDetector load_detector(const Container& ckpt) {
  const std::string& kind = ckpt.meta("kind");
  if (kind != "teacher" && kind != "student") {
    throw CheckpointMismatch("checkpoint kind '" + kind + "' holds no detector");
  }
  const DetectorSpec spec = spec_from_metadata(ckpt, "");
  return {spec, DetectorParams::from(ckpt, "", spec, false)};
}

TrainResult distill(const RunConfig& cfg, const Container& teacher_ckpt, const Split& data,
                    DistillMode mode, const MetricsSink& sink) {
  cfg.validate();
  if (teacher_ckpt.meta("kind") != "teacher") {
    throw CheckpointMismatch("distill needs a teacher checkpoint");
  }
  const DetectorSpec tspec = spec_from_metadata(teacher_ckpt, "");
  if (tspec.channels != cfg.teacher_channels || tspec.num_classes != cfg.data.num_classes) {
    throw CheckpointMismatch("teacher checkpoint does not match the config");
  }
  // Teacher leaves never require grad, so nothing it computes enters the tape.
  const DetectorParams teacher = DetectorParams::from(teacher_ckpt, "", tspec, false);

  const DetectorSpec spec = cfg.student_spec();
  const OptimConfig& opt = cfg.student_optim;
  const auto levels = spec.anchor_levels();
  const auto anchors = flatten_anchors(levels);
  const auto targets = all_targets(data.train, anchors);
  DetectorParams params = DetectorParams::init(spec, derive_seed(cfg.seed, "student"), true);
  const DistillModules modules =
      DistillModules::init(spec.channels, tspec.channels, levels.size(), cfg.gc_reduction,
                           cfg.glob_weight, derive_seed(cfg.seed, "distill"));
  std::vector<Tensor> trainable = params.parameters();
  if (mode == DistillMode::kAfd) {
    for (const auto& t : modules.parameters()) trainable.push_back(t);
  }
  Sgd sgd(trainable, opt.momentum, opt.weight_decay);

  std::vector<DetectorOutput> cached;
  ProposalSet proposals;
  if (mode == DistillMode::kAfd) {
    for (std::size_t b = 0; b < data.train.size(); b += opt.batch_size) {
      std::vector<std::size_t> idx;
      for (std::size_t i = b; i < std::min(data.train.size(), b + opt.batch_size); ++i) idx.push_back(i);
      const auto out = forward(tspec, teacher, batch_images(data.train, idx, tspec.image_size));
      for (std::size_t i = 0; i < idx.size(); ++i) cached.push_back(select_image(out, i));
    }
  }
  const ObjectiveConfig objective{cfg.mask, cfg.weights, cfg.mask_grad};
  const ProposalConfig proposal_cfg{cfg.proposal_top_n, ProposalConfig{}.iou_thresh};

  TrainResult result;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const double lr = lr_at_epoch(opt.lr, opt.decay_epochs, opt.decay_factor, epoch);
    Accumulator acc;
    const auto order = shuffled(data.train.size(), derive_seed(cfg.seed, "student-shuffle", epoch));
    for (const auto& idx : batches(order, opt.batch_size)) {
      const auto out = forward(spec, params, batch_images(data.train, idx, spec.image_size));
      const TaskLoss task = task_loss(flatten_heads(out.heads, spec.num_anchors()),
                                      pick(targets, idx), cfg.weights.lambda1,
                                      cfg.weights.lambda2);
      if (mode == DistillMode::kAfd) {
        std::vector<const DetectorOutput*> parts;
        for (std::size_t i : idx) parts.push_back(&cached[i]);
        const DetectorOutput t = stack_outputs(parts);
        const ProposalSet* region = nullptr;
        if (cfg.mask.use_proposal_mask) {
          proposals = proposals_from_teacher(flatten_heads(t.heads, tspec.num_anchors()), levels,
                                             static_cast<double>(spec.image_size), proposal_cfg);
          region = &proposals;
        }
        const DistillTerms terms =
            distill_objective(t, out, modules, levels, task.rpn, objective, region);
        // task.rpn already sits inside terms.total, so only the class term is added
        const Tensor loss = task.cls + terms.total;
        loss.backward();
        acc.add(task.total.item(), &terms.parts, task.rpn.item(), terms.total.item());
      } else {
        task.total.backward();
        acc.add(task.total.item(), nullptr, task.rpn.item(), task.rpn.item());
      }
      sgd.step(lr, opt.grad_clip);
      sgd.zero_grad();
    }
    const double val_map = evaluate_detector(spec, params, data.val).map;
    result.history.push_back(acc.mean(epoch, lr, val_map));
    if (sink) sink(result.history.back());
  }
  params.add_to(result.checkpoint, "");
  if (mode == DistillMode::kAfd) modules.add_to(result.checkpoint);
  spec_to_metadata(spec, result.checkpoint, "");
  set_common_metadata(result.checkpoint, cfg, opt.epochs, "student");
  result.checkpoint.metadata["mode"] = mode == DistillMode::kAfd ? "afd" : "baseline";
  result.checkpoint.metadata["teacher_hash"] = [&] {
    std::ostringstream h;
    h << std::hex << checksum(serialize(teacher_ckpt));
    return h.str();
  }();
  return result;
}

void write_report(const std::vector<std::string>& run_paths, std::ostream& out) {
  if (run_paths.empty()) throw ConfigError("report needs at least one run");
  std::vector<std::string> names;
  std::vector<std::map<std::size_t, EpochMetrics>> runs;
  std::set<std::size_t> epochs;
  for (const auto& path : run_paths) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    // "run.afdc.jsonl" -> "run"
    std::filesystem::path stem = std::filesystem::path(path).stem();
    if (stem.extension() == ".afdc") stem = stem.stem();
    names.push_back(stem.string());
    runs.emplace_back();
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const EpochMetrics m = metrics_from_json(line);
      runs.back()[m.epoch] = m;
      epochs.insert(m.epoch);
    }
  }
  out << "epoch";
  for (const auto& n : names) out << ',' << n << "_val_map," << n << "_total," << n << "_task_loss";
  out << '\n' << std::setprecision(17);
  for (std::size_t e : epochs) {
    out << e;
    for (const auto& run : runs) {
      auto it = run.find(e);
      if (it == run.end()) {
        out << ",,,";
      } else {
        out << ',' << it->second.val_map << ',' << it->second.total << ','
            << it->second.task_loss;
      }
    }
    out << '\n';
  }
}

}  // namespace afd
