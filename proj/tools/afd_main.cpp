// SPDX-License-Identifier: Apache-2.0
//
// afd: data generation, teacher training, distillation, evaluation,
// gradient checks and reports.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "afd/checkpoint.hpp"
#include "afd/config.hpp"
#include "afd/error.hpp"
#include "afd/gradcheck_suites.hpp"
#include "afd/scene.hpp"
#include "afd/trainer.hpp"
#include "json.hpp"

namespace {

using namespace afd;

std::string hex(std::uint64_t v) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << v;
  return out.str();
}

// Writes metrics to stdout and, line-buffered, to the metrics file.
MetricsSink metrics_writer(std::ofstream& file) {
  return [&file](const EpochMetrics& m) {
    const std::string line = to_json_line(m);
    std::cout << line << '\n' << std::flush;
    file << line << '\n' << std::flush;
  };
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

Split load_split(const RunConfig& cfg, const std::string& data) {
  return split_dataset(dataset_from_container(load_container(data)), cfg.data.train, cfg.data.val);
}

int cmd_gen_data(std::uint64_t seed, std::size_t count, std::size_t num_classes, double noise,
                 const std::string& out) {
  SceneConfig cfg;
  cfg.num_classes = num_classes;
  cfg.noise_sigma = noise;
  Container c = dataset_to_container(gen_dataset(seed, count, cfg), cfg);
  c.metadata["seed"] = std::to_string(seed);
  const auto bytes = serialize(c);
  save_container(c, out);
  std::cout << "scenes " << count << " checksum " << hex(checksum(bytes)) << '\n';
  return 0;
}

int cmd_train_teacher(const std::string& config, const std::string& data, const std::string& out,
                      std::string metrics) {
  const RunConfig cfg = load_config(config);
  if (metrics.empty()) metrics = out + ".jsonl";
  auto file = open_out(metrics);
  const TrainResult r = train_teacher(cfg, load_split(cfg, data), metrics_writer(file));
  save_container(r.checkpoint, out);
  return 0;
}

int cmd_distill(const std::string& config, const std::string& teacher, const std::string& data,
                const std::string& out, const std::string& mode, std::string metrics) {
  const RunConfig cfg = load_config(config);
  if (mode != "afd" && mode != "baseline") throw ConfigError("--mode must be afd or baseline");
  if (metrics.empty()) metrics = out + ".jsonl";
  auto file = open_out(metrics);
  const TrainResult r = distill(cfg, load_container(teacher), load_split(cfg, data),
                                mode == "afd" ? DistillMode::kAfd : DistillMode::kBaseline,
                                metrics_writer(file));
  save_container(r.checkpoint, out);
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, std::string pr_out) {
  const Container ckpt = load_container(ckpt_path);
  const LoadedDetector det = load_detector(ckpt);
  const auto scenes = dataset_from_container(load_container(data));
  const Split split = split_dataset(scenes, std::stoul(ckpt.meta("data_train")),
                                    std::stoul(ckpt.meta("data_val")));
  const EvalResult r = evaluate_detector(det.spec, det.params, split.val);
  nlohmann::ordered_json j;
  j["ap"] = nlohmann::json::array();
  for (const auto& ap : r.ap) {
    if (ap) {
      j["ap"].push_back(*ap);
    } else {
      j["ap"].push_back(nullptr);
    }
  }
  j["map"] = r.map;
  std::cout << j.dump() << '\n';
  if (pr_out.empty()) pr_out = ckpt_path + ".pr.csv";
  auto csv = open_out(pr_out);
  write_pr_csv(csv, r);
  return 0;
}

int cmd_gradcheck(const std::string& scope, std::uint64_t seed) {
  bool ok = true;
  for (const auto& r : gradcheck_scope(scope, seed)) {
    std::printf("%-28s %s  checked %zu  skipped %zu  max rel error %.3e\n", r.name.c_str(),
                r.passed ? "ok  " : "FAIL", r.checked, r.skipped, r.max_rel_error);
    ok = ok && r.passed;
  }
  if (!ok) throw GradCheckFailure("scope " + scope + " has violations");
  return 0;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out) {
  auto file = open_out(out);
  write_report(runs, file);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based feature distillation for a toy detector"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::size_t count = 640, num_classes = 3;
  double noise = 0.05;
  std::string out, config, data, teacher, mode = "afd", metrics, ckpt, scope = "ops", pr_out;
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("gen-data", "Generate a scene dataset");
  gen->add_option("--seed", seed)->required();
  gen->add_option("--count", count)->required();
  gen->add_option("--out", out)->required();
  gen->add_option("--num-classes", num_classes, "Shape classes (2..5)");
  gen->add_option("--noise", noise, "Clutter noise sigma");

  auto* tt = app.add_subcommand("train-teacher", "Train the teacher detector");
  tt->add_option("--config", config)->required();
  tt->add_option("--data", data)->required();
  tt->add_option("--out", out)->required();
  tt->add_option("--metrics", metrics, "Metrics file (default <out>.jsonl)");

  auto* ds = app.add_subcommand("distill", "Train a student from a frozen teacher");
  ds->add_option("--config", config)->required();
  ds->add_option("--teacher-ckpt", teacher)->required();
  ds->add_option("--data", data)->required();
  ds->add_option("--out", out)->required();
  ds->add_option("--mode", mode)->check(CLI::IsMember({"afd", "baseline"}));
  ds->add_option("--metrics", metrics, "Metrics file (default <out>.jsonl)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on its validation split");
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--pr-out", pr_out, "PR curve CSV (default <ckpt>.pr.csv)");

  auto* gc = app.add_subcommand("gradcheck", "Run finite-difference gradient checks");
  gc->add_option("--scope", scope)->check(CLI::IsMember({"ops", "losses", "pipeline"}));
  gc->add_option("--seed", seed);

  auto* rp = app.add_subcommand("report", "Merge metrics files into a comparison CSV");
  rp->add_option("--runs", runs)->required();
  rp->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_data(seed, count, num_classes, noise, out);
    if (*tt) return cmd_train_teacher(config, data, out, metrics);
    if (*ds) return cmd_distill(config, teacher, data, out, mode, metrics);
    if (*ev) return cmd_eval(ckpt, data, pr_out);
    if (*gc) return cmd_gradcheck(scope, seed);
    if (*rp) return cmd_report(runs, out);
  } catch (const afd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
