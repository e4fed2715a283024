// SPDX-License-Identifier: Apache-2.0
#include "afd/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "afd/checkpoint.hpp"
#include "afd/error.hpp"
#include "json.hpp"

namespace afd {
namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.at(key).is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!j.at(key).is_number_unsigned()) throw ConfigError("");
    }
    out = j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

OptimConfig parse_optim(const json& j, const std::string& where) {
  check_keys(j, where, {"epochs", "batch_size", "lr", "momentum", "weight_decay",
                        "decay_epochs", "decay_factor", "grad_clip"});
  OptimConfig o;
  read(j, "epochs", o.epochs, where);
  read(j, "batch_size", o.batch_size, where);
  read(j, "lr", o.lr, where);
  read(j, "momentum", o.momentum, where);
  read(j, "weight_decay", o.weight_decay, where);
  read(j, "decay_epochs", o.decay_epochs, where);
  read(j, "decay_factor", o.decay_factor, where);
  read(j, "grad_clip", o.grad_clip, where);
  if (!j.contains("decay_epochs")) {
    // keep the 16/24 and 22/24 proportions for other epoch counts
    o.decay_epochs = {o.epochs * 16 / 24, o.epochs * 22 / 24};
  }
  return o;
}

json optim_json(const OptimConfig& o) {
  return {{"epochs", o.epochs},       {"batch_size", o.batch_size},
          {"lr", o.lr},               {"momentum", o.momentum},
          {"weight_decay", o.weight_decay}, {"decay_epochs", o.decay_epochs},
          {"decay_factor", o.decay_factor}, {"grad_clip", o.grad_clip}};
}

}  // namespace

void OptimConfig::validate(const char* name) const {
  const std::string n(name);
  if (epochs == 0) throw ConfigError(n + ".epochs must be positive");
  if (batch_size < 2) throw ConfigError(n + ".batch_size must be at least 2");
  if (!(lr > 0.0)) throw ConfigError(n + ".lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError(n + ".momentum must be in [0,1)");
  if (!(weight_decay >= 0.0)) throw ConfigError(n + ".weight_decay must be nonnegative");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw ConfigError(n + ".decay_factor must be in (0,1]");
  }
  if (!(grad_clip >= 0.0)) throw ConfigError(n + ".grad_clip must be nonnegative");
}

DetectorSpec RunConfig::teacher_spec() const {
  DetectorSpec s;
  s.channels = teacher_channels;
  s.num_classes = data.num_classes;
  return s;
}

DetectorSpec RunConfig::student_spec() const {
  DetectorSpec s = teacher_spec();
  s.channels = student_channels;
  return s;
}

SceneConfig RunConfig::scene_config() const {
  SceneConfig c;
  c.num_classes = data.num_classes;
  c.noise_sigma = data.noise;
  return c;
}

void RunConfig::validate() const {
  if (data.train == 0 || data.val == 0) throw ConfigError("data.train and data.val must be positive");
  scene_config().validate();
  teacher_spec().validate();
  student_spec().validate();
  if (student_channels >= teacher_channels) {
    throw ConfigError("student channels must be fewer than teacher channels");
  }
  mask.validate();
  for (const auto& lv : teacher_spec().anchor_levels()) {
    if (lv.height % mask.instance_size != 0 || lv.width % mask.instance_size != 0) {
      throw IndivisibleShape("instance size " + std::to_string(mask.instance_size) +
                             " does not tile a " + std::to_string(lv.height) + "x" +
                             std::to_string(lv.width) + " level");
    }
  }
  if (proposal_top_n == 0) throw ConfigError("mask.proposal_top_n must be positive");
  weights.validate();
  if (!(glob_weight >= 0.0)) throw ConfigError("loss.glob_weight must be nonnegative");
  if (gc_reduction == 0 || teacher_channels % gc_reduction != 0) {
    throw ConfigError("loss.gc_reduction must divide the teacher channel count");
  }
  teacher_optim.validate("teacher_optim");
  student_optim.validate("student_optim");
}

std::string RunConfig::to_json() const {
  json j = {
      {"seed", seed},
      {"data", {{"train", data.train}, {"val", data.val}, {"num_classes", data.num_classes},
                {"noise", data.noise}}},
      {"teacher", {{"channels", teacher_channels}}},
      {"student", {{"channels", student_channels}}},
      {"mask",
       {{"temperature", mask.temperature},
        {"instance_size", mask.instance_size},
        {"channel_scale", mask.channel_scale == ChannelMaskScale::kSpatialCount ? "hw" : "c"},
        {"spatial_scale", mask.spatial_scale == SpatialMaskScale::kChannelCount ? "c" : "hw"},
        {"use_proposal_mask", mask.use_proposal_mask},
        {"proposal_top_n", proposal_top_n},
        {"mask_grad", mask_grad}}},
      {"loss",
       {{"nu", weights.nu},
        {"upsilon", weights.upsilon},
        {"beta", weights.beta},
        {"lambda1", weights.lambda1},
        {"lambda2", weights.lambda2},
        {"glob_weight", glob_weight},
        {"gc_reduction", gc_reduction}}},
      {"teacher_optim", optim_json(teacher_optim)},
      {"student_optim", optim_json(student_optim)}};
  return j.dump();
}

std::string RunConfig::hash() const {
  const std::string text = to_json();
  const auto h = checksum({reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  check_keys(j, "config", {"seed", "data", "teacher", "student", "mask", "loss",
                           "teacher_optim", "student_optim"});
  RunConfig c;
  read(j, "seed", c.seed, "config");
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, "data", {"train", "val", "num_classes", "noise"});
    read(d, "train", c.data.train, "data");
    read(d, "val", c.data.val, "data");
    read(d, "num_classes", c.data.num_classes, "data");
    read(d, "noise", c.data.noise, "data");
  }
  if (j.contains("teacher")) {
    check_keys(j["teacher"], "teacher", {"channels"});
    read(j["teacher"], "channels", c.teacher_channels, "teacher");
  }
  if (j.contains("student")) {
    check_keys(j["student"], "student", {"channels"});
    read(j["student"], "channels", c.student_channels, "student");
  }
  if (j.contains("loss")) {
    const json& l = j["loss"];
    check_keys(l, "loss", {"stage", "nu", "upsilon", "beta", "lambda1", "lambda2",
                           "glob_weight", "gc_reduction"});
    std::string stage = "one";
    read(l, "stage", stage, "loss");
    if (stage == "two") {
      c.weights = LossWeights::two_stage();
      c.mask.temperature = kTwoStageTemperature;
    } else if (stage != "one") {
      throw ConfigError("loss.stage must be \"one\" or \"two\"");
    }
    read(l, "nu", c.weights.nu, "loss");
    read(l, "upsilon", c.weights.upsilon, "loss");
    read(l, "beta", c.weights.beta, "loss");
    read(l, "lambda1", c.weights.lambda1, "loss");
    read(l, "lambda2", c.weights.lambda2, "loss");
    read(l, "glob_weight", c.glob_weight, "loss");
    read(l, "gc_reduction", c.gc_reduction, "loss");
  }
  if (j.contains("mask")) {
    const json& m = j["mask"];
    check_keys(m, "mask", {"temperature", "instance_size", "channel_scale", "spatial_scale",
                           "use_proposal_mask", "proposal_top_n", "mask_grad"});
    read(m, "temperature", c.mask.temperature, "mask");
    read(m, "instance_size", c.mask.instance_size, "mask");
    std::string cs = "hw", ss = "c";
    read(m, "channel_scale", cs, "mask");
    read(m, "spatial_scale", ss, "mask");
    if (cs != "hw" && cs != "c") throw ConfigError("mask.channel_scale must be \"hw\" or \"c\"");
    if (ss != "hw" && ss != "c") throw ConfigError("mask.spatial_scale must be \"hw\" or \"c\"");
    c.mask.channel_scale = cs == "hw" ? ChannelMaskScale::kSpatialCount : ChannelMaskScale::kChannelCount;
    c.mask.spatial_scale = ss == "c" ? SpatialMaskScale::kChannelCount : SpatialMaskScale::kSpatialCount;
    read(m, "use_proposal_mask", c.mask.use_proposal_mask, "mask");
    read(m, "proposal_top_n", c.proposal_top_n, "mask");
    read(m, "mask_grad", c.mask_grad, "mask");
  }
  if (j.contains("teacher_optim")) c.teacher_optim = parse_optim(j["teacher_optim"], "teacher_optim");
  if (j.contains("student_optim")) c.student_optim = parse_optim(j["student_optim"], "student_optim");
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

}  // namespace afd
