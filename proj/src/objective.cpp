// SPDX-License-Identifier: Apache-2.0
#include "afd/objective.hpp"

#include <cmath>

#include "afd/error.hpp"
#include "afd/featnorm.hpp"
#include "afd/rng.hpp"

namespace afd {
namespace {

Tensor image_slice(const Tensor& x, std::size_t i) {
  return reshape(slice(x, 0, i, i + 1), {x.dim(1), x.dim(2), x.dim(3)});
}

}  // namespace

DistillModules DistillModules::init(std::size_t student_channels,
                                    std::size_t teacher_channels, std::size_t levels,
                                    std::size_t gc_reduction, double glob_weight,
                                    std::uint64_t seed) {
  DistillModules m;
  Rng rng(derive_seed(seed, "adapters"));
  const double sd = std::sqrt(1.0 / static_cast<double>(student_channels));
  for (std::size_t l = 0; l < levels; ++l) {
    std::vector<double> w(teacher_channels * student_channels);
    for (double& v : w) v = sd * rng.normal();
    m.adapters.push_back({Tensor({teacher_channels, student_channels, 1, 1}, std::move(w), true),
                          Tensor::zeros({teacher_channels}, true)});
  }
  m.gc = GcBlockParams::init(teacher_channels, gc_reduction, glob_weight,
                             derive_seed(seed, "gc"));
  return m;
}

std::vector<Tensor> DistillModules::parameters() const {
  std::vector<Tensor> out;
  for (const auto& a : adapters) {
    out.push_back(a.weight);
    out.push_back(a.bias);
  }
  for (const auto& t : gc.parameters()) out.push_back(t);
  return out;
}

void DistillModules::add_to(Container& c) const {
  for (std::size_t l = 0; l < adapters.size(); ++l) {
    c.add("adapter." + std::to_string(l) + ".weight", adapters[l].weight);
    c.add("adapter." + std::to_string(l) + ".bias", adapters[l].bias);
  }
  const char* names[] = {"context_w", "context_b", "reduce_w", "reduce_b",
                         "norm_gamma", "norm_beta", "expand_w", "expand_b"};
  const auto ps = gc.parameters();
  for (std::size_t k = 0; k < ps.size(); ++k) c.add(std::string("gc.") + names[k], ps[k]);
}

BatchMasks compute_masks(const FpnFeatures& teacher, const FpnFeatures& adapted_student,
                         const ProposalSet* proposals, const MaskConfig& cfg,
                         bool mask_grad) {
  if (teacher.size() != adapted_student.size()) {
    throw ShapeMismatch("compute_masks: level counts differ");
  }
  BatchMasks masks(teacher.size());
  for (std::size_t l = 0; l < teacher.size(); ++l) {
    const Tensor t = teacher[l].detach();
    const Tensor s = mask_grad ? adapted_student[l] : adapted_student[l].detach();
    if (t.shape() != s.shape()) throw ShapeMismatch("compute_masks: feature shapes differ");
    const std::size_t n = t.dim(0), h = t.dim(2), w = t.dim(3);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor region = proposals && cfg.use_proposal_mask
                                ? proposal_region_mask(proposals->levels.at(l).at(i), h, w)
                                : Tensor::full({h, w}, 1.0);
      masks[l].push_back(level_masks(image_slice(t, i), image_slice(s, i), region, cfg));
    }
  }
  return masks;
}

DistillTerms distill_objective(const DetectorOutput& teacher, const DetectorOutput& student,
                               const DistillModules& modules,
                               const std::vector<AnchorLevel>& levels, const Tensor& rpn,
                               const ObjectiveConfig& cfg, const ProposalSet* proposals) {
  const FpnFeatures adapted = adapt_features(student.features, modules.adapters);
  const BatchMasks masks = compute_masks(teacher.features, adapted, proposals, cfg.mask,
                                         cfg.mask_grad);
  FpnFeatures norm_t, norm_s;
  for (std::size_t l = 0; l < adapted.size(); ++l) {
    norm_t.push_back(normalize_features(teacher.features[l].detach()));
    norm_s.push_back(normalize_features(adapted[l]));
  }
  const std::size_t batch = adapted.front().dim(0);
  Tensor glob = Tensor::scalar(0.0);
  for (std::size_t l = 0; l < adapted.size(); ++l) {
    glob = glob + global_loss(norm_t[l], norm_s[l], modules.gc);
  }
  if (batch > 1) glob = glob * (1.0 / static_cast<double>(batch));

  DistillTerms out;
  out.parts.fd = feature_distill_loss(teacher.features, adapted, masks);
  out.parts.fa = feature_attn_loss(norm_t, norm_s, cfg.mask.instance_size);
  out.parts.glob = glob;
  out.parts.cls_h = cls_head_loss(student.heads.cls, teacher.heads.cls,
                                  levels.front().per_cell(), masks);
  out.parts.loc_h = loc_head_loss(student.heads.loc, teacher.heads.loc, levels, masks);
  out.parts.rpn = rpn;
  out.total = total_loss(out.parts, cfg.weights);
  return out;
}

}  // namespace afd
