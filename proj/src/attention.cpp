// SPDX-License-Identifier: Apache-2.0
#include "afd/attention.hpp"

#include "afd/error.hpp"

namespace afd {
namespace {

void require_chw(const Tensor& x, const char* what) {
  if (x.rank() != 3) {
    throw ShapeMismatch(std::string(what) + " expects [C,H,W], got " +
                        shape_str(x.shape()));
  }
}

// Number of active cells; validates the region against x's spatial extent.
std::size_t region_count(const Tensor& x, const Tensor& region) {
  if (region.rank() != 2 || region.dim(0) != x.dim(1) ||
      region.dim(1) != x.dim(2)) {
    throw ShapeMismatch("region " + shape_str(region.shape()) +
                        " for features " + shape_str(x.shape()));
  }
  std::size_t count = 0;
  for (double v : region.data()) {
    if (v != 0.0 && v != 1.0) throw DomainError("region mask must be binary");
    if (v == 1.0) ++count;
  }
  return count;
}

bool is_full(const Tensor& region) {
  for (double v : region.data()) {
    if (v != 1.0) return false;
  }
  return true;
}

}  // namespace

void MaskConfig::validate() const {
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  if (instance_size < 1) throw DomainError("instance size must be >= 1");
}

Tensor proposal_region_mask(const ProposalList& boxes, std::size_t h,
                            std::size_t w) {
  if (boxes.empty()) return Tensor::full({h, w}, 1.0);
  std::vector<double> mask(h * w, 0.0);
  for (const auto& sb : boxes) {
    const Box& b = sb.box;
    if (!b.valid() || b.x_min < 0.0 || b.y_min < 0.0 ||
        b.x_max > static_cast<double>(w) || b.y_max > static_cast<double>(h)) {
      throw BoxOutOfBounds(b.str() + " on a " + std::to_string(h) + "x" +
                           std::to_string(w) + " grid");
    }
    for (std::size_t i = 0; i < h; ++i) {
      if (!(b.y_min < i + 1.0 && b.y_max > static_cast<double>(i))) continue;
      for (std::size_t j = 0; j < w; ++j) {
        if (b.x_min < j + 1.0 && b.x_max > static_cast<double>(j)) {
          mask[i * w + j] = 1.0;
        }
      }
    }
  }
  return Tensor({h, w}, std::move(mask));
}

double channel_scale_factor(const MaskConfig& cfg, std::size_t c,
                            std::size_t h, std::size_t w) {
  return cfg.channel_scale == ChannelMaskScale::kSpatialCount
             ? static_cast<double>(h * w)
             : static_cast<double>(c);
}

double spatial_scale_factor(const MaskConfig& cfg, std::size_t c,
                            std::size_t h, std::size_t w) {
  return cfg.spatial_scale == SpatialMaskScale::kChannelCount
             ? static_cast<double>(c)
             : static_cast<double>(h * w);
}

Tensor channel_mask(const Tensor& x, const Tensor& region,
                    const MaskConfig& cfg) {
  require_chw(x, "channel_mask");
  cfg.validate();
  const std::size_t cells = region_count(x, region);
  if (cells == 0) throw EmptyRegion("channel_mask over an empty region");
  Tensor mag = abs(x);
  if (!is_full(region)) mag = mag * expand(region, x.shape(), {0});
  Tensor g = sum(mag, {1, 2}) * (1.0 / static_cast<double>(cells));
  const double s = channel_scale_factor(cfg, x.dim(0), x.dim(1), x.dim(2));
  return softmax(g * (1.0 / cfg.temperature), {0}) * s;
}

Tensor spatial_mask(const Tensor& x, const Tensor& region,
                    const MaskConfig& cfg) {
  require_chw(x, "spatial_mask");
  cfg.validate();
  const std::size_t cells = region_count(x, region);
  if (cells == 0) throw EmptyRegion("spatial_mask over an empty region");
  Tensor g = mean(abs(x), {0});
  const double s = spatial_scale_factor(cfg, x.dim(0), x.dim(1), x.dim(2));
  std::optional<Tensor> support;
  if (cells != region.numel()) support = region;
  return softmax(g * (1.0 / cfg.temperature), {0, 1}, support) * s;
}

std::vector<Tensor> split_patches(const Tensor& x, std::size_t size) {
  if (x.rank() < 2) throw ShapeMismatch("split_patches needs rank >= 2");
  const std::size_t ah = x.rank() - 2, aw = x.rank() - 1;
  const std::size_t h = x.dim(ah), w = x.dim(aw);
  if (size == 0 || h % size != 0 || w % size != 0) {
    throw IndivisibleShape("instance size " + std::to_string(size) +
                           " does not divide " + std::to_string(h) + "x" +
                           std::to_string(w));
  }
  std::vector<Tensor> patches;
  for (std::size_t r = 0; r < h / size; ++r) {
    Tensor band = slice(x, ah, r * size, (r + 1) * size);
    for (std::size_t c = 0; c < w / size; ++c) {
      patches.push_back(slice(band, aw, c * size, (c + 1) * size));
    }
  }
  return patches;
}

Tensor merge_patches(const std::vector<Tensor>& patches, std::size_t rows,
                     std::size_t cols) {
  if (patches.size() != rows * cols || patches.empty()) {
    throw ShapeMismatch("merge_patches: patch count does not match grid");
  }
  const std::size_t rank = patches.front().rank();
  std::vector<Tensor> bands;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Tensor> row(patches.begin() + r * cols,
                            patches.begin() + (r + 1) * cols);
    bands.push_back(cols == 1 ? row.front() : concat(row, rank - 1));
  }
  return rows == 1 ? bands.front() : concat(bands, rank - 2);
}

LocalMasks local_masks(const Tensor& teacher, const Tensor& student,
                       const Tensor& region, const MaskConfig& cfg) {
  require_chw(teacher, "local_masks");
  if (teacher.shape() != student.shape()) {
    throw ShapeMismatch("local_masks: teacher " + shape_str(teacher.shape()) +
                        " vs student " + shape_str(student.shape()));
  }
  const std::size_t size = cfg.instance_size;
  const auto tp = split_patches(teacher, size);
  const auto sp = split_patches(student, size);
  const auto rp = split_patches(region, size);
  const std::size_t c = teacher.dim(0);

  LocalMasks out;
  std::vector<Tensor> spatial;
  Tensor channel_sum;
  std::size_t active = 0;
  for (std::size_t p = 0; p < tp.size(); ++p) {
    bool empty = true;
    for (double v : rp[p].data()) empty = empty && v == 0.0;
    if (empty) {
      out.channel_patches.push_back(Tensor::zeros({c}));
      spatial.push_back(Tensor::zeros({size, size}));
      continue;
    }
    Tensor ch = channel_mask(tp[p], rp[p], cfg) + channel_mask(sp[p], rp[p], cfg);
    spatial.push_back(spatial_mask(tp[p], rp[p], cfg) +
                      spatial_mask(sp[p], rp[p], cfg));
    channel_sum = active == 0 ? ch : channel_sum + ch;
    out.channel_patches.push_back(ch);
    ++active;
  }
  if (active == 0) throw EmptyRegion("local_masks: no patch intersects the region");
  out.channel = active == 1 ? channel_sum
                            : channel_sum * (1.0 / static_cast<double>(active));
  out.spatial = merge_patches(spatial, teacher.dim(1) / size, teacher.dim(2) / size);
  return out;
}

GlobalMasks global_masks(const Tensor& teacher, const Tensor& student,
                         const Tensor& region, const MaskConfig& cfg) {
  if (teacher.shape() != student.shape()) {
    throw ShapeMismatch("global_masks: teacher " + shape_str(teacher.shape()) +
                        " vs student " + shape_str(student.shape()));
  }
  return {channel_mask(teacher, region, cfg) + channel_mask(student, region, cfg),
          spatial_mask(teacher, region, cfg) + spatial_mask(student, region, cfg)};
}

LevelMasks combine_masks(const LocalMasks& local, const GlobalMasks& global) {
  if (local.channel.shape() != global.channel.shape() ||
      local.spatial.shape() != global.spatial.shape()) {
    throw ShapeMismatch("combine_masks: local and global shapes differ");
  }
  LevelMasks m;
  m.channel = (local.channel + global.channel) * 0.5;
  m.spatial = (local.spatial + global.spatial) * 0.5;
  m.local_channel = local.channel;
  m.local_spatial = local.spatial;
  m.global_channel = global.channel;
  m.global_spatial = global.spatial;
  return m;
}

LevelMasks level_masks(const Tensor& teacher, const Tensor& student,
                       const Tensor& region, const MaskConfig& cfg) {
  return combine_masks(local_masks(teacher, student, region, cfg),
                       global_masks(teacher, student, region, cfg));
}

}  // namespace afd
