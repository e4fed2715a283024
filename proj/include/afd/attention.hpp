// SPDX-License-Identifier: Apache-2.0
//
// Closed-form channel and spatial attention masks computed from feature
// magnitudes, at global (whole map) and local (I x I patch) granularity,
// summed over teacher and student and averaged into one mask pair per level.
//
// All functions take a single image's features [C,H,W] and are built from
// differentiable tensor ops; callers detach inputs when masks should act as
// constant weights.
#pragma once

#include <cstddef>
#include <vector>

#include "afd/box.hpp"
#include "afd/tensor.hpp"

namespace afd {

/// Prefactor of the channel softmax: H*W of the input (as published) or C.
enum class ChannelMaskScale { kSpatialCount, kChannelCount };
/// Prefactor of the spatial softmax: C of the input (as published) or H*W.
enum class SpatialMaskScale { kChannelCount, kSpatialCount };

inline constexpr double kOneStageTemperature = 0.1;
inline constexpr double kTwoStageTemperature = 0.4;

struct MaskConfig {
  double temperature = kOneStageTemperature;
  std::size_t instance_size = 4;
  ChannelMaskScale channel_scale = ChannelMaskScale::kSpatialCount;
  SpatialMaskScale spatial_scale = SpatialMaskScale::kChannelCount;
  bool use_proposal_mask = false;

  void validate() const;
};

/// Teacher proposals for one image, in one feature map's cell coordinates.
using ProposalList = std::vector<ScoredBox>;

/// Proposals per image, per FPN level.
struct ProposalSet {
  std::vector<std::vector<ProposalList>> levels;  // [level][image]
};

/// Binary [H,W] mask of cells overlapping the union of `boxes` with positive
/// area. All ones when `boxes` is empty.
Tensor proposal_region_mask(const ProposalList& boxes, std::size_t h,
                            std::size_t w);

double channel_scale_factor(const MaskConfig& cfg, std::size_t c,
                            std::size_t h, std::size_t w);
double spatial_scale_factor(const MaskConfig& cfg, std::size_t c,
                            std::size_t h, std::size_t w);

/// scale * softmax over channels of (mean |x| over region cells) / T.
Tensor channel_mask(const Tensor& x, const Tensor& region,
                    const MaskConfig& cfg);

/// scale * softmax over region cells of (mean |x| over channels) / T,
/// exactly 0 outside the region.
Tensor spatial_mask(const Tensor& x, const Tensor& region,
                    const MaskConfig& cfg);

/// Row-major, non-overlapping I x I tiling of a [C,H,W] map.
std::vector<Tensor> split_patches(const Tensor& x, std::size_t instance_size);
/// Inverse of split_patches for a grid of `rows` x `cols` patches.
Tensor merge_patches(const std::vector<Tensor>& patches, std::size_t rows,
                     std::size_t cols);

struct LocalMasks {
  Tensor channel;                        // [C], mean over patches
  std::vector<Tensor> channel_patches;   // [C] per patch; empty-region
                                         // patches hold zeros
  Tensor spatial;                        // [H,W], patches reassembled
};

struct GlobalMasks {
  Tensor channel;  // [C]
  Tensor spatial;  // [H,W]
};

/// One level's combined masks plus the local/global intermediates.
struct LevelMasks {
  Tensor channel;  // LG_ch [C]
  Tensor spatial;  // LG_sp [H,W]
  Tensor local_channel, local_spatial;
  Tensor global_channel, global_spatial;
};

LocalMasks local_masks(const Tensor& teacher, const Tensor& student,
                       const Tensor& region, const MaskConfig& cfg);
GlobalMasks global_masks(const Tensor& teacher, const Tensor& student,
                         const Tensor& region, const MaskConfig& cfg);
LevelMasks combine_masks(const LocalMasks& local, const GlobalMasks& global);

/// local + global + combine for one image at one level.
LevelMasks level_masks(const Tensor& teacher, const Tensor& student,
                       const Tensor& region, const MaskConfig& cfg);

}  // namespace afd
