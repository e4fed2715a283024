// SPDX-License-Identifier: Apache-2.0
//
// Tiny dense detector: a strided 3x3 conv backbone, 1x1 lateral projections
// into two FPN levels (strides 8 and 16), and a head shared across levels with
// classification, box-offset, and objectness branches.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "afd/anchors.hpp"
#include "afd/checkpoint.hpp"
#include "afd/losses.hpp"
#include "afd/tensor.hpp"

namespace afd {

inline constexpr std::size_t kTeacherChannels = 32;
inline constexpr std::size_t kStudentChannels = 8;

struct DetectorSpec {
  std::size_t channels = kTeacherChannels;
  std::size_t num_classes = 3;
  std::size_t image_size = 64;
  std::vector<std::size_t> strides{8, 16};
  std::vector<double> base_sizes{10.0, 20.0};
  std::vector<double> anchor_scales{1.0, 1.5};

  std::size_t num_anchors() const { return anchor_scales.size(); }
  /// Object classes plus background.
  std::size_t class_outputs() const { return num_classes + 1; }
  std::vector<AnchorLevel> anchor_levels() const;
  void validate() const;
};

struct ConvLayer {
  Tensor weight;  // [Cout,Cin,k,k]
  Tensor bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t pad = 0;

  Tensor operator()(const Tensor& x) const;
};

struct DetectorParams {
  std::vector<ConvLayer> backbone;  // four stride-2 stages
  std::vector<ConvLayer> lateral;   // one per FPN level
  ConvLayer head;                   // shared 3x3 tower
  ConvLayer cls, loc, obj;          // 1x1 branches

  /// He-normal weights, zero biases. With requires_grad false the detector
  /// never records onto the tape.
  static DetectorParams init(const DetectorSpec& spec, std::uint64_t seed,
                             bool requires_grad);

  /// Fixed order; names() matches it.
  std::vector<Tensor> parameters() const;
  std::vector<std::string> names() const;
  void add_to(Container& c, const std::string& prefix) const;
  static DetectorParams from(const Container& c, const std::string& prefix,
                             const DetectorSpec& spec, bool requires_grad);
};

/// Per-level head maps: cls [N,A*(K+1),H,W] (anchor-major), loc [N,4A,H,W],
/// obj [N,A,H,W].
struct HeadOutputs {
  std::vector<Tensor> cls, loc, obj;
};

struct DetectorOutput {
  FpnFeatures features;  // [N,C,H,W] per level
  HeadOutputs heads;
};

DetectorOutput forward(const DetectorSpec& spec, const DetectorParams& params,
                       const Tensor& images);

/// Head outputs flattened in anchor order (level, row, col, anchor):
/// cls [N,M,K+1], loc [N,M,4], obj [N,M].
struct FlatOutputs {
  Tensor cls, loc, obj;
};
FlatOutputs flatten_heads(const HeadOutputs& heads, std::size_t num_anchors);

/// Rows i of every tensor in `out`, for caching per-image outputs.
DetectorOutput select_image(const DetectorOutput& out, std::size_t i);
/// Concatenates per-image outputs along the batch axis.
DetectorOutput stack_outputs(const std::vector<const DetectorOutput*>& parts);

void spec_to_metadata(const DetectorSpec& spec, Container& c,
                      const std::string& prefix);
DetectorSpec spec_from_metadata(const Container& c, const std::string& prefix);

}  // namespace afd
