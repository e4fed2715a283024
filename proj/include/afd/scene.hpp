// SPDX-License-Identifier: Apache-2.0
//
// Procedural detection scenes: textured shapes on a noisy background.
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "afd/box.hpp"
#include "afd/checkpoint.hpp"
#include "afd/tensor.hpp"

namespace afd {

enum class ShapeKind { kDisk = 0, kSquare, kCross, kTriangle, kRing };

struct SceneConfig {
  std::size_t image_size = 64;
  std::size_t num_classes = 3;  // shapes 0..K-1 of ShapeKind
  std::size_t min_objects = 1;
  std::size_t max_objects = 6;
  std::size_t min_size = 8;
  std::size_t max_size = 24;
  double background = 0.2;
  double noise_sigma = 0.05;

  void validate() const;
};

struct SceneObject {
  int cls = 0;
  Box box;  // tight pixel extent, image coordinates
};

struct Scene {
  std::vector<double> image;  // [3, S, S], values in [0,1]
  std::vector<SceneObject> objects;
  std::uint64_t seed = 0;
};

Scene gen_scene(std::uint64_t seed, const SceneConfig& cfg);

/// Scene i of a dataset generated from `dataset_seed`.
std::vector<Scene> gen_dataset(std::uint64_t dataset_seed, std::size_t count,
                               const SceneConfig& cfg);

/// Stacks the images of scenes[indices] into [N,3,S,S].
Tensor batch_images(const std::vector<Scene>& scenes,
                    const std::vector<std::size_t>& indices,
                    std::size_t image_size);

/// Tensors `images` [n,3,S,S], `boxes` [n,max,4], `classes` [n,max],
/// `counts` [n]; padded entries are zero.
Container dataset_to_container(const std::vector<Scene>& scenes,
                               const SceneConfig& cfg);
std::vector<Scene> dataset_from_container(const Container& c);

}  // namespace afd
