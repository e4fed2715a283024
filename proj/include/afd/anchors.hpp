// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "afd/box.hpp"

namespace afd {

/// Square anchors centred on each cell of one FPN level. Flat order within a
/// level is (row, col, anchor).
struct AnchorLevel {
  std::size_t stride = 8;
  std::size_t height = 0, width = 0;
  std::vector<double> sizes;  // side length per anchor, image pixels

  std::size_t per_cell() const { return sizes.size(); }
  std::size_t count() const { return height * width * sizes.size(); }
  Box box(std::size_t row, std::size_t col, std::size_t a) const;
};

/// Levels for a square image of `image_size` pixels: one level per stride,
/// anchors of side base_size[l] * scale for each scale.
std::vector<AnchorLevel> make_anchor_levels(std::size_t image_size,
                                            const std::vector<std::size_t>& strides,
                                            const std::vector<double>& base_sizes,
                                            const std::vector<double>& scales);

/// All anchors of all levels in flat order (level-major).
std::vector<Box> flatten_anchors(const std::vector<AnchorLevel>& levels);

}  // namespace afd
