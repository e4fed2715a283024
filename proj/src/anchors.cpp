// SPDX-License-Identifier: Apache-2.0
#include "afd/anchors.hpp"

#include "afd/error.hpp"

namespace afd {

Box AnchorLevel::box(std::size_t row, std::size_t col, std::size_t a) const {
  const double cx = (static_cast<double>(col) + 0.5) * static_cast<double>(stride);
  const double cy = (static_cast<double>(row) + 0.5) * static_cast<double>(stride);
  const double half = 0.5 * sizes.at(a);
  return {cx - half, cy - half, cx + half, cy + half};
}

std::vector<AnchorLevel> make_anchor_levels(std::size_t image_size,
                                            const std::vector<std::size_t>& strides,
                                            const std::vector<double>& base_sizes,
                                            const std::vector<double>& scales) {
  if (strides.size() != base_sizes.size()) {
    throw ShapeMismatch("one base size per stride expected");
  }
  std::vector<AnchorLevel> levels;
  for (std::size_t l = 0; l < strides.size(); ++l) {
    if (strides[l] == 0 || image_size % strides[l] != 0) {
      throw IndivisibleShape("stride " + std::to_string(strides[l]) +
                             " does not divide image size");
    }
    AnchorLevel lv;
    lv.stride = strides[l];
    lv.height = lv.width = image_size / strides[l];
    for (double s : scales) lv.sizes.push_back(base_sizes[l] * s);
    levels.push_back(std::move(lv));
  }
  return levels;
}

std::vector<Box> flatten_anchors(const std::vector<AnchorLevel>& levels) {
  std::vector<Box> out;
  for (const auto& lv : levels) {
    for (std::size_t i = 0; i < lv.height; ++i) {
      for (std::size_t j = 0; j < lv.width; ++j) {
        for (std::size_t a = 0; a < lv.per_cell(); ++a) out.push_back(lv.box(i, j, a));
      }
    }
  }
  return out;
}

}  // namespace afd
