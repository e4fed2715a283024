// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace afd {

/// Axis-aligned box, corner form. Units depend on context (image pixels or
/// feature-map cells).
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  std::string str() const;
};

struct ScoredBox {
  Box box;
  double score = 0.0;
};

/// Intersection over union; 0 for disjoint boxes. Throws InvalidBox when
/// either box has non-positive extent.
double iou(const Box& a, const Box& b);

/// Center/size offsets of `box` relative to `anchor`:
/// dx = (cx - acx) / aw, dy = (cy - acy) / ah, dw = ln(w / aw), dh = ln(h / ah).
struct BoxDelta {
  double dx = 0.0, dy = 0.0, dw = 0.0, dh = 0.0;
};
BoxDelta encode_box(const Box& box, const Box& anchor);
Box decode_box(const BoxDelta& delta, const Box& anchor);

/// Largest |dw|, |dh| accepted by decode (wider deltas are clamped).
inline constexpr double kMaxLogScale = 4.135166556742356;  // ln(1000/16)

}  // namespace afd
