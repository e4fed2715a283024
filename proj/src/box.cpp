// SPDX-License-Identifier: Apache-2.0
#include "afd/box.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "afd/error.hpp"

namespace afd {

std::string Box::str() const {
  std::ostringstream os;
  os << '(' << x_min << ',' << y_min << ',' << x_max << ',' << y_max << ')';
  return os.str();
}

double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) {
    throw InvalidBox("iou of " + a.str() + " and " + b.str());
  }
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

BoxDelta encode_box(const Box& box, const Box& anchor) {
  if (!box.valid() || !anchor.valid()) {
    throw InvalidBox("encode " + box.str() + " against " + anchor.str());
  }
  const double aw = anchor.width(), ah = anchor.height();
  const double acx = anchor.x_min + 0.5 * aw, acy = anchor.y_min + 0.5 * ah;
  const double cx = box.x_min + 0.5 * box.width();
  const double cy = box.y_min + 0.5 * box.height();
  return {(cx - acx) / aw, (cy - acy) / ah, std::log(box.width() / aw),
          std::log(box.height() / ah)};
}

Box decode_box(const BoxDelta& d, const Box& anchor) {
  const double aw = anchor.width(), ah = anchor.height();
  const double acx = anchor.x_min + 0.5 * aw, acy = anchor.y_min + 0.5 * ah;
  const double cx = acx + d.dx * aw, cy = acy + d.dy * ah;
  const double w = aw * std::exp(std::clamp(d.dw, -kMaxLogScale, kMaxLogScale));
  const double h = ah * std::exp(std::clamp(d.dh, -kMaxLogScale, kMaxLogScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

}  // namespace afd
