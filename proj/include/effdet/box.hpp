// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <ostream>

#include "effdet/errors.hpp"

namespace effdet {

/// Axis-aligned box in pixel coordinates.
struct Box {
  double x_min = 0;
  double y_min = 0;
  double x_max = 0;
  double y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool operator==(const Box&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const Box& b) {
  return os << '(' << b.x_min << ", " << b.y_min << ", " << b.x_max << ", " << b.y_max << ')';
}

/// Intersection over union; throws DomainError on a degenerate box.
inline double iou(const Box& a, const Box& b) {
  if (!a.valid() || !b.valid()) throw DomainError("iou of a degenerate box");
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace effdet
