// SPDX-License-Identifier: Apache-2.0
#include "effdet/anchors.hpp"

#include <cmath>

namespace effdet {

std::vector<Box> generate_anchors(const ArchitectureConfig& config) {
  validate(config);
  static const std::array<double, 3> scales = {1.0, std::pow(2.0, 1.0 / 3.0), std::pow(2.0, 2.0 / 3.0)};
  static const std::array<double, 3> ratios = {0.5, 1.0, 2.0};
  std::vector<Box> anchors;
  anchors.reserve(static_cast<std::size_t>(anchor_count(config.input_resolution)));
  for (int level = kMinLevel; level <= kMaxLevel; ++level) {
    const int stride = 1 << level;
    const int side = config.input_resolution / stride;
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        const double cx = (x + 0.5) * stride;
        const double cy = (y + 0.5) * stride;
        for (double scale : scales) {
          for (double ratio : ratios) {
            const double size = kAnchorBaseScale * stride * scale;
            const double half_w = 0.5 * size / std::sqrt(ratio);
            const double half_h = 0.5 * size * std::sqrt(ratio);
            anchors.push_back({cx - half_w, cy - half_h, cx + half_w, cy + half_h});
          }
        }
      }
    }
  }
  return anchors;
}

long long anchor_count(int resolution) {
  long long total = 0;
  for (int level = kMinLevel; level <= kMaxLevel; ++level) {
    const long long side = resolution >> level;
    total += side * side * kAnchorsPerCell;
  }
  return total;
}

Eigen::Vector4d encode_box(const Box& anchor, const Box& target) {
  return {(target.center_x() - anchor.center_x()) / anchor.width(),
          (target.center_y() - anchor.center_y()) / anchor.height(),
          std::log(target.width() / anchor.width()), std::log(target.height() / anchor.height())};
}

Box decode_box(const Box& anchor, const Eigen::Vector4d& offsets) {
  // Clamp log-size offsets so an untrained head cannot overflow exp().
  constexpr double kMaxLogScale = 4.135;  // log(1000 / 16)
  const double cx = anchor.center_x() + offsets[0] * anchor.width();
  const double cy = anchor.center_y() + offsets[1] * anchor.height();
  const double w = anchor.width() * std::exp(std::min(offsets[2], kMaxLogScale));
  const double h = anchor.height() * std::exp(std::min(offsets[3], kMaxLogScale));
  return {cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

AnchorTargets assign_targets(const std::vector<Box>& anchors, const std::vector<GroundTruthBox>& truth,
                             MatchThresholds thresholds) {
  AnchorTargets targets;
  targets.labels.assign(anchors.size(), kBackgroundLabel);
  targets.box_targets.setZero(static_cast<Eigen::Index>(anchors.size()), 4);
  if (truth.empty()) return targets;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    double best = 0.0;
    int best_gt = -1;
    for (std::size_t g = 0; g < truth.size(); ++g) {
      const double overlap = iou(anchors[a], truth[g].box);
      if (overlap > best) {
        best = overlap;
        best_gt = static_cast<int>(g);
      }
    }
    if (best >= thresholds.positive) {
      targets.labels[a] = truth[best_gt].class_id;
      targets.box_targets.row(static_cast<Eigen::Index>(a)) = encode_box(anchors[a], truth[best_gt].box).transpose();
      ++targets.num_positive;
    } else if (best >= thresholds.negative) {
      targets.labels[a] = kIgnoreLabel;
    }
  }
  return targets;
}

}  // namespace effdet
