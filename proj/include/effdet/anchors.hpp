// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <array>
#include <vector>

#include "effdet/box.hpp"
#include "effdet/scalecfg.hpp"

namespace effdet {

inline constexpr int kMinLevel = 3;
inline constexpr int kMaxLevel = 7;
inline constexpr int kNumLevels = kMaxLevel - kMinLevel + 1;
inline constexpr int kAnchorsPerCell = 9;
inline constexpr double kAnchorBaseScale = 4.0;

/// Anchors ordered by level (3..7), then row, then column, then
/// scale-major (scale * 3 + ratio) within a cell.
std::vector<Box> generate_anchors(const ArchitectureConfig& config);

/// Expected anchor count for a square input of `resolution` pixels.
long long anchor_count(int resolution);

/// Regression target (dx, dy, log dw, log dh) of `target` relative to `anchor`.
Eigen::Vector4d encode_box(const Box& anchor, const Box& target);
Box decode_box(const Box& anchor, const Eigen::Vector4d& offsets);

inline constexpr int kBackgroundLabel = -1;
inline constexpr int kIgnoreLabel = -2;

/// Per-anchor training targets: class id for positives, kBackgroundLabel,
/// or kIgnoreLabel.
struct AnchorTargets {
  std::vector<int> labels;
  Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor> box_targets;
  int num_positive = 0;
};

struct GroundTruthBox {
  Box box;
  int class_id = 0;
  bool operator==(const GroundTruthBox&) const = default;
};

struct MatchThresholds {
  double positive = 0.5;
  double negative = 0.4;
};

/// IoU matching: max IoU >= positive is a positive, < negative is background,
/// anything between is ignored.
AnchorTargets assign_targets(const std::vector<Box>& anchors, const std::vector<GroundTruthBox>& truth,
                             MatchThresholds thresholds = {});

}  // namespace effdet
