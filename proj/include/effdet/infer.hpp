// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "effdet/anchors.hpp"
#include "effdet/detector.hpp"
#include "effdet/errors.hpp"

namespace effdet {

struct InferenceConfig {
  double confidence_threshold = 0.05;  // tau
  double nms_iou_threshold = 0.5;
  int max_detections = 100;
  int max_candidates_per_class = 1000;  // pre-NMS cap, highest scores kept

  void validate() const {
    if (!(confidence_threshold >= 0.0 && confidence_threshold <= 1.0))
      throw ConfigurationError("confidence threshold must be in [0,1]");
    if (!(nms_iou_threshold > 0.0 && nms_iou_threshold <= 1.0))
      throw ConfigurationError("NMS IoU threshold must be in (0,1]");
    if (max_detections < 1) throw ConfigurationError("max_detections must be positive");
    if (max_candidates_per_class < 1) throw ConfigurationError("max_candidates_per_class must be positive");
  }
};

struct Detection {
  Box box;
  int class_id = 0;
  double score = 0.0;
  bool operator==(const Detection&) const = default;
};

/// Greedy NMS within one class: keeps detections in descending score order,
/// dropping any whose IoU with an already kept one exceeds the threshold.
/// Returns the kept indices in keep order.
inline std::vector<std::size_t> nms(const std::vector<Detection>& candidates, double iou_threshold) {
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return candidates[a].score > candidates[b].score; });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(candidates[i].box, candidates[k].box) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Turns raw head outputs into thresholded, per-class-NMS'd detections sorted
/// by descending score.
template <typename Scalar>
std::vector<Detection> decode_detections(const Matrix<Scalar>& class_logits, const Matrix<Scalar>& box_offsets,
                                         const std::vector<Box>& anchors, int resolution, const InferenceConfig& cfg) {
  cfg.validate();
  if (class_logits.rows() != static_cast<Eigen::Index>(anchors.size()) || box_offsets.rows() != class_logits.rows())
    throw InputError("decode: output rows do not match anchors");
  std::vector<Detection> result;
  for (Eigen::Index c = 0; c < class_logits.cols(); ++c) {
    std::vector<std::pair<double, Eigen::Index>> scored;
    for (Eigen::Index a = 0; a < class_logits.rows(); ++a) {
      const double score = sigmoid(static_cast<double>(class_logits(a, c)));
      if (score >= cfg.confidence_threshold) scored.emplace_back(score, a);
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
    if (scored.size() > static_cast<std::size_t>(cfg.max_candidates_per_class))
      scored.resize(static_cast<std::size_t>(cfg.max_candidates_per_class));
    std::vector<Detection> candidates;
    for (const auto& [score, a] : scored) {
      const Eigen::Vector4d offsets = box_offsets.row(a).template cast<double>().transpose();
      Box b = decode_box(anchors[static_cast<std::size_t>(a)], offsets);
      b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(resolution));
      b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(resolution));
      b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(resolution));
      b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(resolution));
      if (b.valid()) candidates.push_back({b, static_cast<int>(c), score});
    }
    for (std::size_t k : nms(candidates, cfg.nms_iou_threshold)) result.push_back(candidates[k]);
  }
  std::stable_sort(result.begin(), result.end(), [](const Detection& x, const Detection& y) { return x.score > y.score; });
  if (result.size() > static_cast<std::size_t>(cfg.max_detections)) result.resize(static_cast<std::size_t>(cfg.max_detections));
  return result;
}

/// Runs a frozen detector on a letterboxed image of the configured resolution.
template <typename Scalar>
std::vector<Detection> infer(const Detector<Scalar>& detector, const PixelImage& image, const InferenceConfig& cfg,
                             const std::vector<Box>* anchors = nullptr) {
  const auto out = detector.forward(image, nullptr);
  const int r = detector.config().input_resolution;
  if (anchors) return decode_detections(out.class_logits, out.box_offsets, *anchors, r, cfg);
  return decode_detections(out.class_logits, out.box_offsets, generate_anchors(detector.config()), r, cfg);
}

}  // namespace effdet
