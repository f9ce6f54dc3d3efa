// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "effdet/anchors.hpp"
#include "effdet/datasets.hpp"
#include "effdet/infer.hpp"

namespace effdet {

using DetectionsByImage = std::map<std::string, std::vector<Detection>>;
using TruthByImage = std::map<std::string, std::vector<GroundTruthBox>>;

struct ApTriple {
  double ap = 0.0;    // mean over IoU 0.50:0.05:0.95, percent
  double ap50 = 0.0;  // percent
  double ap75 = 0.0;  // percent
  bool operator==(const ApTriple&) const = default;
};

struct EvalResult {
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  std::map<int, ApTriple> per_class;  // classes present in the ground truth
  bool no_ground_truth = false;       // set when no class has any ground truth box

  bool operator==(const EvalResult&) const = default;
};

inline constexpr int kIouThresholds = 10;     // 0.50, 0.55, ..., 0.95
inline constexpr int kRecallSamples = 101;    // 0.00, 0.01, ..., 1.00

inline double iou_threshold(int i) { return (50 + 5 * i) / 100.0; }
inline double recall_sample(int i) { return i / 100.0; }

/// COCO-style AP. Per class and IoU threshold, detections (all images) are
/// ranked by descending score, ties broken by image key then detection index;
/// each is greedily matched to the unmatched same-image truth box of highest
/// IoU >= threshold (ties to the lower truth index). AP is the mean of the
/// 101 interpolated precisions; class values average the thresholds, the
/// overall values average the classes present in the truth.
EvalResult evaluate(const DetectionsByImage& detections, const TruthByImage& truth, const ClassMap& classes);

/// Exhaustive oracle for small instances: enumerates every valid matching per
/// image and threshold and keeps the lexicographically best one in ranking
/// order, then builds precision/recall by direct definition. Refuses (throws
/// DomainError) when any class has more than 12 detections.
EvalResult evaluate_bruteforce(const DetectionsByImage& detections, const TruthByImage& truth, const ClassMap& classes);

inline constexpr int kBruteforceMaxDetections = 12;

/// JSON lines: {"image": key, "box": [x_min, y_min, x_max, y_max], "class": name|id, "score": s}.
DetectionsByImage read_detections_jsonl(const std::filesystem::path& file, const ClassMap& classes);
void write_detections_jsonl(const std::filesystem::path& file, const DetectionsByImage& detections,
                            const ClassMap& classes);

/// Truth keyed by sample image path.
TruthByImage truth_by_image(const std::vector<AnnotatedSample>& samples);

std::string eval_result_json(const EvalResult& result, const ClassMap& classes);
/// "ap,ap50,ap75" header and one row, one decimal place as in published tables.
std::string eval_result_csv(const EvalResult& result);

}  // namespace effdet
