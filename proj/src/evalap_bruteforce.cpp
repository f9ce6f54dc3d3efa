// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive reference for evaluate(). Shares no helpers with evalap.cpp:
// overlap, ranking, matching and precision/recall are all restated here.
#include <algorithm>
#include <array>
#include <string>
#include <vector>

#include "effdet/evalap.hpp"

namespace effdet {

namespace {

double overlap(const Box& a, const Box& b) {
  if (!(a.x_min < a.x_max && a.y_min < a.y_max && b.x_min < b.x_max && b.y_min < b.y_max))
    throw DomainError("degenerate box");
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0 || h <= 0) return 0.0;
  const double inter = w * h;
  const double area_a = (a.x_max - a.x_min) * (a.y_max - a.y_min);
  const double area_b = (b.x_max - b.x_min) * (b.y_max - b.y_min);
  return inter / (area_a + area_b - inter);
}

struct Candidate {
  double score;
  std::string image;
  std::size_t index;
  Box box;
};

// One detection's choice: -1 for unmatched, else truth slot. Ordered by
// (matched, overlap, lower truth index).
struct Choice {
  int truth = -1;
  double iou = 0.0;
};

bool better(const Choice& a, const Choice& b) {
  if ((a.truth >= 0) != (b.truth >= 0)) return a.truth >= 0;
  if (a.truth < 0) return false;
  if (a.iou != b.iou) return a.iou > b.iou;
  return a.truth < b.truth;
}

// True if sequence a beats b in ranking order.
bool lexicographically_better(const std::vector<Choice>& a, const std::vector<Choice>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (better(a[i], b[i])) return true;
    if (better(b[i], a[i])) return false;
  }
  return false;
}

struct Enumerator {
  const std::vector<Box>* dets;
  const std::vector<Box>* truths;
  double threshold;
  std::vector<Choice> current;
  std::vector<bool> taken;
  std::vector<Choice> best;
  bool have_best = false;

  void run(std::size_t d) {
    if (d == dets->size()) {
      if (!have_best || lexicographically_better(current, best)) {
        best = current;
        have_best = true;
      }
      return;
    }
    current[d] = Choice{};
    run(d + 1);
    for (std::size_t g = 0; g < truths->size(); ++g) {
      if (taken[g]) continue;
      const double v = overlap((*dets)[d], (*truths)[g]);
      if (v < threshold) continue;
      taken[g] = true;
      current[d] = Choice{static_cast<int>(g), v};
      run(d + 1);
      taken[g] = false;
    }
    current[d] = Choice{};
  }
};

double average_precision_direct(const std::vector<bool>& hits, int num_truth) {
  // precision(k) and recall(k) over the top k+1 detections.
  std::vector<double> precision;
  std::vector<double> recall;
  for (std::size_t k = 0; k < hits.size(); ++k) {
    int tp = 0;
    for (std::size_t j = 0; j <= k; ++j) tp += hits[j] ? 1 : 0;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_truth));
  }
  double total = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    double best = 0.0;
    for (std::size_t k = 0; k < hits.size(); ++k)
      if (recall[k] >= r) best = std::max(best, precision[k]);
    total += best;
  }
  return total / 101;
}

}  // namespace

EvalResult evaluate_bruteforce(const DetectionsByImage& detections, const TruthByImage& truth, const ClassMap& classes) {
  for (int c = 0; c < classes.size(); ++c) {
    int count = 0;
    for (const auto& entry : detections)
      for (const auto& d : entry.second) count += d.class_id == c ? 1 : 0;
    if (count > kBruteforceMaxDetections)
      throw DomainError("brute-force evaluation refuses classes with more than 12 detections");
  }

  EvalResult result;
  double sum_ap = 0.0;
  double sum_50 = 0.0;
  double sum_75 = 0.0;
  for (int c = 0; c < classes.size(); ++c) {
    int num_truth = 0;
    for (const auto& entry : truth)
      for (const auto& g : entry.second) num_truth += g.class_id == c ? 1 : 0;
    if (num_truth == 0) continue;

    std::vector<Candidate> ranked;
    for (const auto& [image, dets] : detections)
      for (std::size_t i = 0; i < dets.size(); ++i)
        if (dets[i].class_id == c) ranked.push_back({dets[i].score, image, i, dets[i].box});
    std::sort(ranked.begin(), ranked.end(), [](const Candidate& a, const Candidate& b) {
      return std::tie(b.score, a.image, a.index) < std::tie(a.score, b.image, b.index);
    });

    std::array<double, 10> per_threshold{};
    for (int t = 0; t < 10; ++t) {
      const double threshold = (50 + 5 * t) / 100.0;
      std::vector<bool> hits(ranked.size(), false);
      // Matchings in different images are independent, so the best global
      // sequence is the per-image best.
      std::vector<std::string> images;
      for (const auto& r : ranked)
        if (std::find(images.begin(), images.end(), r.image) == images.end()) images.push_back(r.image);
      for (const auto& image : images) {
        std::vector<std::size_t> positions;
        std::vector<Box> dets;
        for (std::size_t k = 0; k < ranked.size(); ++k)
          if (ranked[k].image == image) {
            positions.push_back(k);
            dets.push_back(ranked[k].box);
          }
        std::vector<Box> truths;
        const auto found = truth.find(image);
        if (found != truth.end())
          for (const auto& g : found->second)
            if (g.class_id == c) truths.push_back(g.box);
        Enumerator e{&dets, &truths, threshold, std::vector<Choice>(dets.size()), std::vector<bool>(truths.size(), false),
                     {}, false};
        e.run(0);
        for (std::size_t k = 0; k < positions.size(); ++k) hits[positions[k]] = e.best[k].truth >= 0;
      }
      per_threshold[static_cast<std::size_t>(t)] = average_precision_direct(hits, num_truth);
    }
    double mean = 0.0;
    for (double v : per_threshold) mean += v;
    mean /= 10;
    result.per_class[c] = {mean * 100.0, per_threshold[0] * 100.0, per_threshold[5] * 100.0};
    sum_ap += mean;
    sum_50 += per_threshold[0];
    sum_75 += per_threshold[5];
  }
  if (result.per_class.empty()) {
    result.no_ground_truth = true;
    return result;
  }
  const auto n = static_cast<double>(result.per_class.size());
  result.ap = sum_ap / n * 100.0;
  result.ap50 = sum_50 / n * 100.0;
  result.ap75 = sum_75 / n * 100.0;
  return result;
}

}  // namespace effdet
