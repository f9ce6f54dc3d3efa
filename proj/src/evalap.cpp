// SPDX-License-Identifier: Apache-2.0
#include "effdet/evalap.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "json.hpp"

namespace effdet {

namespace {

struct Ranked {
  double score;
  const std::string* image;
  std::size_t index;
  const Detection* detection;
};

std::vector<Ranked> rank_class(const DetectionsByImage& detections, int class_id) {
  std::vector<Ranked> ranked;
  for (const auto& [image, dets] : detections)
    for (std::size_t i = 0; i < dets.size(); ++i)
      if (dets[i].class_id == class_id) ranked.push_back({dets[i].score, &image, i, &dets[i]});
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    if (*a.image != *b.image) return *a.image < *b.image;
    return a.index < b.index;
  });
  return ranked;
}

double interpolated_ap(const std::vector<bool>& is_tp, int num_truth) {
  const std::size_t n = is_tp.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  int tp = 0;
  for (std::size_t k = 0; k < n; ++k) {
    tp += is_tp[k] ? 1 : 0;
    precision[k] = static_cast<double>(tp) / static_cast<double>(k + 1);
    recall[k] = static_cast<double>(tp) / static_cast<double>(num_truth);
  }
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0.0;
  for (int i = 0; i < kRecallSamples; ++i) {
    const auto it = std::lower_bound(recall.begin(), recall.end(), recall_sample(i));
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / kRecallSamples;
}

}  // namespace

EvalResult evaluate(const DetectionsByImage& detections, const TruthByImage& truth, const ClassMap& classes) {
  EvalResult result;
  double ap_sum = 0.0;
  double ap50_sum = 0.0;
  double ap75_sum = 0.0;
  for (int c = 0; c < classes.size(); ++c) {
    std::map<std::string, std::vector<std::size_t>> truth_of_class;
    int num_truth = 0;
    for (const auto& [image, boxes] : truth)
      for (std::size_t g = 0; g < boxes.size(); ++g)
        if (boxes[g].class_id == c) {
          truth_of_class[image].push_back(g);
          ++num_truth;
        }
    if (num_truth == 0) continue;
    const auto ranked = rank_class(detections, c);

    std::array<double, kIouThresholds> ap_at{};
    for (int t = 0; t < kIouThresholds; ++t) {
      const double threshold = iou_threshold(t);
      std::map<std::string, std::vector<bool>> used;
      for (const auto& [image, idx] : truth_of_class) used[image].assign(idx.size(), false);
      std::vector<bool> is_tp;
      is_tp.reserve(ranked.size());
      for (const auto& r : ranked) {
        const auto found = truth_of_class.find(*r.image);
        int best = -1;
        double best_iou = -1.0;
        if (found != truth_of_class.end()) {
          const auto& boxes = truth.at(*r.image);
          auto& taken = used[*r.image];
          for (std::size_t j = 0; j < found->second.size(); ++j) {
            if (taken[j]) continue;
            const double overlap = iou(r.detection->box, boxes[found->second[j]].box);
            if (overlap >= threshold && overlap > best_iou) {
              best_iou = overlap;
              best = static_cast<int>(j);
            }
          }
          if (best >= 0) taken[static_cast<std::size_t>(best)] = true;
        }
        is_tp.push_back(best >= 0);
      }
      ap_at[static_cast<std::size_t>(t)] = interpolated_ap(is_tp, num_truth);
    }
    double mean = 0.0;
    for (double v : ap_at) mean += v;
    mean /= kIouThresholds;
    result.per_class[c] = {mean * 100.0, ap_at[0] * 100.0, ap_at[5] * 100.0};
    ap_sum += mean;
    ap50_sum += ap_at[0];
    ap75_sum += ap_at[5];
  }
  if (result.per_class.empty()) {
    result.no_ground_truth = true;
    return result;
  }
  const auto n = static_cast<double>(result.per_class.size());
  result.ap = ap_sum / n * 100.0;
  result.ap50 = ap50_sum / n * 100.0;
  result.ap75 = ap75_sum / n * 100.0;
  return result;
}

TruthByImage truth_by_image(const std::vector<AnnotatedSample>& samples) {
  TruthByImage truth;
  for (const auto& s : samples) {
    auto& boxes = truth[s.image_path];
    boxes.insert(boxes.end(), s.boxes.begin(), s.boxes.end());
  }
  return truth;
}

DetectionsByImage read_detections_jsonl(const std::filesystem::path& file, const ClassMap& classes) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read detections " + file.string());
  DetectionsByImage out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Detection d;
      const auto& box = j.at("box");
      d.box = {box.at(0).get<double>(), box.at(1).get<double>(), box.at(2).get<double>(), box.at(3).get<double>()};
      const auto& cls = j.at("class");
      if (cls.is_string()) {
        const auto id = classes.id(cls.get<std::string>());
        if (!id) throw InputError("unknown class " + cls.get<std::string>());
        d.class_id = *id;
      } else {
        d.class_id = cls.get<int>();
      }
      d.score = j.at("score").get<double>();
      if (!d.box.valid() || d.score < 0.0 || d.score > 1.0) throw InputError("invalid box or score");
      out[j.at("image").get<std::string>()].push_back(d);
    } catch (const std::exception& e) {
      throw InputError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_detections_jsonl(const std::filesystem::path& file, const DetectionsByImage& detections,
                            const ClassMap& classes) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  for (const auto& [image, dets] : detections)
    for (const auto& d : dets) {
      nlohmann::json j = {{"image", image},
                          {"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}},
                          {"class", classes.name(d.class_id)},
                          {"score", d.score}};
      out << j.dump() << '\n';
    }
}

std::string eval_result_json(const EvalResult& result, const ClassMap& classes) {
  nlohmann::json per_class = nlohmann::json::object();
  for (const auto& [c, m] : result.per_class)
    per_class[classes.name(c)] = {{"ap", m.ap}, {"ap50", m.ap50}, {"ap75", m.ap75}};
  nlohmann::json j = {{"ap", result.ap},
                      {"ap50", result.ap50},
                      {"ap75", result.ap75},
                      {"no_ground_truth", result.no_ground_truth},
                      {"per_class", per_class}};
  return j.dump(2);
}

std::string eval_result_csv(const EvalResult& result) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(1) << "ap,ap50,ap75\n" << result.ap << ',' << result.ap50 << ',' << result.ap75 << '\n';
  return out.str();
}

}  // namespace effdet
