// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "effdet/datasets.hpp"
#include "effdet/errors.hpp"
#include "effdet/evalap.hpp"
#include "effdet/infer.hpp"
#include "effdet/lowlight.hpp"

namespace effdet {

/// Monotonic seconds.
using Clock = std::function<double()>;

double steady_seconds();
/// Tick of the steady clock in nanoseconds.
double timer_resolution_ns();
/// CPU model from /proc/cpuinfo, or "cpu".
std::string device_label();

struct LatencyReport {
  std::string architecture;
  double mean_ms = 0.0;
  double std_ms = 0.0;  // sample standard deviation
  int num_runs = 0;
  int warmup_runs = 0;
  std::string device_label;
  double timer_resolution_ns = 0.0;
};

/// Calls run_once(i) for warmup_runs untimed then num_runs timed iterations,
/// reading the clock only around timed runs. Only one measurement may be in
/// flight per process; a concurrent call throws DomainError.
LatencyReport measure_latency(const std::function<void(int)>& run_once, int num_runs, int warmup_runs,
                              const Clock& clock = steady_seconds);

/// Batch-1 inference latency, cycling through `images` (already at the
/// detector's input resolution).
template <typename Scalar>
LatencyReport measure_latency(const Detector<Scalar>& detector, const std::vector<PixelImage>& images, int num_runs,
                              int warmup_runs, const InferenceConfig& cfg = {}, const Clock& clock = steady_seconds) {
  if (images.empty()) throw InputError("latency measurement needs at least one image");
  const auto anchors = generate_anchors(detector.config());
  std::size_t sink = 0;
  auto report = measure_latency(
      [&](int i) { sink += infer(detector, images[static_cast<std::size_t>(i) % images.size()], cfg, &anchors).size(); },
      num_runs, warmup_runs, clock);
  (void)sink;
  return report;
}

struct EfficiencyRow {
  std::string architecture;
  std::string strategy = "none";
  double ap = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double latency_ms = 0.0;
  double latency_std_ms = 0.0;
  double enhance_ms = 0.0;  // per image
  bool enhance_includes_io = false;
  bool pareto_optimal = false;

  double total_ms() const { return latency_ms + enhance_ms; }
};

struct FailedRow {
  std::string architecture;
  std::string strategy;
  std::string error;
};

struct EfficiencyReport {
  std::vector<EfficiencyRow> rows;
  std::vector<FailedRow> failures;
};

/// True where no other point has strictly higher AP and strictly lower latency.
std::vector<bool> pareto_flags(const std::vector<double>& ap, const std::vector<double>& latency_ms);

/// Joins accuracy and latency by architecture key and flags the frontier.
/// Throws JoinError naming every key present on one side only.
EfficiencyReport pareto_report(const std::map<std::string, EvalResult>& accuracy,
                               const std::map<std::string, LatencyReport>& latency);

/// Recomputes pareto_optimal over all rows, using total (detector plus
/// enhancement) latency.
void mark_frontier(EfficiencyReport& report);

std::string report_csv(const EfficiencyReport& report);
/// AP against total latency, frontier points filled.
std::string report_svg(const EfficiencyReport& report, const std::string& title);

struct StudyDetector {
  std::string name;
  const Detector<float>* detector = nullptr;
};

using StudyLog = std::function<void(const std::string&)>;

/// For every detector and spec: enhance each (already darkened) sample,
/// letterbox it to the detector input, infer, and evaluate. Enhancement and
/// detector latency are averaged per image and kept in separate columns. A
/// spec whose enhancer fails is logged and recorded in `failures`; the study
/// moves on.
EfficiencyReport run_lowlight_study(const std::vector<StudyDetector>& detectors,
                                    const std::vector<AnnotatedSample>& darkened,
                                    const std::vector<EnhancementSpec>& specs, const ClassMap& classes,
                                    const InferenceConfig& cfg = {}, const StudyLog& log = {});

/// Darkens every sample image in memory (file-backed samples are loaded).
std::vector<AnnotatedSample> darken_samples(const std::vector<AnnotatedSample>& samples, int offset);

}  // namespace effdet
