// SPDX-License-Identifier: Apache-2.0
#include "effdet/bench.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

namespace effdet {

namespace {

std::atomic<bool> g_measuring{false};

class ExclusiveTiming {
 public:
  ExclusiveTiming() {
    if (g_measuring.exchange(true)) throw DomainError("another latency measurement is running in this process");
  }
  ~ExclusiveTiming() { g_measuring = false; }
  ExclusiveTiming(const ExclusiveTiming&) = delete;
  ExclusiveTiming& operator=(const ExclusiveTiming&) = delete;
};

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

}  // namespace

double steady_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double timer_resolution_ns() {
  using P = std::chrono::steady_clock::period;
  return 1e9 * static_cast<double>(P::num) / static_cast<double>(P::den);
}

std::string device_label() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto label = line.substr(colon + 1);
        label.erase(0, label.find_first_not_of(' '));
        return label;
      }
    }
  }
  return "cpu";
}

LatencyReport measure_latency(const std::function<void(int)>& run_once, int num_runs, int warmup_runs,
                              const Clock& clock) {
  if (num_runs < 1) throw DomainError("num_runs must be >= 1");
  if (warmup_runs < 0) throw DomainError("warmup_runs must be >= 0");
  ExclusiveTiming guard;
  for (int i = 0; i < warmup_runs; ++i) run_once(i);
  std::vector<double> ms(static_cast<std::size_t>(num_runs));
  for (int i = 0; i < num_runs; ++i) {
    const double t0 = clock();
    run_once(warmup_runs + i);
    ms[static_cast<std::size_t>(i)] = (clock() - t0) * 1e3;
  }
  LatencyReport r;
  r.num_runs = num_runs;
  r.warmup_runs = warmup_runs;
  r.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / num_runs;
  if (num_runs > 1) {
    double ss = 0.0;
    for (double v : ms) ss += (v - r.mean_ms) * (v - r.mean_ms);
    r.std_ms = std::sqrt(ss / (num_runs - 1));
  }
  r.device_label = device_label();
  r.timer_resolution_ns = timer_resolution_ns();
  return r;
}

std::vector<bool> pareto_flags(const std::vector<double>& ap, const std::vector<double>& latency_ms) {
  if (ap.size() != latency_ms.size()) throw DomainError("pareto_flags: length mismatch");
  std::vector<std::size_t> order(ap.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return latency_ms[a] < latency_ms[b]; });
  std::vector<bool> flags(ap.size(), true);
  double best_faster = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < order.size();) {
    // Rows of equal latency cannot dominate each other.
    std::size_t j = i;
    while (j < order.size() && latency_ms[order[j]] == latency_ms[order[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) flags[order[k]] = !(best_faster > ap[order[k]]);
    for (std::size_t k = i; k < j; ++k) best_faster = std::max(best_faster, ap[order[k]]);
    i = j;
  }
  return flags;
}

void mark_frontier(EfficiencyReport& report) {
  std::vector<double> ap, lat;
  for (const auto& r : report.rows) {
    ap.push_back(r.ap);
    lat.push_back(r.total_ms());
  }
  const auto flags = pareto_flags(ap, lat);
  for (std::size_t i = 0; i < flags.size(); ++i) report.rows[i].pareto_optimal = flags[i];
}

EfficiencyReport pareto_report(const std::map<std::string, EvalResult>& accuracy,
                               const std::map<std::string, LatencyReport>& latency) {
  std::vector<std::string> missing;
  for (const auto& [k, v] : accuracy)
    if (!latency.count(k)) missing.push_back(k + " (no latency)");
  for (const auto& [k, v] : latency)
    if (!accuracy.count(k)) missing.push_back(k + " (no accuracy)");
  if (!missing.empty()) {
    std::string msg = "cannot join accuracy and latency rows:";
    for (const auto& m : missing) msg += " " + m + ";";
    msg.pop_back();
    throw JoinError(msg);
  }
  EfficiencyReport report;
  for (const auto& [k, e] : accuracy) {
    const auto& l = latency.at(k);
    EfficiencyRow row;
    row.architecture = k;
    row.ap = e.ap;
    row.ap50 = e.ap50;
    row.ap75 = e.ap75;
    row.latency_ms = l.mean_ms;
    row.latency_std_ms = l.std_ms;
    report.rows.push_back(row);
  }
  mark_frontier(report);
  return report;
}

std::string report_csv(const EfficiencyReport& report) {
  std::ostringstream os;
  os << "architecture,enhancement,ap,ap50,ap75,latency_ms,latency_std_ms,enhance_ms,enhance_includes_io,total_ms,"
        "pareto\n";
  for (const auto& r : report.rows) {
    os << csv_field(r.architecture) << ',' << csv_field(r.strategy) << ',' << fixed(r.ap, 1) << ','
       << fixed(r.ap50, 1) << ',' << fixed(r.ap75, 1) << ',' << fixed(r.latency_ms, 3) << ','
       << fixed(r.latency_std_ms, 3) << ',' << fixed(r.enhance_ms, 3) << ',' << (r.enhance_includes_io ? 1 : 0)
       << ',' << fixed(r.total_ms(), 3) << ',' << (r.pareto_optimal ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string report_svg(const EfficiencyReport& report, const std::string& title) {
  constexpr double W = 640, H = 420, left = 60, right = 20, top = 40, bottom = 50;
  double lo = 0, hi = 1;
  if (!report.rows.empty()) {
    lo = hi = report.rows[0].total_ms();
    for (const auto& r : report.rows) {
      lo = std::min(lo, r.total_ms());
      hi = std::max(hi, r.total_ms());
    }
  }
  const double pad = std::max((hi - lo) * 0.1, 1e-3);
  lo = std::max(0.0, lo - pad);
  hi += pad;
  const auto px = [&](double ms) { return left + (ms - lo) / (hi - lo) * (W - left - right); };
  const auto py = [&](double ap) { return H - bottom - ap / 100.0 * (H - top - bottom); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
     << "</text>\n"
     << "<line x1=\"" << left << "\" y1=\"" << H - bottom << "\" x2=\"" << W - right << "\" y2=\"" << H - bottom
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << H - bottom
     << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double ap = 25.0 * t, ms = lo + (hi - lo) * t / 4;
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(ap) + 4 << "\" text-anchor=\"end\">" << ap << "</text>\n"
       << "<text x=\"" << px(ms) << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">" << fixed(ms, 2)
       << "</text>\n";
  }
  os << "<text x=\"" << W / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">latency per image (ms)</text>\n"
     << "<text x=\"16\" y=\"" << H / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << H / 2
     << ")\">AP</text>\n";
  for (const auto& r : report.rows) {
    const auto label = r.strategy == "none" ? r.architecture : r.architecture + " " + r.strategy;
    os << "<circle cx=\"" << px(r.total_ms()) << "\" cy=\"" << py(r.ap) << "\" r=\"5\" stroke=\"#1f4e99\" fill=\""
       << (r.pareto_optimal ? "#1f4e99" : "none") << "\"/>\n"
       << "<text x=\"" << px(r.total_ms()) + 7 << "\" y=\"" << py(r.ap) - 7 << "\">" << xml_escape(label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<AnnotatedSample> darken_samples(const std::vector<AnnotatedSample>& samples, int offset) {
  std::vector<AnnotatedSample> out = samples;
  for (auto& s : out) {
    s.image = darken(load_image(s), offset);
    s.width = s.image.width;
    s.height = s.image.height;
  }
  return out;
}

EfficiencyReport run_lowlight_study(const std::vector<StudyDetector>& detectors,
                                    const std::vector<AnnotatedSample>& darkened,
                                    const std::vector<EnhancementSpec>& specs, const ClassMap& classes,
                                    const InferenceConfig& cfg, const StudyLog& log) {
  if (darkened.empty()) throw InputError("study dataset is empty");
  for (const auto& spec : specs) spec.validate();
  std::vector<PixelImage> images;
  for (const auto& s : darkened) images.push_back(load_image(s));

  EfficiencyReport report;
  for (const auto& d : detectors) {
    if (!d.detector) throw ConfigurationError("study detector '" + d.name + "' is null");
    if (d.detector->num_classes() != classes.size())
      throw ConfigurationError("detector '" + d.name + "' has " + std::to_string(d.detector->num_classes()) +
                               " classes, dataset has " + std::to_string(classes.size()));
    const int res = d.detector->config().input_resolution;
    const auto anchors = generate_anchors(d.detector->config());
    for (const auto& spec : specs) {
      EfficiencyRow row;
      row.architecture = d.name;
      row.strategy = spec.label();
      try {
        DetectionsByImage dets;
        TruthByImage truth;
        double enhance_s = 0.0, infer_s = 0.0;
        for (std::size_t i = 0; i < darkened.size(); ++i) {
          const auto enhanced = enhance(images[i], spec);
          enhance_s += enhanced.latency_seconds;
          row.enhance_includes_io = enhanced.includes_io;
          AnnotatedSample s = darkened[i];
          s.image = enhanced.image;
          const auto prepared = prepare_sample(s, res);
          const double t0 = steady_seconds();
          auto found = infer(*d.detector, prepared.image, cfg, &anchors);
          infer_s += steady_seconds() - t0;
          const auto key = darkened[i].image_path.empty() ? std::to_string(i) : darkened[i].image_path;
          dets[key] = std::move(found);
          truth[key] = prepared.boxes;
        }
        const auto r = evaluate(dets, truth, classes);
        const double n = static_cast<double>(darkened.size());
        row.ap = r.ap;
        row.ap50 = r.ap50;
        row.ap75 = r.ap75;
        row.enhance_ms = enhance_s / n * 1e3;
        row.latency_ms = infer_s / n * 1e3;
        report.rows.push_back(row);
        if (log)
          log(d.name + " " + row.strategy + ": AP " + fixed(r.ap, 1) + " AP50 " + fixed(r.ap50, 1) + " enhance " +
              fixed(row.enhance_ms, 3) + " ms/image");
      } catch (const EnhancementError& e) {
        report.failures.push_back({d.name, row.strategy, e.what()});
        if (log) log(d.name + " " + row.strategy + ": FAILED: " + e.what());
      }
    }
  }
  mark_frontier(report);
  return report;
}

}  // namespace effdet
