// SPDX-License-Identifier: Apache-2.0
#include "effdet/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "effdet/bench.hpp"
#include "effdet/checkpoint.hpp"
#include "effdet/errors.hpp"
#include "effdet/runconfig.hpp"
#include "json.hpp"

namespace effdet {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Invocation {
  std::string config_file;
  std::vector<std::string> sets;
  KeyValues flags;
  bool out_flag = false;
  bool table = false;
};

// Flag bound to a config key; flags win over --set, which wins over --config.
template <typename T = std::string>
CLI::Option* key_flag(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key,
                      const std::string& help) {
  return app
      ->add_option_function<std::string>(
          flag, [&inv, key](const std::string& v) { inv.flags[key] = v; }, help)
      ->type_name(std::is_same_v<T, int> ? "INT" : std::is_same_v<T, double> ? "NUM" : "TEXT");
}

CLI::Option* list_flag(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key,
                       const std::string& help) {
  return app
      ->add_option_function<std::vector<std::string>>(
          flag,
          [&inv, key](const std::vector<std::string>& v) {
            std::string joined;
            for (const auto& s : v) joined += (joined.empty() ? "" : ",") + s;
            inv.flags[key] = joined;
          },
          help)
      ->type_name("FILE");
}

void common_flags(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_file, "key=value config file or a run manifest.json")->type_name("FILE");
  app->add_option("--set", inv.sets, "override one config key, repeatable")->type_name("KEY=VALUE");
  key_flag<int>(app, inv, "--seed", "seed", "seed for data, initialisation and shuffling");
  key_flag(app, inv, "--out", "output_dir", "output root (default: $EFFDET_OUTPUT_ROOT, else ./runs)")
      ->each([&inv](const std::string&) { inv.out_flag = true; });
}

void dataset_flags(CLI::App* app, Invocation& inv) {
  key_flag(app, inv, "--dataset", "dataset", "synth, a JSON manifest, or a VOC annotation directory");
  key_flag(app, inv, "--classes", "classes", "class map: trash_icra19, wpbb, voc2012 or synth_N");
}

void arch_flags(CLI::App* app, Invocation& inv) {
  key_flag<int>(app, inv, "--phi", "phi", "scaling coefficient, 0..7");
  key_flag(app, inv, "--split", "split", "depth split: 1-5, 3-3 or 5-1");
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
  return os.str();
}

class Run {
 public:
  Run(std::string command, const RunConfig& cfg, const Invocation& inv, std::ostream& err)
      : command_(std::move(command)), cfg_(cfg), err_(err) {
    fs::path root = "runs";
    const char* env = std::getenv(kOutputRootEnv);
    if (inv.out_flag)
      root = cfg.output_dir;
    else if (env && *env)
      root = env;
    else if (!cfg.output_dir.empty())
      root = cfg.output_dir;
    const auto stamp = utc_stamp();
    dir_ = root / (command_ + "-" + stamp);
    for (int n = 2; fs::exists(dir_); ++n) dir_ = root / (command_ + "-" + stamp + "-" + std::to_string(n));
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  }

  const fs::path& dir() const { return dir_; }
  fs::path file(const std::string& name) {
    outputs_[name] = (dir_ / name).string();
    return dir_ / name;
  }
  void warn(const std::string& w) {
    warnings_.push_back(w);
    err_ << "warning: " << w << '\n';
  }
  json& extra() { return extra_; }

  void write_text(const std::string& name, const std::string& text) {
    const auto path = file(name);
    std::ofstream out(path);
    out << text;
    if (!out) throw IoError("cannot write " + path.string());
  }

  void finish() {
    json doc;
    doc["command"] = command_;
    doc["created_utc"] = utc_stamp();
    doc["config"] = cfg_.to_key_values();
    doc["seed"] = cfg_.seed;
    doc["device_label"] = device_label();
    doc["timer_resolution_ns"] = timer_resolution_ns();
    doc["outputs"] = outputs_;
    doc["warnings"] = warnings_;
    if (!extra_.is_null()) doc["results"] = extra_;
    write_text("manifest.json", doc.dump(2) + "\n");
  }

 private:
  std::string command_;
  RunConfig cfg_;
  std::ostream& err_;
  fs::path dir_;
  std::map<std::string, std::string> outputs_;
  std::vector<std::string> warnings_;
  json extra_;
};

json triple(const EvalResult& r) { return {{"ap", r.ap}, {"ap50", r.ap50}, {"ap75", r.ap75}}; }

EvalResult evaluate_on(const Detector<float>& det, const std::vector<AnnotatedSample>& samples,
                       const ClassMap& classes, const InferenceConfig& cfg) {
  const auto anchors = generate_anchors(det.config());
  DetectionsByImage dets;
  TruthByImage truth;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto prepared = prepare_sample(samples[i], det.config().input_resolution);
    const auto key = std::to_string(i) + ":" + samples[i].image_path;
    dets[key] = infer(det, prepared.image, cfg, &anchors);
    truth[key] = prepared.boxes;
  }
  return evaluate(dets, truth, classes);
}

Checkpoint open_checkpoint(const std::string& path) {
  if (!fs::exists(path)) throw IoError("checkpoint not found: " + path);
  return load_checkpoint(path);
}

void require_same_classes(const ClassMap& a, const ClassMap& b, const std::string& what) {
  if (!(a == b)) throw ConfigurationError(what + " was trained on different classes than the configured dataset");
}

const std::vector<AnnotatedSample>& eval_split(const Dataset& d) { return d.test.empty() ? d.train : d.test; }

int cmd_scale(const RunConfig& cfg, const Invocation& inv, std::ostream& out) {
  if (inv.table) {
    out << "architecture\tinput_size\tbackbone\twidth\tbifpn_depth\thead_depth\n";
    for (int phi = 0; phi <= 3; ++phi) out << table_row(ScalingSpec::from_split(phi, cfg.split)) << '\n';
    return kExitOk;
  }
  const auto spec = cfg.scaling();
  out << "architecture=D" << spec.phi << '(' << spec.split_label() << ")\n" << build_config(spec).to_record();
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto data = load_dataset(cfg);
  if (data.train.empty()) throw InputError("training split is empty");
  const auto arch = cfg.architecture();
  Run run("train", cfg, inv, err);
  for (const auto& w : data.warnings) run.warn(w);
  auto det = Detector<float>::build(arch, data.classes.size(), cfg.seed);
  std::ostringstream loss_csv;
  loss_csv << "epoch,loss\n";
  const auto t0 = steady_seconds();
  const auto result = train(det, prepare_samples(data.train, arch.input_resolution), cfg.sgd(), [&](int e, double l) {
    loss_csv << e + 1 << ',' << l << '\n';
    err << "epoch " << e + 1 << '/' << cfg.epochs << " loss " << l << '\n';
  });
  const double seconds = steady_seconds() - t0;
  save_checkpoint(run.file("model.ckpt"), det, data.classes);
  run.write_text("loss.csv", loss_csv.str());
  json summary{{"run_dir", run.dir().string()},
               {"checkpoint", (run.dir() / "model.ckpt").string()},
               {"train_images", data.train.size()},
               {"steps", result.steps},
               {"final_loss", result.loss_history.back()},
               {"train_seconds", seconds}};
  if (!data.test.empty()) {
    const auto r = evaluate_on(det, data.test, data.classes, cfg.inference());
    run.write_text("eval.json", eval_result_json(r, data.classes) + "\n");
    run.write_text("eval.csv", eval_result_csv(r));
    summary["test_images"] = data.test.size();
    summary["eval"] = triple(r);
  }
  run.extra() = summary;
  run.finish();
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_infer(const RunConfig& cfg, const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto ckpts = split_list(cfg.checkpoints);
  if (ckpts.size() != 1) throw ConfigurationError("infer needs exactly one --checkpoint");
  const auto ckpt = open_checkpoint(ckpts[0]);
  std::vector<AnnotatedSample> samples;
  for (const auto& p : split_list(cfg.images)) {
    if (!fs::exists(p)) throw IoError("no such image: " + p);
    AnnotatedSample s;
    s.image_path = p;
    samples.push_back(s);
  }
  std::vector<std::string> warnings;
  if (samples.empty()) {
    auto data = load_dataset(cfg);
    require_same_classes(ckpt.classes, data.classes, ckpts[0]);
    samples = eval_split(data);
    warnings = data.warnings;
  }
  Run run("infer", cfg, inv, err);
  for (const auto& w : warnings) run.warn(w);
  const int res = ckpt.detector.config().input_resolution;
  const auto anchors = generate_anchors(ckpt.detector.config());
  DetectionsByImage dets;
  std::size_t count = 0;
  for (const auto& s : samples) {
    const auto image = load_image(s);
    Letterbox t;
    const auto canvas = letterbox_image(image, res, &t);
    auto found = infer(ckpt.detector, canvas, cfg.inference(), &anchors);
    for (auto& d : found) {
      d.box = t.to_source(d.box);
      d.box.x_max = std::min<double>(d.box.x_max, image.width);
      d.box.y_max = std::min<double>(d.box.y_max, image.height);
    }
    std::erase_if(found, [](const Detection& d) { return !d.box.valid(); });
    count += found.size();
    auto& slot = dets[s.image_path];
    slot.insert(slot.end(), found.begin(), found.end());
  }
  write_detections_jsonl(run.file("detections.jsonl"), dets, ckpt.classes);
  json summary{{"run_dir", run.dir().string()},
               {"detections", (run.dir() / "detections.jsonl").string()},
               {"images", samples.size()},
               {"count", count},
               {"tau", cfg.tau}};
  run.extra() = summary;
  run.finish();
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_enhance(const RunConfig& cfg, const Invocation& inv, std::ostream& out, std::ostream& err) {
  if (cfg.input.empty() || cfg.output.empty()) throw ConfigurationError("enhance needs an input and an output image");
  auto spec = cfg.enhancement();
  spec.validate();
  auto image = read_image(cfg.input);
  if (cfg.darken) image = darken(image, cfg.darken_offset);
  const auto result = enhance(image, spec);
  Run run("enhance", cfg, inv, err);
  write_image(cfg.output, result.image);
  json summary{{"run_dir", run.dir().string()},
               {"output", cfg.output},
               {"strategy", spec.label()},
               {"enhance_ms", result.latency_seconds * 1e3},
               {"includes_io", result.includes_io}};
  run.extra() = summary;
  run.finish();
  out << summary.dump() << '\n';
  return kExitOk;
}

// Prediction keys are matched to truth keys verbatim, else by canonical path
// (relative keys tried against the working directory, then the predictions
// file's directory).
DetectionsByImage align_keys(const DetectionsByImage& dets, const TruthByImage& truth, const fs::path& pred_file,
                             std::vector<std::string>& unmatched) {
  std::map<std::string, std::string> canonical;
  for (const auto& [k, v] : truth) {
    std::error_code ec;
    const auto c = fs::weakly_canonical(k, ec);
    if (!ec) canonical[c.string()] = k;
  }
  DetectionsByImage out;
  for (const auto& [k, v] : dets) {
    std::string key = k;
    if (!truth.count(k)) {
      for (const auto& base : {fs::path(), pred_file.parent_path()}) {
        std::error_code ec;
        const auto c = fs::weakly_canonical(fs::path(k).is_absolute() ? fs::path(k) : base / k, ec);
        if (!ec && canonical.count(c.string())) {
          key = canonical[c.string()];
          break;
        }
      }
      if (key == k) unmatched.push_back(k);
    }
    auto& slot = out[key];
    slot.insert(slot.end(), v.begin(), v.end());
  }
  return out;
}

int cmd_eval(const RunConfig& cfg, const Invocation& inv, std::ostream& out, std::ostream& err) {
  if (cfg.pred.empty() || cfg.gt.empty()) throw ConfigurationError("eval needs --pred and --gt");
  if (!fs::exists(cfg.pred)) throw IoError("predictions not found: " + cfg.pred);
  if (!fs::exists(cfg.gt)) throw IoError("ground truth not found: " + cfg.gt);
  const auto classes = builtin_class_map(cfg.classes);
  const auto gt = fs::is_directory(cfg.gt) ? load_voc_xml(cfg.gt, classes) : load_manifest(cfg.gt, classes);
  const auto truth = truth_by_image(gt.samples);
  std::vector<std::string> unmatched;
  const auto dets = align_keys(read_detections_jsonl(cfg.pred, classes), truth, cfg.pred, unmatched);
  const auto r = evaluate(dets, truth, classes);
  Run run("eval", cfg, inv, err);
  for (const auto& w : gt.warnings) run.warn(w);
  for (const auto& k : unmatched) run.warn("predictions for '" + k + "' match no ground truth image");
  if (r.no_ground_truth) run.warn("ground truth holds no boxes; metrics are 0");
  const auto text = eval_result_json(r, classes);
  run.write_text("eval.json", text + "\n");
  run.write_text("eval.csv", eval_result_csv(r));
  run.extra() = triple(r);
  run.finish();
  out << text << '\n';
  return kExitOk;
}

struct NamedDetector {
  std::string name;
  Detector<float> detector;
};

int cmd_bench(const RunConfig& cfg, const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto data = load_dataset(cfg);
  std::vector<NamedDetector> dets;
  for (const auto& p : split_list(cfg.checkpoints)) {
    auto ckpt = open_checkpoint(p);
    require_same_classes(ckpt.classes, data.classes, p);
    dets.push_back({fs::path(p).stem().string(), std::move(ckpt.detector)});
    if (dets.back().name == "model") dets.back().name = fs::path(p).parent_path().filename().string();
  }
  for (const auto& v : split_list(cfg.variants)) {
    const auto spec = ScalingSpec::from_split(std::stoi(v), cfg.split);
    dets.push_back({"D" + v + "(" + spec.split_label() + ")",
                    Detector<float>::build(desk_config(spec), data.classes.size(), cfg.seed)});
  }
  if (dets.empty()) throw ConfigurationError("bench needs --checkpoint or --variants");
  Run run("bench", cfg, inv, err);
  for (const auto& w : data.warnings) run.warn(w);
  const auto& samples = eval_split(data);
  std::map<std::string, EvalResult> accuracy;
  std::map<std::string, LatencyReport> latency;
  std::ostringstream lat_csv;
  lat_csv << "architecture,input_resolution,fused_channels,bifpn_depth,head_depth,mean_ms,std_ms,num_runs,warmup_runs,"
             "device_label,timer_resolution_ns\n";
  for (const auto& d : dets) {
    if (latency.count(d.name)) throw ConfigurationError("duplicate detector name '" + d.name + "'");
    const auto& c = d.detector.config();
    std::vector<PixelImage> images;
    for (std::size_t i = 0; i < samples.size() && i < 8; ++i)
      images.push_back(prepare_sample(samples[i], c.input_resolution).image);
    auto rep = measure_latency(d.detector, images, cfg.runs, cfg.warmup, cfg.inference());
    rep.architecture = d.name;
    err << d.name << ": " << rep.mean_ms << " ms (std " << rep.std_ms << ")\n";
    lat_csv << d.name << ',' << c.input_resolution << ',' << c.fused_channels << ',' << c.bifpn_depth << ','
            << c.head_depth << ',' << rep.mean_ms << ',' << rep.std_ms << ',' << rep.num_runs << ','
            << rep.warmup_runs << ",\"" << rep.device_label << "\"," << rep.timer_resolution_ns << '\n';
    latency[d.name] = rep;
    accuracy[d.name] = evaluate_on(d.detector, samples, data.classes, cfg.inference());
  }
  const auto report = pareto_report(accuracy, latency);
  run.write_text("latency.csv", lat_csv.str());
  run.write_text("report.csv", report_csv(report));
  run.write_text("frontier.svg", report_svg(report, "AP vs latency"));
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"architecture", r.architecture},
                    {"ap", r.ap},
                    {"ap50", r.ap50},
                    {"ap75", r.ap75},
                    {"latency_ms", r.latency_ms},
                    {"latency_std_ms", r.latency_std_ms},
                    {"pareto", r.pareto_optimal}});
  json summary{{"run_dir", run.dir().string()}, {"rows", rows}};
  run.extra() = summary;
  run.finish();
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_study(const RunConfig& cfg, const Invocation& inv, std::ostream& out, std::ostream& err) {
  const auto paths = split_list(cfg.checkpoints);
  if (paths.empty()) throw ConfigurationError("study needs at least one --checkpoint");
  for (const auto& p : paths)
    if (!fs::exists(p)) throw IoError("checkpoint not found: " + p);
  const auto specs = cfg.study();
  const auto data = load_dataset(cfg);
  std::vector<NamedDetector> dets;
  for (const auto& p : paths) {
    auto ckpt = load_checkpoint(p);
    require_same_classes(ckpt.classes, data.classes, p);
    auto name = fs::path(p).stem().string();
    if (name == "model") name = fs::path(p).parent_path().filename().string();
    dets.push_back({name, std::move(ckpt.detector)});
  }
  Run run("study", cfg, inv, err);
  for (const auto& w : data.warnings) run.warn(w);
  std::vector<StudyDetector> refs;
  for (const auto& d : dets) refs.push_back({d.name, &d.detector});
  std::ostringstream log;
  const auto darkened = darken_samples(eval_split(data), cfg.darken_offset);
  const auto report = run_lowlight_study(refs, darkened, specs, data.classes, cfg.inference(), [&](const std::string& m) {
    log << m << '\n';
    err << m << '\n';
  });
  for (const auto& f : report.failures) run.warn(f.architecture + " " + f.strategy + " failed: " + f.error);
  run.write_text("report.csv", report_csv(report));
  run.write_text("frontier.svg", report_svg(report, "Low-light study: AP vs total latency"));
  run.write_text("study.log", log.str());
  json rows = json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"architecture", r.architecture},
                    {"enhancement", r.strategy},
                    {"ap", r.ap},
                    {"ap50", r.ap50},
                    {"ap75", r.ap75},
                    {"latency_ms", r.latency_ms},
                    {"enhance_ms", r.enhance_ms},
                    {"total_ms", r.total_ms()}});
  json failed = json::array();
  for (const auto& f : report.failures)
    failed.push_back({{"architecture", f.architecture}, {"enhancement", f.strategy}, {"error", f.error}});
  json summary{{"run_dir", run.dir().string()}, {"rows", rows}, {"failed", failed}};
  run.extra() = summary;
  run.finish();
  out << summary.dump() << '\n';
  return kExitOk;
}

std::string config_footer() {
  std::ostringstream os;
  os << "Config keys (key=value lines in --config, or --set KEY=VALUE):\n";
  for (const auto& k : RunConfig::keys()) os << "  " << std::left << std::setw(18) << k.key << k.doc << '\n';
  os << "Exit codes: 0 ok, 2 usage, 3 missing input, 4 runtime failure.";
  return os.str();
}

int emit_error(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  err << json{{"error", {{"exit_code", code}, {"kind", kind}, {"message", message}}}}.dump() << '\n';
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scalable BiFPN object detectors with desk-scale training, low-light study and latency benchmarks.",
               "effdet"};
  app.require_subcommand(1);
  app.footer("All config keys are listed by effdet --help.\nExit codes: 0 ok, 2 usage, 3 missing input, 4 runtime failure.");
  app.get_formatter()->column_width(34);
  Invocation inv;

  auto* scale = app.add_subcommand("scale", "Print the scaled architecture for phi and a depth split");
  arch_flags(scale, inv);
  scale->add_flag("--table", inv.table, "print rows for phi 0..3 of the split as TSV");

  auto* train = app.add_subcommand("train", "Train a detector; writes model.ckpt, loss.csv, eval.json");
  common_flags(train, inv);
  arch_flags(train, inv);
  key_flag<int>(train, inv, "--resolution", "resolution", "input side, multiple of 128 (0: desk default)");
  key_flag<int>(train, inv, "--width", "width", "fused channel width, multiple of 8 (0: desk default)");
  dataset_flags(train, inv);
  key_flag<int>(train, inv, "--epochs", "epochs", "training epochs");
  key_flag<int>(train, inv, "--batch-size", "batch_size", "images per SGD step");
  key_flag<double>(train, inv, "--lr", "learning_rate", "peak learning rate");

  auto* inferc = app.add_subcommand("infer", "Detect objects; writes detections.jsonl in source pixel coordinates");
  common_flags(inferc, inv);
  key_flag(inferc, inv, "--checkpoint", "checkpoints", "trained model (required)")->type_name("FILE");
  key_flag<double>(inferc, inv, "--tau", "tau", "confidence threshold in [0,1]");
  key_flag<double>(inferc, inv, "--nms-iou", "nms_iou", "NMS IoU threshold");
  key_flag<int>(inferc, inv, "--max-detections", "max_detections", "detections kept per image");
  dataset_flags(inferc, inv);
  list_flag(inferc, inv, "images", "images", "image files (default: the dataset's test split)")->type_name("IMAGE");

  auto* enh = app.add_subcommand("enhance", "Darken and/or enhance one image");
  common_flags(enh, inv);
  key_flag<int>(enh, inv, "--darken-offset", "darken_offset", "subtract this from every pixel first")
      ->each([&inv](const std::string&) { inv.flags["darken"] = "true"; });
  key_flag(enh, inv, "--enhance", "enhance", "strategy: none, const, external");
  key_flag<int>(enh, inv, "--c", "c", "offset added by the const strategy");
  key_flag(enh, inv, "--external-cmd", "external_cmd", "enhancer run as: CMD <in.png> <out.png>");
  key_flag(enh, inv, "input", "input", "input image (PNG or PPM)");
  key_flag(enh, inv, "output", "output", "output image (.png writes PNG, else PPM)");

  auto* ev = app.add_subcommand("eval", "Score detections against ground truth (AP, AP50, AP75)");
  common_flags(ev, inv);
  key_flag(ev, inv, "--pred", "pred", "detections JSON lines (required)")->type_name("FILE");
  key_flag(ev, inv, "--gt", "gt", "ground truth manifest or VOC annotation directory (required)")->type_name("PATH");
  key_flag(ev, inv, "--classes", "classes", "class map name");

  auto* bench = app.add_subcommand("bench", "Time batch-1 inference and write the AP/latency Pareto report");
  common_flags(bench, inv);
  list_flag(bench, inv, "--checkpoint", "checkpoints", "trained models to compare");
  key_flag(bench, inv, "--variants", "variants", "phi list of untrained desk-scale variants, e.g. 0,1,2,3");
  key_flag(bench, inv, "--split", "split", "depth split for --variants");
  key_flag<int>(bench, inv, "--runs", "runs", "timed runs per detector");
  key_flag<int>(bench, inv, "--warmup", "warmup", "untimed warmup runs per detector");
  dataset_flags(bench, inv);

  auto* study = app.add_subcommand("study", "Low-light study: darken, enhance, detect, score every pairing");
  common_flags(study, inv);
  list_flag(study, inv, "--checkpoint", "checkpoints", "trained models (at least one)");
  key_flag<int>(study, inv, "--darken-offset", "darken_offset", "darkening constant");
  key_flag(study, inv, "--specs", "study_specs", "scenarios, e.g. none,c=40,c=80,external");
  key_flag(study, inv, "--external-cmd", "external_cmd", "enhancer for the external scenario");
  key_flag<double>(study, inv, "--tau", "tau", "confidence threshold");
  dataset_flags(study, inv);

  app.footer(config_footer());

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    return emit_error(err, kExitUsage, "usage", e.what());
  }

  try {
    RunConfig cfg;
    if (!inv.config_file.empty()) cfg.apply(read_config_file(inv.config_file));
    KeyValues sets;
    for (const auto& s : inv.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigurationError("--set expects KEY=VALUE, got '" + s + "'");
      sets[s.substr(0, eq)] = s.substr(eq + 1);
    }
    cfg.apply(sets);
    cfg.apply(inv.flags);
    const auto* sub = app.get_subcommands().front();
    const auto name = sub->get_name();
    if (name == "scale") {
      if (!inv.table && !inv.flags.count("phi")) throw ConfigurationError("scale needs --phi or --table");
      return cmd_scale(cfg, inv, out);
    }
    cfg.validate();
    const auto arch = cfg.architecture();
    cfg.resolution = arch.input_resolution;
    cfg.width = arch.fused_channels;
    if (name == "train") return cmd_train(cfg, inv, out, err);
    if (name == "infer") return cmd_infer(cfg, inv, out, err);
    if (name == "enhance") return cmd_enhance(cfg, inv, out, err);
    if (name == "eval") return cmd_eval(cfg, inv, out, err);
    if (name == "bench") return cmd_bench(cfg, inv, out, err);
    return cmd_study(cfg, inv, out, err);
  } catch (const ConfigurationError& e) {
    return emit_error(err, kExitUsage, "usage", e.what());
  } catch (const DomainError& e) {
    return emit_error(err, kExitUsage, "usage", e.what());
  } catch (const IoError& e) {
    return emit_error(err, kExitMissingInput, "missing_input", e.what());
  } catch (const std::exception& e) {
    return emit_error(err, kExitRuntime, "runtime", e.what());
  }
}

}  // namespace effdet
