// SPDX-License-Identifier: Apache-2.0
#include "effdet/runconfig.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <variant>

#include "effdet/errors.hpp"
#include "json.hpp"

namespace effdet {

namespace {

using Member = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*, std::string RunConfig::*,
                            std::uint64_t RunConfig::*>;

struct Field {
  const char* key;
  Member member;
  const char* doc;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      {"phi", &RunConfig::phi, "scaling coefficient, 0..7"},
      {"split", &RunConfig::split, "depth split N_bifpn-N_head, e.g. 1-5, 3-3, 5-1"},
      {"resolution", &RunConfig::resolution, "input side in pixels, multiple of 128; 0 = desk default for phi"},
      {"width", &RunConfig::width, "fused channel width, multiple of 8; 0 = desk default for phi"},
      {"dataset", &RunConfig::dataset, "synth, a JSON manifest, or a VOC annotation directory"},
      {"classes", &RunConfig::classes, "class map: trash_icra19, wpbb, voc2012 or synth_N"},
      {"synth_images", &RunConfig::synth_images, "number of synthetic images"},
      {"synth_resolution", &RunConfig::synth_resolution, "side of synthetic images"},
      {"take_first", &RunConfig::take_first, "keep only the first N samples; 0 keeps all"},
      {"train_fraction", &RunConfig::train_fraction, "seeded train/test split fraction"},
      {"epochs", &RunConfig::epochs, "training epochs"},
      {"batch_size", &RunConfig::batch_size, "images per SGD step"},
      {"learning_rate", &RunConfig::learning_rate, "peak learning rate"},
      {"momentum", &RunConfig::momentum, "SGD momentum"},
      {"weight_decay", &RunConfig::weight_decay, "L2 decay on conv weights"},
      {"warmup_fraction", &RunConfig::warmup_fraction, "share of steps with linear warmup"},
      {"clip_norm", &RunConfig::clip_norm, "global gradient norm clip"},
      {"flip", &RunConfig::flip, "random horizontal flip during training"},
      {"tau", &RunConfig::tau, "confidence threshold, detections below are dropped"},
      {"nms_iou", &RunConfig::nms_iou, "NMS IoU threshold"},
      {"max_detections", &RunConfig::max_detections, "detections kept per image"},
      {"darken", &RunConfig::darken, "enhance: darken the input before enhancing"},
      {"darken_offset", &RunConfig::darken_offset, "constant subtracted from every pixel, 0..255"},
      {"enhance", &RunConfig::enhance, "enhancement strategy: none, const, external"},
      {"c", &RunConfig::c, "constant added by the const strategy, 0..255"},
      {"external_cmd", &RunConfig::external_cmd, "enhancer command, run as: cmd <in.png> <out.png>"},
      {"study_specs", &RunConfig::study_specs, "study scenarios: none, c=N, external"},
      {"runs", &RunConfig::runs, "timed latency runs"},
      {"warmup", &RunConfig::warmup, "untimed warmup runs"},
      {"variants", &RunConfig::variants, "phi values of untrained desk-scale variants to time"},
      {"checkpoints", &RunConfig::checkpoints, "checkpoint files"},
      {"images", &RunConfig::images, "image files for infer"},
      {"input", &RunConfig::input, "enhance input image"},
      {"output", &RunConfig::output, "enhance output image"},
      {"pred", &RunConfig::pred, "detections JSON lines file"},
      {"gt", &RunConfig::gt, "ground truth manifest or VOC directory"},
      {"output_dir", &RunConfig::output_dir, "output root; runs go to <root>/<command>-<stamp>"},
      {"seed", &RunConfig::seed, "seed for data, initialisation and shuffling"},
  };
  return f;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw ConfigurationError("config key '" + key + "': '" + value + "' is not " + want);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value, const char* want) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value, want);
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

}  // namespace

const std::vector<RunConfig::KeyDoc>& RunConfig::keys() {
  static const std::vector<KeyDoc> k = [] {
    std::vector<KeyDoc> out;
    for (const auto& f : fields()) out.push_back({f.key, f.doc});
    return out;
  }();
  return k;
}

void RunConfig::apply(const KeyValues& values) {
  for (const auto& [key, raw] : values) {
    const auto it = std::find_if(fields().begin(), fields().end(), [&](const Field& f) { return key == f.key; });
    if (it == fields().end()) throw ConfigurationError("unknown config key '" + key + "'");
    const auto value = trim(raw);
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<T, int>) {
            this->*member = parse_number<int>(key, value, "an integer");
          } else if constexpr (std::is_same_v<T, std::uint64_t>) {
            this->*member = parse_number<std::uint64_t>(key, value, "a non-negative 64-bit integer");
          } else if constexpr (std::is_same_v<T, double>) {
            this->*member = parse_number<double>(key, value, "a number");
          } else if constexpr (std::is_same_v<T, bool>) {
            if (value == "true" || value == "1")
              this->*member = true;
            else if (value == "false" || value == "0")
              this->*member = false;
            else
              bad_value(key, value, "true or false");
          } else {
            this->*member = value;
          }
        },
        it->member);
  }
}

KeyValues RunConfig::to_key_values() const {
  KeyValues out;
  for (const auto& f : fields()) {
    std::visit(
        [&](auto member) {
          using T = std::remove_cvref_t<decltype(this->*member)>;
          if constexpr (std::is_same_v<T, double>)
            out[f.key] = format_double(this->*member);
          else if constexpr (std::is_same_v<T, bool>)
            out[f.key] = this->*member ? "true" : "false";
          else if constexpr (std::is_same_v<T, std::string>)
            out[f.key] = this->*member;
          else
            out[f.key] = std::to_string(this->*member);
        },
        f.member);
  }
  return out;
}

std::string format_config(const RunConfig& config) {
  const auto kv = config.to_key_values();
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << '=' << kv.at(f.key) << '\n';
  return os.str();
}

void RunConfig::validate() const {
  scaling();
  architecture();
  sgd();
  inference().validate();
  enhancement().validate();
  study();
  if (synth_images < 1) throw ConfigurationError("synth_images must be >= 1");
  if (synth_resolution < 64) throw ConfigurationError("synth_resolution must be >= 64");
  if (take_first < 0) throw ConfigurationError("take_first must be >= 0");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigurationError("train_fraction must be in (0, 1]");
  if (runs < 1) throw ConfigurationError("runs must be >= 1");
  if (warmup < 0) throw ConfigurationError("warmup must be >= 0");
  for (const auto& v : split_list(variants)) parse_number<int>("variants", v, "an integer");
}

ArchitectureConfig RunConfig::architecture() const {
  const auto spec = scaling();
  return with_desk_scale(build_config(spec), resolution > 0 ? resolution : desk_resolution(spec.phi),
                         width > 0 ? width : desk_width(spec.phi));
}

SgdOptions RunConfig::sgd() const {
  SgdOptions o;
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.learning_rate = learning_rate;
  o.momentum = momentum;
  o.weight_decay = weight_decay;
  o.warmup_fraction = warmup_fraction;
  o.clip_norm = clip_norm;
  o.horizontal_flip = flip;
  o.seed = seed;
  if (epochs < 1 || batch_size < 1) throw ConfigurationError("epochs and batch_size must be >= 1");
  if (!(learning_rate > 0) || momentum < 0 || momentum >= 1 || weight_decay < 0 || warmup_fraction < 0 ||
      warmup_fraction > 1 || !(clip_norm > 0))
    throw ConfigurationError("training hyperparameter out of range");
  return o;
}

InferenceConfig RunConfig::inference() const {
  InferenceConfig cfg;
  cfg.confidence_threshold = tau;
  cfg.nms_iou_threshold = nms_iou;
  cfg.max_detections = max_detections;
  return cfg;
}

EnhancementSpec RunConfig::enhancement() const {
  EnhancementSpec s;
  s.darken_offset = darken_offset;
  s.strategy = parse_strategy(enhance);
  s.c = c;
  s.external_command = external_cmd;
  return s;
}

std::vector<EnhancementSpec> RunConfig::study() const {
  std::vector<EnhancementSpec> out;
  for (const auto& item : split_list(study_specs)) {
    EnhancementSpec s;
    s.darken_offset = darken_offset;
    if (item == "none") {
    } else if (item.rfind("c=", 0) == 0) {
      s.strategy = EnhanceStrategy::constant_c;
      s.c = parse_number<int>("study_specs", item.substr(2), "c=<0..255>");
    } else if (item == "external") {
      s.strategy = EnhanceStrategy::external;
      s.external_command = external_cmd;
    } else {
      throw ConfigurationError("unknown study scenario '" + item + "' (none, c=N, external)");
    }
    s.validate();
    out.push_back(s);
  }
  if (out.empty()) throw ConfigurationError("study_specs is empty");
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

KeyValues read_config_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config file " + file.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const auto text = buffer.str();
  KeyValues out;
  if (file.extension() == ".json") {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      throw ConfigurationError("config " + file.string() + ": " + e.what());
    }
    const auto& obj = doc.contains("config") ? doc["config"] : doc;
    if (!obj.is_object()) throw ConfigurationError("config " + file.string() + " holds no config object");
    for (const auto& [k, v] : obj.items()) out[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return out;
  }
  std::istringstream lines(text);
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigurationError(file.string() + ":" + std::to_string(number) + ": expected key=value");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

Dataset load_dataset(const RunConfig& config) {
  Dataset d;
  d.classes = builtin_class_map(config.classes);
  std::vector<AnnotatedSample> all;
  if (config.dataset == "synth") {
    all = synth_shapes(config.synth_images, config.synth_resolution, d.classes.size(), config.seed);
  } else {
    const std::filesystem::path path(config.dataset);
    if (!std::filesystem::exists(path)) throw IoError("dataset not found: " + path.string());
    auto loaded = std::filesystem::is_directory(path) ? load_voc_xml(path, d.classes) : load_manifest(path, d.classes);
    all = std::move(loaded.samples);
    d.warnings = std::move(loaded.warnings);
  }
  if (config.take_first > 0) {
    bool short_of = false;
    all = take_first(all, config.take_first, &short_of);
    if (short_of)
      d.warnings.push_back("take_first=" + std::to_string(config.take_first) + " but only " +
                           std::to_string(all.size()) + " samples are available");
  }
  if (config.train_fraction >= 1.0) {
    d.train = std::move(all);
  } else {
    std::tie(d.train, d.test) = split_samples(all, config.train_fraction, config.seed);
  }
  return d;
}

}  // namespace effdet
