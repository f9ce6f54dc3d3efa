// SPDX-License-Identifier: Apache-2.0
#include "effdet/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include "json.hpp"

#include "effdet/errors.hpp"

namespace effdet {

namespace fs = std::filesystem;

ClassMap::ClassMap(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!ids_.emplace(names_[i], static_cast<int>(i)).second)
      throw ConfigurationError("duplicate class name '" + names_[i] + "'");
  }
}

const std::string& ClassMap::name(int id) const {
  if (id < 0 || id >= size()) throw InputError("class id " + std::to_string(id) + " out of range");
  return names_[static_cast<std::size_t>(id)];
}

std::optional<int> ClassMap::id(const std::string& name) const {
  const auto it = ids_.find(name);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::map<std::string, ClassMap> builtin_class_maps() {
  return {
      {"trash_icra19", ClassMap({"bio", "plastic", "rov"})},
      {"wpbb", ClassMap({"bag", "bottle"})},
      {"voc2012", ClassMap({"aeroplane", "bicycle", "bird", "boat", "bottle", "bus", "car", "cat", "chair", "cow",
                            "diningtable", "dog", "horse", "motorbike", "person", "pottedplant", "sheep", "sofa",
                            "train", "tvmonitor"})},
  };
}

namespace {

struct Swatch {
  const char* name;
  std::array<int, 3> rgb;
};

constexpr std::array<Swatch, 8> kPalette = {{
    {"red", {220, 40, 40}},
    {"green", {40, 200, 60}},
    {"blue", {50, 80, 230}},
    {"yellow", {230, 210, 40}},
    {"magenta", {200, 50, 200}},
    {"cyan", {40, 200, 210}},
    {"orange", {240, 130, 30}},
    {"white", {235, 235, 235}},
}};

}  // namespace

ClassMap synth_class_map(int num_classes) {
  if (num_classes < 1 || num_classes > static_cast<int>(kPalette.size()))
    throw DomainError("synthetic shapes support 1..8 classes");
  std::vector<std::string> names;
  for (int k = 0; k < num_classes; ++k)
    names.push_back(std::string(kPalette[static_cast<std::size_t>(k)].name) + (k % 2 == 0 ? "_rectangle" : "_ellipse"));
  return ClassMap(std::move(names));
}

ClassMap builtin_class_map(const std::string& name) {
  auto maps = builtin_class_maps();
  const auto it = maps.find(name);
  if (it != maps.end()) return it->second;
  if (name.rfind("synth_", 0) == 0) {
    try {
      return synth_class_map(std::stoi(name.substr(6)));
    } catch (const std::invalid_argument&) {
    }
  }
  throw ConfigurationError("unknown class map '" + name + "'");
}

PixelImage load_image(const AnnotatedSample& sample) {
  if (!sample.image.empty()) return sample.image;
  return read_image(sample.image_path);
}

void validate_sample(const AnnotatedSample& sample, int num_classes) {
  for (const auto& gt : sample.boxes) {
    const auto& b = gt.box;
    if (!b.valid()) throw InputError("inverted box in " + sample.image_path);
    if (sample.width > 0 && sample.height > 0 &&
        (b.x_min < 0 || b.y_min < 0 || b.x_max > sample.width || b.y_max > sample.height))
      throw InputError("box outside image bounds in " + sample.image_path);
    if (gt.class_id < 0 || gt.class_id >= num_classes)
      throw InputError("invalid class id in " + sample.image_path);
  }
}

LoadResult load_voc_xml(const fs::path& directory, const ClassMap& classes) {
  namespace pt = boost::property_tree;
  std::error_code ec;
  if (!fs::is_directory(directory, ec)) throw IoError("cannot read annotation directory " + directory.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(directory)) {
    if (entry.is_regular_file() && entry.path().extension() == ".xml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  const fs::path jpeg_dir = directory.parent_path() / "JPEGImages";
  LoadResult result;
  for (const auto& file : files) {
    try {
      pt::ptree tree;
      pt::read_xml(file.string(), tree);
      const auto& ann = tree.get_child("annotation");
      AnnotatedSample sample;
      const auto filename = ann.get<std::string>("filename", file.stem().string() + ".jpg");
      sample.image_path = fs::exists(jpeg_dir) ? (jpeg_dir / filename).string() : (file.parent_path() / filename).string();
      sample.width = ann.get<int>("size.width", 0);
      sample.height = ann.get<int>("size.height", 0);
      for (const auto& [key, node] : ann) {
        if (key != "object") continue;
        const auto name = node.get<std::string>("name");
        const auto id = classes.id(name);
        if (!id) throw InputError("unknown class '" + name + "'");
        const Box box{node.get<double>("bndbox.xmin"), node.get<double>("bndbox.ymin"),
                      node.get<double>("bndbox.xmax"), node.get<double>("bndbox.ymax")};
        sample.boxes.push_back({box, *id});
      }
      validate_sample(sample, classes.size());
      result.samples.push_back(std::move(sample));
    } catch (const std::exception& e) {
      result.warnings.push_back("skipping " + file.filename().string() + ": " + e.what());
    }
  }
  return result;
}

LoadResult load_manifest(const fs::path& file, const ClassMap& classes) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read manifest " + file.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed manifest " + file.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw InputError("manifest must be a JSON array of samples");
  LoadResult result;
  std::size_t index = 0;
  for (const auto& entry : doc) {
    ++index;
    try {
      AnnotatedSample sample;
      fs::path image = entry.at("image").get<std::string>();
      if (image.is_relative()) image = file.parent_path() / image;
      sample.image_path = image.string();
      sample.width = entry.value("width", 0);
      sample.height = entry.value("height", 0);
      for (const auto& b : entry.at("boxes")) {
        int id = 0;
        const auto& cls = b.at("class");
        if (cls.is_string()) {
          const auto found = classes.id(cls.get<std::string>());
          if (!found) throw InputError("unknown class '" + cls.get<std::string>() + "'");
          id = *found;
        } else {
          id = cls.get<int>();
        }
        sample.boxes.push_back({{b.at("xmin").get<double>(), b.at("ymin").get<double>(), b.at("xmax").get<double>(),
                                 b.at("ymax").get<double>()},
                                id});
      }
      validate_sample(sample, classes.size());
      result.samples.push_back(std::move(sample));
    } catch (const std::exception& e) {
      result.warnings.push_back("skipping manifest entry " + std::to_string(index) + ": " + e.what());
    }
  }
  return result;
}

void write_manifest(const fs::path& file, const std::vector<AnnotatedSample>& samples, const ClassMap& classes) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& gt : s.boxes)
      boxes.push_back({{"xmin", gt.box.x_min},
                       {"ymin", gt.box.y_min},
                       {"xmax", gt.box.x_max},
                       {"ymax", gt.box.y_max},
                       {"class", classes.name(gt.class_id)}});
    doc.push_back({{"image", s.image_path}, {"width", s.width}, {"height", s.height}, {"boxes", boxes}});
  }
  std::ofstream out(file);
  if (!out) throw IoError("cannot write manifest " + file.string());
  out << doc.dump(1) << '\n';
}

std::vector<AnnotatedSample> take_first(const std::vector<AnnotatedSample>& samples, int n, bool* short_of_request) {
  if (n < 0) throw DomainError("take_first needs n >= 0");
  const auto count = std::min<std::size_t>(samples.size(), static_cast<std::size_t>(n));
  if (short_of_request) *short_of_request = count < static_cast<std::size_t>(n);
  return {samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(count)};
}

namespace {

// Portable draws from mt19937_64 (the std distributions are implementation-defined).
struct Draw {
  std::mt19937_64 rng;
  double unit() { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }
  int integer(int lo, int hi_inclusive) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
  }
};

std::uint8_t clamp_byte(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace

std::vector<AnnotatedSample> synth_shapes(int num_images, int resolution, int num_classes, std::uint64_t seed) {
  if (num_classes < 1 || num_classes > static_cast<int>(kPalette.size()))
    throw DomainError("synthetic shapes support 1..8 classes");
  if (resolution < 64) throw DomainError("synthetic resolution must be >= 64");
  if (num_images < 0) throw DomainError("num_images must be >= 0");
  Draw draw{std::mt19937_64(seed)};
  std::vector<AnnotatedSample> samples;
  samples.reserve(static_cast<std::size_t>(num_images));
  for (int n = 0; n < num_images; ++n) {
    AnnotatedSample s;
    s.image_path = "synth://" + std::to_string(seed) + "/" + std::to_string(n);
    s.width = s.height = resolution;
    s.image = PixelImage(resolution, resolution);
    std::array<int, 3> base{};
    for (auto& b : base) b = draw.integer(60, 160);
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x)
        for (int c = 0; c < 3; ++c) s.image.at(x, y, c) = clamp_byte(base[static_cast<std::size_t>(c)] + draw.integer(-25, 25));

    const int objects = draw.integer(1, 3);
    for (int o = 0, attempts = 0; o < objects && attempts < 50; ++attempts) {
      const int w = static_cast<int>(std::lround(draw.uniform(0.25, 0.55) * resolution));
      const double aspect = draw.uniform(0.6, 1.6);
      const int h = std::clamp(static_cast<int>(std::lround(w * aspect)), resolution / 5, (resolution * 6) / 10);
      const int x0 = draw.integer(0, resolution - w);
      const int y0 = draw.integer(0, resolution - h);
      const Box box{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x0 + w),
                    static_cast<double>(y0 + h)};
      const int class_id = draw.integer(0, num_classes - 1);
      bool crowded = false;
      for (const auto& other : s.boxes) crowded = crowded || iou(other.box, box) > 0.2;
      if (crowded) continue;
      const auto& colour = kPalette[static_cast<std::size_t>(class_id)].rgb;
      const bool ellipse = class_id % 2 == 1;
      const double cx = x0 + 0.5 * w;
      const double cy = y0 + 0.5 * h;
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) {
          if (ellipse) {
            const double dx = (x + 0.5 - cx) / (0.5 * w);
            const double dy = (y + 0.5 - cy) / (0.5 * h);
            if (dx * dx + dy * dy > 1.0) continue;
          }
          for (int c = 0; c < 3; ++c) s.image.at(x, y, c) = clamp_byte(colour[static_cast<std::size_t>(c)] + draw.integer(-15, 15));
        }
      }
      s.boxes.push_back({box, class_id});
      ++o;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::pair<std::vector<AnnotatedSample>, std::vector<AnnotatedSample>> split_samples(
    const std::vector<AnnotatedSample>& samples, double train_fraction, std::uint64_t seed) {
  if (train_fraction < 0.0 || train_fraction > 1.0) throw DomainError("split fraction must be in [0,1]");
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Draw draw{std::mt19937_64(seed)};
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[draw.rng() % i]);
  const auto cut = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(samples.size())));
  std::pair<std::vector<AnnotatedSample>, std::vector<AnnotatedSample>> out;
  for (std::size_t i = 0; i < order.size(); ++i) (i < cut ? out.first : out.second).push_back(samples[order[i]]);
  return out;
}

Letterbox letterbox_transform(int width, int height, int resolution) {
  if (width <= 0 || height <= 0 || resolution <= 0) throw DomainError("letterbox needs positive sizes");
  return {static_cast<double>(resolution) / std::max(width, height), resolution};
}

PixelImage letterbox_image(const PixelImage& image, int resolution, Letterbox* transform) {
  const auto t = letterbox_transform(image.width, image.height, resolution);
  if (transform) *transform = t;
  if (image.width == resolution && image.height == resolution) return image;
  const int w = std::clamp(static_cast<int>(std::lround(image.width * t.scale)), 1, resolution);
  const int h = std::clamp(static_cast<int>(std::lround(image.height * t.scale)), 1, resolution);
  const auto resized = resize_bilinear(image, w, h);
  PixelImage canvas(resolution, resolution, 0);
  for (int y = 0; y < h; ++y)
    std::copy_n(&resized.values[static_cast<std::size_t>(y) * w * 3], static_cast<std::size_t>(w) * 3,
                &canvas.values[static_cast<std::size_t>(y) * resolution * 3]);
  return canvas;
}

TrainingSample prepare_sample(const AnnotatedSample& sample, int resolution) {
  const auto image = load_image(sample);
  Letterbox t;
  TrainingSample out;
  out.image = letterbox_image(image, resolution, &t);
  for (const auto& gt : sample.boxes) {
    Box b = t.to_canvas(gt.box);
    b.x_max = std::min<double>(b.x_max, resolution);
    b.y_max = std::min<double>(b.y_max, resolution);
    if (b.valid()) out.boxes.push_back({b, gt.class_id});
  }
  return out;
}

std::vector<TrainingSample> prepare_samples(const std::vector<AnnotatedSample>& samples, int resolution) {
  std::vector<TrainingSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(prepare_sample(s, resolution));
  return out;
}

}  // namespace effdet
