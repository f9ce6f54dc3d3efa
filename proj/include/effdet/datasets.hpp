// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "effdet/anchors.hpp"
#include "effdet/image.hpp"

namespace effdet {

/// Ordered class names; ids are positions.
class ClassMap {
 public:
  ClassMap() = default;
  explicit ClassMap(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::string& name(int id) const;
  std::optional<int> id(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  bool operator==(const ClassMap& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> ids_;
};

/// trash_icra19, wpbb, voc2012.
std::map<std::string, ClassMap> builtin_class_maps();
ClassMap builtin_class_map(const std::string& name);

/// "synth_<n>" class map for the synthetic shapes generator.
ClassMap synth_class_map(int num_classes);

struct AnnotatedSample {
  std::string image_path;  // file reference, or a synthetic id
  int width = 0;
  int height = 0;
  std::vector<GroundTruthBox> boxes;
  PixelImage image;  // filled for in-memory samples; empty when backed by a file

  bool operator==(const AnnotatedSample&) const = default;
};

/// The image pixels: the in-memory copy or a read of image_path.
PixelImage load_image(const AnnotatedSample& sample);

struct LoadResult {
  std::vector<AnnotatedSample> samples;
  std::vector<std::string> warnings;
};

/// Parses every *.xml in `directory` (sorted by filename). Objects whose name
/// is not in `classes`, or any inverted or out-of-bounds box, cause the whole
/// file to be skipped with a warning. Image paths resolve to
/// <directory>/../JPEGImages/<filename> when present, else next to the XML.
LoadResult load_voc_xml(const std::filesystem::path& directory, const ClassMap& classes);

/// JSON manifest: [{"image": path, "boxes": [{"xmin","ymin","xmax","ymax","class"}]}],
/// optionally with "width"/"height". "class" is a name or an integer id.
/// Relative image paths resolve against the manifest's directory.
LoadResult load_manifest(const std::filesystem::path& file, const ClassMap& classes);
void write_manifest(const std::filesystem::path& file, const std::vector<AnnotatedSample>& samples,
                    const ClassMap& classes);

/// First n samples; `truncated` reports whether fewer than n were available.
std::vector<AnnotatedSample> take_first(const std::vector<AnnotatedSample>& samples, int n,
                                        bool* short_of_request = nullptr);

/// Coloured rectangles and ellipses on noisy backgrounds. Class k is drawn in
/// palette colour k with shape k % 2 (rectangle, ellipse). Deterministic in seed.
std::vector<AnnotatedSample> synth_shapes(int num_images, int resolution, int num_classes, std::uint64_t seed);

/// Seeded shuffle then split; the first part holds round(fraction * n) samples.
std::pair<std::vector<AnnotatedSample>, std::vector<AnnotatedSample>> split_samples(
    const std::vector<AnnotatedSample>& samples, double train_fraction, std::uint64_t seed);

/// Aspect-preserving resize into a square canvas, padding right and bottom.
struct Letterbox {
  double scale = 1.0;
  int resolution = 0;

  Box to_canvas(const Box& box) const {
    return {box.x_min * scale, box.y_min * scale, box.x_max * scale, box.y_max * scale};
  }
  Box to_source(const Box& box) const {
    return {box.x_min / scale, box.y_min / scale, box.x_max / scale, box.y_max / scale};
  }
};

Letterbox letterbox_transform(int width, int height, int resolution);
PixelImage letterbox_image(const PixelImage& image, int resolution, Letterbox* transform = nullptr);

/// Image and boxes resized for a detector input of `resolution`.
struct TrainingSample {
  PixelImage image;
  std::vector<GroundTruthBox> boxes;
};

TrainingSample prepare_sample(const AnnotatedSample& sample, int resolution);
std::vector<TrainingSample> prepare_samples(const std::vector<AnnotatedSample>& samples, int resolution);

/// Throws InputError if a box is inverted, outside the image, or has an invalid class.
void validate_sample(const AnnotatedSample& sample, int num_classes);

}  // namespace effdet
