// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "effdet/datasets.hpp"
#include "effdet/infer.hpp"
#include "effdet/lowlight.hpp"
#include "effdet/scalecfg.hpp"
#include "effdet/train.hpp"

namespace effdet {

using KeyValues = std::map<std::string, std::string>;

/// Every setting a command can take. Lists are comma separated.
struct RunConfig {
  // architecture; resolution/width 0 mean the desk-scale default for phi
  int phi = 0;
  std::string split = "1-5";
  int resolution = 0;
  int width = 0;
  // data
  std::string dataset = "synth";  // "synth", a JSON manifest, or a VOC annotation directory
  std::string classes = "synth_3";
  int synth_images = 250;
  int synth_resolution = 128;
  int take_first = 0;  // 0 keeps everything
  double train_fraction = 0.8;
  // training
  int epochs = 30;
  int batch_size = 4;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 4e-5;
  double warmup_fraction = 0.05;
  double clip_norm = 10.0;
  bool flip = true;
  // inference
  double tau = 0.05;
  double nms_iou = 0.5;
  int max_detections = 100;
  // low light
  bool darken = false;  // enhance command only; the study always darkens
  int darken_offset = 120;
  std::string enhance = "none";
  int c = 0;
  std::string external_cmd;
  std::string study_specs = "none,c=40,c=80";
  // latency
  int runs = 30;
  int warmup = 5;
  std::string variants;  // phi list for untrained desk-scale variants
  // files
  std::string checkpoints;
  std::string images;
  std::string input;
  std::string output;
  std::string pred;
  std::string gt;
  std::string output_dir;
  std::uint64_t seed = 7;

  struct KeyDoc {
    std::string key;
    std::string doc;
  };
  /// Keys in file order with one-line descriptions.
  static const std::vector<KeyDoc>& keys();

  /// Applies `values` on top of the current settings. Unknown keys and
  /// unparsable values throw ConfigurationError.
  void apply(const KeyValues& values);
  KeyValues to_key_values() const;
  /// Checks ranges; does not touch the filesystem.
  void validate() const;

  ScalingSpec scaling() const { return ScalingSpec::from_split(phi, split); }
  ArchitectureConfig architecture() const;
  SgdOptions sgd() const;
  InferenceConfig inference() const;
  EnhancementSpec enhancement() const;
  std::vector<EnhancementSpec> study() const;
};

std::vector<std::string> split_list(const std::string& text);

/// "key = value" lines, '#' comments. A JSON file (run manifest) contributes
/// its "config" object instead.
KeyValues read_config_file(const std::filesystem::path& file);
std::string format_config(const RunConfig& config);

struct Dataset {
  ClassMap classes;
  std::vector<AnnotatedSample> train;
  std::vector<AnnotatedSample> test;
  std::vector<std::string> warnings;
};

/// Loads the configured dataset, applies take_first, then the seeded split.
/// A missing path throws IoError.
Dataset load_dataset(const RunConfig& config);

}  // namespace effdet
