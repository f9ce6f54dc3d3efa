// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <utility>

namespace effdet {

/// Scaling coefficient plus the parent depth split (fusion layers; head convs).
struct ScalingSpec {
  int phi = 0;
  int n_bifpn_0 = 3;
  int n_headconv_0 = 3;

  /// Validates phi in [0,7] and both parent depths >= 1.
  static ScalingSpec make(int phi, int n_bifpn_0, int n_headconv_0);
  /// Like make(), additionally enforcing n_bifpn_0 + n_headconv_0 == 6.
  static ScalingSpec split_variant(int phi, int n_bifpn_0, int n_headconv_0);
  /// Parses a split written "1-5" / "3-3" / "5-1" (any positive pair).
  static ScalingSpec from_split(int phi, const std::string& split);

  std::string split_label() const;
  bool operator==(const ScalingSpec&) const = default;
};

struct ArchitectureConfig {
  int input_resolution = 512;
  int backbone_tier = 0;
  int fused_channels = 64;
  int bifpn_depth = 3;
  int head_depth = 3;

  bool operator==(const ArchitectureConfig&) const = default;

  /// Flat "key=value" lines, one per field, in declaration order.
  std::string to_record() const;
  static ArchitectureConfig from_record(const std::string& text);
  std::map<std::string, int> to_map() const;
};

// W = 64 * 1.35^phi, unrounded.
double raw_width(int phi);
// Published widths for phi <= 3, nearest multiple of 8 (ties up) beyond.
int snapped_width(int phi);
int resolution(int phi);
std::pair<int, int> depths(const ScalingSpec& spec);
ArchitectureConfig build_config(const ScalingSpec& spec);

/// Same depths and backbone tier as `config` with resolution and channel width
/// replaced, for desk-scale experiments. Validates the overrides.
ArchitectureConfig with_desk_scale(ArchitectureConfig config, int resolution,
                                   int fused_channels);

/// Desk-scale family member: resolution / 4 rounded up to a multiple of 128,
/// width / 2 rounded up to a multiple of 8. Gives 128/32, 256/48, 256/56,
/// 256/80 for phi 0..3.
int desk_resolution(int phi);
int desk_width(int phi);
ArchitectureConfig desk_config(const ScalingSpec& spec);

/// Throws ConfigurationError when an ArchitectureConfig invariant is violated.
void validate(const ArchitectureConfig& config);

/// One table row: "D3(1-5) 896 B3 160 4 6".
std::string table_row(const ScalingSpec& spec);

}  // namespace effdet
