// SPDX-License-Identifier: Apache-2.0
#include "effdet/scalecfg.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "effdet/errors.hpp"

namespace effdet {

namespace {

constexpr int kMaxPhi = 7;
constexpr std::array<int, 4> kPublishedWidths = {64, 88, 112, 160};

void require_phi(int phi) {
  if (phi < 0) throw DomainError("phi must be non-negative, got " + std::to_string(phi));
}

}  // namespace

ScalingSpec ScalingSpec::make(int phi, int n_bifpn_0, int n_headconv_0) {
  require_phi(phi);
  if (phi > kMaxPhi) throw DomainError("phi must be at most 7, got " + std::to_string(phi));
  if (n_bifpn_0 < 1 || n_headconv_0 < 1)
    throw DomainError("parent depths must be >= 1");
  return ScalingSpec{phi, n_bifpn_0, n_headconv_0};
}

ScalingSpec ScalingSpec::split_variant(int phi, int n_bifpn_0, int n_headconv_0) {
  if (n_bifpn_0 + n_headconv_0 != 6)
    throw DomainError("split variants keep n_bifpn_0 + n_headconv_0 == 6");
  return make(phi, n_bifpn_0, n_headconv_0);
}

ScalingSpec ScalingSpec::from_split(int phi, const std::string& split) {
  const auto dash = split.find('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 == split.size())
    throw DomainError("split must look like '1-5', got '" + split + "'");
  int a = 0;
  int b = 0;
  try {
    std::size_t used_a = 0;
    std::size_t used_b = 0;
    a = std::stoi(split.substr(0, dash), &used_a);
    b = std::stoi(split.substr(dash + 1), &used_b);
    if (used_a != dash || used_b != split.size() - dash - 1) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw DomainError("split must look like '1-5', got '" + split + "'");
  }
  return make(phi, a, b);
}

std::string ScalingSpec::split_label() const {
  return std::to_string(n_bifpn_0) + "-" + std::to_string(n_headconv_0);
}

double raw_width(int phi) {
  require_phi(phi);
  return 64.0 * std::pow(1.35, phi);
}

int snapped_width(int phi) {
  require_phi(phi);
  if (phi < static_cast<int>(kPublishedWidths.size())) return kPublishedWidths[phi];
  // Extrapolation: nearest multiple of 8, ties rounded up.
  return static_cast<int>(std::floor(raw_width(phi) / 8.0 + 0.5)) * 8;
}

int resolution(int phi) {
  require_phi(phi);
  return 512 + phi * 128;
}

std::pair<int, int> depths(const ScalingSpec& spec) {
  return {spec.n_bifpn_0 + spec.phi, spec.n_headconv_0 + spec.phi / 3};
}

ArchitectureConfig build_config(const ScalingSpec& spec) {
  const auto [bifpn, head] = depths(spec);
  ArchitectureConfig config{resolution(spec.phi), spec.phi, snapped_width(spec.phi), bifpn, head};
  validate(config);
  return config;
}

void validate(const ArchitectureConfig& config) {
  if (config.input_resolution <= 0 || config.input_resolution % 128 != 0)
    throw ConfigurationError("input_resolution must be a positive multiple of 128, got " +
                             std::to_string(config.input_resolution));
  if (config.backbone_tier < 0 || config.backbone_tier > kMaxPhi)
    throw ConfigurationError("backbone_tier must be in 0..7");
  if (config.fused_channels <= 0 || config.fused_channels % 8 != 0)
    throw ConfigurationError("fused_channels must be a positive multiple of 8, got " +
                             std::to_string(config.fused_channels));
  if (config.bifpn_depth < 1 || config.head_depth < 1)
    throw ConfigurationError("bifpn_depth and head_depth must be >= 1");
}

ArchitectureConfig with_desk_scale(ArchitectureConfig config, int resolution, int fused_channels) {
  config.input_resolution = resolution;
  config.fused_channels = fused_channels;
  validate(config);
  return config;
}

int desk_resolution(int phi) { return (resolution(phi) / 4 + 127) / 128 * 128; }

int desk_width(int phi) { return (snapped_width(phi) / 2 + 7) / 8 * 8; }

ArchitectureConfig desk_config(const ScalingSpec& spec) {
  return with_desk_scale(build_config(spec), desk_resolution(spec.phi), desk_width(spec.phi));
}

std::map<std::string, int> ArchitectureConfig::to_map() const {
  return {{"input_resolution", input_resolution},
          {"backbone_tier", backbone_tier},
          {"fused_channels", fused_channels},
          {"bifpn_depth", bifpn_depth},
          {"head_depth", head_depth}};
}

std::string ArchitectureConfig::to_record() const {
  std::ostringstream out;
  out << "input_resolution=" << input_resolution << '\n'
      << "backbone_tier=" << backbone_tier << '\n'
      << "fused_channels=" << fused_channels << '\n'
      << "bifpn_depth=" << bifpn_depth << '\n'
      << "head_depth=" << head_depth << '\n';
  return out.str();
}

ArchitectureConfig ArchitectureConfig::from_record(const std::string& text) {
  std::map<std::string, int> values;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InputError("malformed config record line: " + line);
    try {
      values[line.substr(0, eq)] = std::stoi(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw InputError("malformed config record value: " + line);
    }
  }
  auto take = [&](const char* key) {
    const auto it = values.find(key);
    if (it == values.end()) throw InputError(std::string("config record missing key ") + key);
    return it->second;
  };
  ArchitectureConfig config{take("input_resolution"), take("backbone_tier"),
                            take("fused_channels"), take("bifpn_depth"), take("head_depth")};
  validate(config);
  return config;
}

std::string table_row(const ScalingSpec& spec) {
  const auto config = build_config(spec);
  std::ostringstream out;
  out << 'D' << spec.phi << '(' << spec.split_label() << ")\t" << config.input_resolution << "\tB"
      << config.backbone_tier << '\t' << config.fused_channels << '\t' << config.bifpn_depth << '\t'
      << config.head_depth;
  return out.str();
}

}  // namespace effdet
