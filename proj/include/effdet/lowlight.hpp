// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "effdet/image.hpp"

namespace effdet {

enum class EnhanceStrategy { none, constant_c, external };

std::string to_string(EnhanceStrategy strategy);
/// Accepts "none", "const" / "constant_c", "external".
EnhanceStrategy parse_strategy(const std::string& text);

struct EnhancementSpec {
  int darken_offset = 120;
  EnhanceStrategy strategy = EnhanceStrategy::none;
  int c = 0;
  std::string external_command;  // invoked as: <command> <input.png> <output.png>

  void validate() const;
  /// "none", "c=40", "external".
  std::string label() const;
};

/// max(v - offset, 0) on every channel value.
PixelImage darken(const PixelImage& image, int offset);
/// min(v + c, 255) on every channel value.
PixelImage brighten_constant(const PixelImage& image, int c);

struct EnhanceResult {
  PixelImage image;
  double latency_seconds = 0.0;
  bool includes_io = false;  // true for the external strategy (process + file round trip)
};

/// Applies the enhancement strategy (darkening is not applied here). Throws
/// EnhancementError when an external command fails or leaves no valid output.
EnhanceResult enhance(const PixelImage& image, const EnhancementSpec& spec);

}  // namespace effdet
