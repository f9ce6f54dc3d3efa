// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace effdet {

/// 8-bit interleaved RGB image.
struct PixelImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;  // height * width * 3, row-major, RGB

  static constexpr int channels = 3;

  PixelImage() = default;
  PixelImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h * channels, fill) {}

  std::uint8_t& at(int x, int y, int c) { return values[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  std::uint8_t at(int x, int y, int c) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return values.empty(); }
  bool operator==(const PixelImage&) const = default;
};

/// Reads PNG (8-bit, any colour type; alpha dropped, grey expanded) or binary PPM.
PixelImage read_image(const std::filesystem::path& path);
/// Writes PNG for ".png", binary PPM otherwise.
void write_image(const std::filesystem::path& path, const PixelImage& image);

/// Bilinear resize.
PixelImage resize_bilinear(const PixelImage& image, int width, int height);

}  // namespace effdet
