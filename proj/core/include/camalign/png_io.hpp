#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "camalign/image.hpp"

namespace camalign {

/// Decode a PNG into grayscale intensities value/255. Color, palette and
/// 16-bit inputs are converted by libpng. Throws std::runtime_error.
Image read_gray_png(const std::filesystem::path& path);

/// Write 8-bit grayscale; intensities are clamped to [0,1] and rounded.
void write_gray_png(const std::filesystem::path& path, const Image& image);

/// Interleaved 8-bit RGB raster.
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;  // 3 bytes per pixel

  RgbImage() = default;
  RgbImage(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::array<std::uint8_t, 3> pixel(int y, int x) const {
    const auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    return {p[0], p[1], p[2]};
  }
  void set(int y, int x, std::array<std::uint8_t, 3> rgb) {
    auto* p = &data[(static_cast<std::size_t>(y) * width + x) * 3];
    p[0] = rgb[0];
    p[1] = rgb[1];
    p[2] = rgb[2];
  }
};

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_rgb_png(const std::filesystem::path& path);

}  // namespace camalign
