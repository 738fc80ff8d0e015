#pragma once

#include <cstddef>
#include <vector>

namespace camalign {

/// Single-channel image, row-major, intensities nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0F)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

  float& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::size_t size() const noexcept { return pixels.size(); }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Round intensities to the nearest 8-bit level (v*255 rounded, divided back).
void quantize_u8(Image& image);

}  // namespace camalign
