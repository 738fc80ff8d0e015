#include "camalign/overlay.hpp"

#include <algorithm>
#include <cmath>

#include "camalign/errors.hpp"

namespace camalign {

std::array<std::uint8_t, 3> heat_color(double value) {
  const double v = std::clamp(value, 0.0, 1.0);
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  if (v < 0.5) {
    g = v / 0.5;
    b = 1.0 - g;
  } else {
    r = (v - 0.5) / 0.5;
    g = 1.0 - r;
  }
  auto u8 = [](double c) { return static_cast<std::uint8_t>(std::lround(c * 255.0)); };
  return {u8(r), u8(g), u8(b)};
}

RgbImage render_overlay(const Image& image, const SaliencyMap& map, std::span<const BoundingBox> boxes) {
  if (map.height != image.height || map.width != image.width) {
    throw ShapeError("overlay: saliency map and image sizes differ");
  }
  RgbImage out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double gray = std::clamp(static_cast<double>(image.at(y, x)), 0.0, 1.0) * 255.0;
      const double m = map.at(y, x);
      if (m > kOverlayThreshold) {
        const auto heat = heat_color(m);
        std::array<std::uint8_t, 3> px{};
        for (int c = 0; c < 3; ++c) {
          px[c] = static_cast<std::uint8_t>(std::lround((1.0 - kOverlayAlpha) * gray + kOverlayAlpha * heat[c]));
        }
        out.set(y, x, px);
      } else {
        const auto g = static_cast<std::uint8_t>(std::lround(gray));
        out.set(y, x, {g, g, g});
      }
    }
  }
  for (const auto& b : boxes) {
    if (!b.fits(image.height, image.width)) throw ShapeError("overlay: box does not fit the image");
    for (int x = b.x; x < b.x + b.w; ++x) {
      out.set(b.y, x, kBoxColor);
      out.set(b.y + b.h - 1, x, kBoxColor);
    }
    for (int y = b.y; y < b.y + b.h; ++y) {
      out.set(y, b.x, kBoxColor);
      out.set(y, b.x + b.w - 1, kBoxColor);
    }
  }
  return out;
}

void render_overlay(const Image& image, const SaliencyMap& map, std::span<const BoundingBox> boxes,
                    const std::filesystem::path& path) {
  write_rgb_png(path, render_overlay(image, map, boxes));
}

}  // namespace camalign
