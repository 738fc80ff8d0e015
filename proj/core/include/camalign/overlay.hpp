#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>

#include "camalign/dataset.hpp"
#include "camalign/image.hpp"
#include "camalign/png_io.hpp"
#include "camalign/saliency.hpp"

namespace camalign {

inline constexpr std::array<std::uint8_t, 3> kBoxColor{255, 0, 255};
inline constexpr double kOverlayThreshold = 0.05;
inline constexpr double kOverlayAlpha = 0.5;

/// Heat color for a relevance in [0, 1]: blue (low) through green to red (high).
std::array<std::uint8_t, 3> heat_color(double value);

/// Grayscale base; heat color alpha-blended where the map exceeds the
/// threshold; 1 px magenta box outlines drawn last.
RgbImage render_overlay(const Image& image, const SaliencyMap& map, std::span<const BoundingBox> boxes);
void render_overlay(const Image& image, const SaliencyMap& map, std::span<const BoundingBox> boxes,
                    const std::filesystem::path& path);

}  // namespace camalign
