#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camalign/dataset.hpp"
#include "camalign/rng.hpp"

namespace camalign {

/// Gaussian lesion blob parameters. A blob's extent is a disc of radius
/// kLesionExtent * sigma_major around its center; the recorded box covers it.
struct LesionSpec {
  double sigma_min = 1.5;
  double sigma_max = 2.5;
  double amplitude_min = 0.2;
  double amplitude_max = 0.35;
  int count_min = 1;
  int count_max = 2;
  double elongation_max = 1.0;  // ratio of major to minor axis sigma

  friend bool operator==(const LesionSpec&, const LesionSpec&) = default;
};

inline constexpr double kLesionExtent = 2.5;

struct SynthObjective {
  std::string name;
  double positive_rate = 0.1;
  LesionSpec lesion;

  friend bool operator==(const SynthObjective&, const SynthObjective&) = default;
};

/// Global acquisition shift used for the "external" variant:
/// out = clamp(contrast * (v - 0.5) + 0.5 + brightness + N(0, noise_std)).
struct SynthStyle {
  double contrast = 1.0;
  double brightness = 0.0;
  double noise_std = 0.0;
  double blur_sigma = 0.0;

  friend bool operator==(const SynthStyle&, const SynthStyle&) = default;
};

struct SynthConfig {
  std::string name = "target";
  int height = 64;
  int width = 64;
  int n_train = 1400;
  int n_validation = 350;
  int n_test = 475;
  std::vector<SynthObjective> objectives;
  /// Probability that the corner marker appears on an active-positive sample.
  double shortcut_strength = 0.0;
  int shortcut_size = 4;
  double shortcut_intensity = 1.0;
  /// Probability of a label-independent marker at a random border position.
  double distractor_rate = 0.0;
  double noise_std = 0.02;
  SynthStyle style;
  std::uint64_t seed = 1;

  std::size_t objectives_count() const noexcept { return objectives.size(); }
  int total() const noexcept { return n_train + n_validation + n_test; }
  void validate() const;

  static SynthConfig proxy_default();
  static SynthConfig target_default();
  /// Same lesion model as the target, 300 samples, no marker, style-shifted.
  static SynthConfig external_default();

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

/// Deterministic in (config, seed): byte-identical pixels and manifest.
/// Class counts per split follow deterministic quotas round(rate * n).
Dataset generate_synthetic(const SynthConfig& config);

/// Whether the corner marker occupies its fixed location in `image`.
bool has_corner_marker(const Image& image, const SynthConfig& config);

/// Largest-remainder stratified assignment. Returns a split index per entry
/// of `classes`. Fractions must sum to 1; every class needs at least as many
/// members as there are splits.
std::vector<int> stratified_split(std::span<const int> classes, std::span<const double> fractions,
                                  std::uint64_t seed);

/// Reassign train/validation/test for the active objective using stratified_split.
void assign_splits(Dataset& dataset, std::span<const double> fractions, std::uint64_t seed);

// --- augmentation -----------------------------------------------------------

enum class AugmentStage { Proxy, Target };

struct ElasticParams {
  double alpha = 8.0;  // displacement noise amplitude, pixels
  double sigma = 4.0;  // Gaussian smoothing width, pixels
};

struct AugmentConfig {
  double flip_probability = 0.5;
  double elastic_probability = 0.8;
  ElasticParams elastic;
};

BoundingBox flip_box(const BoundingBox& box, int width);
Image flip_horizontal(const Image& image);
Sample flip_horizontal(const Sample& sample);

/// Simard-style warp: uniform [-alpha, alpha] noise per pixel and axis,
/// Gaussian-smoothed, bilinear resampling with clamped borders.
Image elastic_deform(const Image& image, const ElasticParams& params, Rng& rng);

/// Proxy: mirror with flip_probability. Target: elastic warp with
/// elastic_probability (boxes untouched). Labels are never changed.
Sample augment(const Sample& sample, AugmentStage stage, Rng& rng, const AugmentConfig& config = {});

}  // namespace camalign
