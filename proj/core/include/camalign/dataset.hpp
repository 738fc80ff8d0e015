#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "camalign/image.hpp"

namespace camalign {

/// Objective whose positive samples carry lesion boxes. Manifests do not
/// name it; by convention it is the first objective.
inline constexpr std::size_t kActiveObjective = 0;

/// Axis-aligned pixel box. A pixel (px, py) is inside iff
/// x <= px < x + w and y <= py < y + h.
struct BoundingBox {
  int x = 0;
  int y = 0;
  int w = 1;
  int h = 1;

  bool contains(int px, int py) const noexcept { return px >= x && px < x + w && py >= y && py < y + h; }
  bool fits(int height, int width) const noexcept {
    return w >= 1 && h >= 1 && x >= 0 && y >= 0 && x + w <= width && y + h <= height;
  }
  long long area() const noexcept { return static_cast<long long>(w) * h; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);
Split split_from_string(std::string_view name);

struct Sample {
  std::string id;
  Image image;
  std::vector<int> labels;  // one 0/1 value per objective
  std::vector<BoundingBox> boxes;
  Split split = Split::Train;
  std::string path;  // image path relative to the manifest

  bool positive(std::size_t objective = kActiveObjective) const { return labels.at(objective) == 1; }

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// In-memory form of a dataset manifest.
struct Dataset {
  std::vector<std::string> objective_names;
  int height = 0;
  int width = 0;
  std::vector<Sample> samples;
  std::string provenance = "external";

  std::size_t objectives() const noexcept { return objective_names.size(); }
  std::vector<const Sample*> in_split(Split split) const;
  bool has_split(Split split) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Per-objective class counts over a subset of samples.
struct LabelCounts {
  std::vector<std::size_t> positive;
  std::vector<std::size_t> negative;
};
LabelCounts count_labels(const std::vector<const Sample*>& samples, std::size_t objectives);

enum class IssueKind { Parse, MissingImage, ImageSize, LabelLength, BadLabel, BoxOutOfBounds, BoxWithoutPositive, DuplicateId, BadSplit };

std::string_view to_string(IssueKind kind);

struct ManifestIssue {
  std::string sample_id;
  IssueKind kind = IssueKind::Parse;
  std::string message;
};

/// Every invariant violation found in a manifest, in sample order. Images are
/// checked for existence and size but not kept.
std::vector<ManifestIssue> diagnose_manifest(const std::filesystem::path& manifest_path);

/// Write `manifest.json`, `provenance.json` and `images/<id>.png` under `dir`.
/// Sample paths are rewritten to `images/<id>.png`.
void write_dataset(Dataset& dataset, const std::filesystem::path& dir);

/// Parse and validate a manifest; image paths are resolved relative to it.
/// Throws LoadError naming the first offending sample (the message lists all
/// issues). Reads `provenance.json` beside the manifest when present.
Dataset load_manifest(const std::filesystem::path& manifest_path);

/// Validate the in-memory invariants; throws LoadError.
void validate(const Dataset& dataset);

}  // namespace camalign
