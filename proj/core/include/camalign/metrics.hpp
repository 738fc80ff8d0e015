#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "camalign/dataset.hpp"
#include "camalign/saliency.hpp"

namespace camalign {

struct EnergyScore {
  std::string sample_id;
  CamMethod method = CamMethod::GradCam;
  double value = 0.0;
  bool zero_map = false;
};

/// Share of map mass inside the union of boxes. A map with no mass scores 0
/// and is flagged. Throws std::invalid_argument for an empty box list,
/// ShapeError when a box does not fit the map.
EnergyScore proportional_energy(const SaliencyMap& map, std::span<const BoundingBox> boxes);

/// Mann-Whitney AUROC: fraction of positive/negative pairs ranked correctly,
/// ties counting one half. O(n log n) via tie-averaged ranks.
/// Throws std::invalid_argument unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// Middle value; mean of the two middle values for even counts.
double median(std::vector<double> values);

struct MethodEnergy {
  double median = 0.0;
  std::vector<EnergyScore> per_sample;
};

struct MetricsReport {
  std::string model;
  double auroc_target = 0.0;
  double auroc_external = 0.0;
  MethodEnergy gradcam;
  MethodEnergy hirescam;
  MethodEnergy scorecam;
  nlohmann::json provenance = nlohmann::json::object();
  std::string error;  // non-empty when the recipe failed

  const MethodEnergy& energy(CamMethod method) const;
  MethodEnergy& energy(CamMethod method);

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Throws std::invalid_argument naming the first schema violation.
void validate_report_json(const nlohmann::json& j);

}  // namespace camalign
