#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace camalign {

/// Clamp applied to predictions before taking logs.
inline constexpr double kBceEpsilon = 1e-7;

struct ClassCounts {
  std::vector<std::size_t> positive;  // S+ per objective
  std::vector<std::size_t> negative;  // S- per objective
};

struct WeightPair {
  double positive = 1.0;
  double negative = 1.0;

  /// Weight applied to a sample whose label for this objective is `target`.
  double for_target(int target) const noexcept { return target == 1 ? positive : negative; }

  friend bool operator==(const WeightPair&, const WeightPair&) = default;
};

using ObjectiveWeights = std::vector<WeightPair>;

/// Per-objective MOON weights: the majority class is down-weighted by the
/// minority/majority ratio, the minority class keeps weight 1.
/// Throws EmptyClassError if an objective lacks positives or negatives.
ObjectiveWeights compute_weights(const ClassCounts& counts);

/// All-ones weights for M objectives.
ObjectiveWeights unbalanced_weights(std::size_t objectives);

/// J = -sum_i w_i^{t_i} [t_i log f_i + (1 - t_i) log(1 - f_i)], with f
/// clamped to [eps, 1 - eps]. Throws ShapeError on length mismatch.
double weighted_bce(std::span<const double> predictions, std::span<const int> targets,
                    const ObjectiveWeights& weights);

/// dJ/df_i for the same loss; zero where the clamp is active.
std::vector<double> weighted_bce_gradient(std::span<const double> predictions, std::span<const int> targets,
                                          const ObjectiveWeights& weights);

/// Mean of per-sample weighted_bce over a batch (rows of equal length).
double weighted_bce_batch(std::span<const std::vector<double>> predictions,
                          std::span<const std::vector<int>> targets, const ObjectiveWeights& weights);

nlohmann::json to_json(const ObjectiveWeights& weights);

}  // namespace camalign
