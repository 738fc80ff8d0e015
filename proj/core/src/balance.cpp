#include "camalign/balance.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "camalign/errors.hpp"

namespace camalign {

ObjectiveWeights compute_weights(const ClassCounts& counts) {
  if (counts.positive.size() != counts.negative.size()) {
    throw ShapeError("class counts: positive/negative vectors differ in length");
  }
  ObjectiveWeights weights(counts.positive.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto sp = counts.positive[i];
    const auto sn = counts.negative[i];
    if (sp == 0 || sn == 0) {
      throw EmptyClassError(i, "objective " + std::to_string(i) + " has no " + (sp == 0 ? "positive" : "negative") +
                                   " samples; class weights are undefined");
    }
    const double p = static_cast<double>(sp);
    const double n = static_cast<double>(sn);
    weights[i].positive = sn > sp ? 1.0 : n / p;
    weights[i].negative = sp > sn ? 1.0 : p / n;
  }
  return weights;
}

ObjectiveWeights unbalanced_weights(std::size_t objectives) { return ObjectiveWeights(objectives); }

namespace {

void check_lengths(std::size_t predictions, std::size_t targets, std::size_t weights) {
  if (predictions != targets || predictions != weights) {
    throw ShapeError("weighted_bce: lengths differ (predictions " + std::to_string(predictions) + ", targets " +
                     std::to_string(targets) + ", weights " + std::to_string(weights) + ")");
  }
}

}  // namespace

double weighted_bce(std::span<const double> predictions, std::span<const int> targets,
                    const ObjectiveWeights& weights) {
  check_lengths(predictions.size(), targets.size(), weights.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double f = std::clamp(predictions[i], kBceEpsilon, 1.0 - kBceEpsilon);
    const int t = targets[i];
    loss -= weights[i].for_target(t) * (t == 1 ? std::log(f) : std::log1p(-f));
  }
  return loss;
}

std::vector<double> weighted_bce_gradient(std::span<const double> predictions, std::span<const int> targets,
                                          const ObjectiveWeights& weights) {
  check_lengths(predictions.size(), targets.size(), weights.size());
  std::vector<double> grad(predictions.size(), 0.0);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double f = predictions[i];
    if (f < kBceEpsilon || f > 1.0 - kBceEpsilon) continue;
    const int t = targets[i];
    grad[i] = weights[i].for_target(t) * (t == 1 ? -1.0 / f : 1.0 / (1.0 - f));
  }
  return grad;
}

double weighted_bce_batch(std::span<const std::vector<double>> predictions,
                          std::span<const std::vector<int>> targets, const ObjectiveWeights& weights) {
  if (predictions.size() != targets.size()) throw ShapeError("weighted_bce_batch: batch sizes differ");
  if (predictions.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < predictions.size(); ++b) total += weighted_bce(predictions[b], targets[b], weights);
  return total / static_cast<double>(predictions.size());
}

nlohmann::json to_json(const ObjectiveWeights& weights) {
  auto out = nlohmann::json::array();
  for (const auto& w : weights) out.push_back({{"w_plus", w.positive}, {"w_minus", w.negative}});
  return out;
}

}  // namespace camalign
