#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "camalign/balance.hpp"
#include "camalign/datagen.hpp"
#include "camalign/dataset.hpp"
#include "camalign/model.hpp"

namespace camalign {

enum class TrainStage { Proxy, Target };

std::string_view to_string(TrainStage stage);
TrainStage train_stage_from_string(std::string_view name);

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  TrainStage stage = TrainStage::Target;
  bool balanced = false;
  AdamHyper adam;
  int batch_size = 32;
  int max_epochs = 40;
  std::uint64_t seed = 0;
  bool augment = true;
  /// Start the head bias at the weighted class prior (see set_prior_head_bias).
  /// Applied by the harness when it builds the initial model. Off by default:
  /// a zero bias is the class prior of MOON-balanced runs only.
  bool prior_head_bias = false;
  AugmentConfig augmentation;
  Precision precision = Precision::Single;

  /// Desk-scale budgets: 30 epochs for proxy pre-training, 40 for the target.
  static TrainConfig defaults_for(TrainStage stage);
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochLoss {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochLoss> epochs;
  int selected_epoch = -1;  // 0-based; -1 when no epoch ran
  nlohmann::json config;
  ObjectiveWeights weights_used;

  nlohmann::json to_json() const;
};

struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;

  explicit AdamMoments(std::size_t n = 0) : first(n, 0.0), second(n, 0.0) {}
};

/// One bias-corrected Adam update at step t >= 1. Throws NumericError naming
/// `layer` on a non-finite gradient, ShapeError on size mismatch.
template <typename Param>
void adam_step(std::span<Param> params, std::span<const double> grads, AdamMoments& moments, long t,
               const AdamHyper& hyper, std::string_view layer = {});

extern template void adam_step<float>(std::span<float>, std::span<const double>, AdamMoments&, long,
                                      const AdamHyper&, std::string_view);
extern template void adam_step<double>(std::span<double>, std::span<const double>, AdamMoments&, long,
                                       const AdamHyper&, std::string_view);

/// Hooks for tests and progress reporting.
struct TrainObserver {
  /// Called with the ids of every sample that contributes to a gradient step.
  std::function<void(int epoch, std::span<const std::string> ids)> on_batch;
  std::function<void(int epoch, const EpochLoss&)> on_epoch;
};

struct TrainResult {
  ModelState best;
  TrainLog log;
};

/// Mini-batch Adam over the train split, validation loss after each epoch,
/// returns the snapshot with the lowest validation loss (earliest on ties).
/// Balanced runs use compute_weights on train-split counts; validation uses
/// the same weights.
TrainResult train(const ModelState& initial, const Dataset& dataset, const TrainConfig& config,
                  const TrainObserver* observer = nullptr);

/// Weights that train() would use for this dataset and flag.
ObjectiveWeights training_weights(const Dataset& dataset, bool balanced);

/// Set each head bias to the log-odds of the weighted positive mass on the
/// train split, log(w+ S+ / (w- S-)): 0 under MOON weights, the class prior
/// otherwise. Objectives with an empty class keep their bias.
void set_prior_head_bias(ModelState& state, const Dataset& dataset, bool balanced);

}  // namespace camalign
