#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "camalign/balance.hpp"
#include "camalign/image.hpp"

namespace camalign {

inline constexpr std::string_view kLastConv = "last_conv";

/// 3x3 convolution (padding 1) -> ReLU -> optional 2x2 max-pool.
struct ConvBlockSpec {
  int out_channels = 8;
  int stride = 1;
  bool pool = false;

  friend bool operator==(const ConvBlockSpec&, const ConvBlockSpec&) = default;
};

struct FeatureShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  int plane() const noexcept { return height * width; }
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

/// Single-channel input -> conv blocks -> global average pool -> linear -> M logits.
/// Blocks are named conv1, conv2, ... and the final one last_conv.
struct ModelConfig {
  int height = 64;
  int width = 64;
  std::vector<ConvBlockSpec> blocks;
  int objectives = 1;

  /// 8 -> 16 -> 32 -> 32 channels, pooling after the first three blocks.
  static ModelConfig desk_default(int height, int width, int objectives);

  /// Throws ConfigError unless: >= 2 blocks, last_conv has >= 4 channels and
  /// a spatial extent of at least 4x4, objectives >= 1.
  void validate() const;

  std::vector<std::string> layer_names() const;
  /// Block index for a layer name, or -1.
  int layer_index(std::string_view name) const;
  /// Post-ReLU, pre-pool activation shape of a block.
  FeatureShape activation_shape(std::size_t block) const;
  /// Block output shape (after pooling when enabled).
  FeatureShape output_shape(std::size_t block) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;

  friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Parameters in a fixed order: <layer>.weight, <layer>.bias for every conv
/// block, then head.weight [M x C] and head.bias [M]. Conv weights are
/// [out, in, 3, 3].
struct ModelState {
  ModelConfig config;
  std::string stage = "scratch";
  std::vector<ParamTensor> params;

  const ParamTensor& param(std::string_view name) const;
  ParamTensor& param(std::string_view name);
  std::size_t parameter_count() const;
  static bool is_head(const ParamTensor& p) { return p.name.starts_with("head."); }

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

/// Uniform fan-in initialization (He-uniform for conv weights, 1/sqrt(fan_in)
/// for the head), zero biases. Deterministic in seed.
ModelState init_model(const ModelConfig& config, std::uint64_t seed);

/// Check that parameter names, shapes and values are consistent and finite.
void validate(const ModelState& state);

std::vector<double> forward_logits(const ModelState& state, const Image& image);
/// Per-objective sigmoid probabilities.
std::vector<double> forward(const ModelState& state, const Image& image);

/// Activations at a named block (post-ReLU, pre-pool) and the gradient of one
/// objective's logit with respect to them. Layout is [channel][y][x].
struct ActivationRecord {
  FeatureShape shape;
  std::vector<double> activations;
  std::vector<double> gradients;

  double a(int k, int y, int x) const { return activations[index(k, y, x)]; }
  double g(int k, int y, int x) const { return gradients[index(k, y, x)]; }
  std::size_t index(int k, int y, int x) const {
    return (static_cast<std::size_t>(k) * shape.height + y) * shape.width + x;
  }
};

struct RecordedForward {
  std::vector<double> logits;
  std::vector<double> probabilities;
  ActivationRecord record;
};

RecordedForward forward_with_record(const ModelState& state, const Image& image, std::string_view layer,
                                    std::size_t objective);

/// Keep the backbone bit-exactly, re-initialize a head for `objectives`
/// outputs and tag the state "fine-tune".
ModelState swap_head(const ModelState& state, int objectives, std::uint64_t seed);

/// Arithmetic used for batched loss/gradient evaluation. Training runs in
/// single precision; gradient checks use double.
enum class Precision { Single, Double };

struct LossGradient {
  double loss = 0.0;
  /// d(mean batch loss)/d(param), one vector per ModelState::params entry.
  std::vector<std::vector<double>> gradients;
};

/// Mean weighted BCE over the batch and its exact gradient.
LossGradient loss_and_gradient(const ModelState& state, std::span<const Image* const> images,
                               std::span<const std::vector<int>* const> targets, const ObjectiveWeights& weights,
                               Precision precision = Precision::Single);

/// Mean weighted BCE over the batch (forward only).
double batch_loss(const ModelState& state, std::span<const Image* const> images,
                  std::span<const std::vector<int>* const> targets, const ObjectiveWeights& weights,
                  Precision precision = Precision::Single);

/// Logits for every image, row per image.
std::vector<std::vector<double>> batch_logits(const ModelState& state, std::span<const Image* const> images,
                                              Precision precision = Precision::Single);

double sigmoid(double z) noexcept;

}  // namespace camalign
