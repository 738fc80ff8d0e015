#include "camalign/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "camalign/errors.hpp"
#include "camalign/rng.hpp"

using nlohmann::json;

namespace camalign {

namespace {

constexpr std::uint64_t kShuffleStream = 0x73687566;  // "shuf"
constexpr std::uint64_t kAugmentStream = 0x61756773;  // "augs"
constexpr std::size_t kEvalChunk = 128;

}  // namespace

std::string_view to_string(TrainStage stage) { return stage == TrainStage::Proxy ? "proxy" : "target"; }

TrainStage train_stage_from_string(std::string_view name) {
  if (name == "proxy") return TrainStage::Proxy;
  if (name == "target") return TrainStage::Target;
  throw ConfigError("unknown training stage '" + std::string(name) + "'");
}

TrainConfig TrainConfig::defaults_for(TrainStage stage) {
  TrainConfig c;
  c.stage = stage;
  c.max_epochs = stage == TrainStage::Proxy ? 30 : 40;
  c.batch_size = 32;
  return c;
}

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train: learning rate must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (max_epochs < 0) throw ConfigError("train: max epochs must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train: Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("train: Adam epsilon must be > 0");
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"stage", std::string(to_string(c.stage))},
           {"balanced", c.balanced},
           {"learning_rate", c.adam.learning_rate},
           {"beta1", c.adam.beta1},
           {"beta2", c.adam.beta2},
           {"epsilon", c.adam.epsilon},
           {"batch_size", c.batch_size},
           {"max_epochs", c.max_epochs},
           {"seed", c.seed},
           {"augment", c.augment},
           {"prior_head_bias", c.prior_head_bias},
           {"flip_probability", c.augmentation.flip_probability},
           {"elastic_probability", c.augmentation.elastic_probability},
           {"elastic_alpha", c.augmentation.elastic.alpha},
           {"elastic_sigma", c.augmentation.elastic.sigma},
           {"precision", c.precision == Precision::Single ? "single" : "double"}};
}

void from_json(const json& j, TrainConfig& c) {
  if (j.contains("stage")) c.stage = train_stage_from_string(j.at("stage").get<std::string>());
  c.balanced = j.value("balanced", c.balanced);
  c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.epsilon = j.value("epsilon", c.adam.epsilon);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.seed = j.value("seed", c.seed);
  c.augment = j.value("augment", c.augment);
  c.prior_head_bias = j.value("prior_head_bias", c.prior_head_bias);
  c.augmentation.flip_probability = j.value("flip_probability", c.augmentation.flip_probability);
  c.augmentation.elastic_probability = j.value("elastic_probability", c.augmentation.elastic_probability);
  c.augmentation.elastic.alpha = j.value("elastic_alpha", c.augmentation.elastic.alpha);
  c.augmentation.elastic.sigma = j.value("elastic_sigma", c.augmentation.elastic.sigma);
  if (j.contains("precision")) {
    const auto p = j.at("precision").get<std::string>();
    if (p != "single" && p != "double") throw ConfigError("train: precision must be 'single' or 'double'");
    c.precision = p == "single" ? Precision::Single : Precision::Double;
  }
}

json TrainLog::to_json() const {
  json epochs_json = json::array();
  for (const auto& e : epochs) epochs_json.push_back({{"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  return json{{"epochs", epochs_json},
              {"selected_epoch", selected_epoch},
              {"config", config},
              {"weights_used", camalign::to_json(weights_used)}};
}

template <typename Param>
void adam_step(std::span<Param> params, std::span<const double> grads, AdamMoments& moments, long t,
               const AdamHyper& hyper, std::string_view layer) {
  if (params.size() != grads.size() || moments.first.size() != params.size() ||
      moments.second.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ for '" + std::string(layer) + "'");
  }
  if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericError(std::string(layer), "non-finite gradient in layer '" + std::string(layer) + "'");
  }
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    auto& m = moments.first[i];
    auto& v = moments.second[i];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
    const double m_hat = m / c1;
    const double v_hat = v / c2;
    params[i] = static_cast<Param>(static_cast<double>(params[i]) - hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon));
  }
}

template void adam_step<float>(std::span<float>, std::span<const double>, AdamMoments&, long, const AdamHyper&,
                               std::string_view);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamMoments&, long, const AdamHyper&,
                                std::string_view);

ObjectiveWeights training_weights(const Dataset& dataset, bool balanced) {
  if (!balanced) return unbalanced_weights(dataset.objectives());
  const auto counts = count_labels(dataset.in_split(Split::Train), dataset.objectives());
  return compute_weights(ClassCounts{counts.positive, counts.negative});
}

void set_prior_head_bias(ModelState& state, const Dataset& dataset, bool balanced) {
  const auto counts = count_labels(dataset.in_split(Split::Train), dataset.objectives());
  auto& bias = state.param("head.bias").values;
  if (bias.size() != counts.positive.size()) {
    throw ShapeError("set_prior_head_bias: head has " + std::to_string(bias.size()) + " outputs, dataset has " +
                     std::to_string(counts.positive.size()) + " objectives");
  }
  const auto weights = training_weights(dataset, balanced);
  for (std::size_t o = 0; o < bias.size(); ++o) {
    const double pos = weights[o].positive * static_cast<double>(counts.positive[o]);
    const double neg = weights[o].negative * static_cast<double>(counts.negative[o]);
    if (pos > 0.0 && neg > 0.0) bias[o] = static_cast<float>(std::log(pos / neg));
  }
}

namespace {

double mean_loss(const ModelState& state, const std::vector<const Sample*>& samples, const ObjectiveWeights& weights,
                 Precision precision) {
  double total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t end = std::min(samples.size(), start + kEvalChunk);
    std::vector<const Image*> images;
    std::vector<const std::vector<int>*> targets;
    for (std::size_t i = start; i < end; ++i) {
      images.push_back(&samples[i]->image);
      targets.push_back(&samples[i]->labels);
    }
    total += batch_loss(state, images, targets, weights, precision) * static_cast<double>(end - start);
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace

TrainResult train(const ModelState& initial, const Dataset& dataset, const TrainConfig& config,
                  const TrainObserver* observer) {
  config.validate();
  validate(initial);
  if (static_cast<std::size_t>(initial.config.objectives) != dataset.objectives()) {
    throw ShapeError("train: model has " + std::to_string(initial.config.objectives) + " outputs, dataset has " +
                     std::to_string(dataset.objectives()) + " objectives");
  }
  if (initial.config.height != dataset.height || initial.config.width != dataset.width) {
    throw ShapeError("train: model input size does not match the dataset image size");
  }
  const auto train_set = dataset.in_split(Split::Train);
  const auto val_set = dataset.in_split(Split::Validation);
  if (train_set.empty() || val_set.empty()) throw ConfigError("train: dataset needs train and validation samples");

  TrainResult result;
  result.best = initial;
  to_json(result.log.config, config);
  result.log.weights_used = training_weights(dataset, config.balanced);
  const auto& weights = result.log.weights_used;
  if (config.max_epochs == 0) return result;

  ModelState state = initial;
  std::vector<AdamMoments> moments;
  for (const auto& p : state.params) moments.emplace_back(p.values.size());
  const AugmentStage aug_stage = config.stage == TrainStage::Proxy ? AugmentStage::Proxy : AugmentStage::Target;

  double best_val = std::numeric_limits<double>::infinity();
  long step = 0;
  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, {kShuffleStream, static_cast<std::uint64_t>(epoch)}));
    shuffle_rng.shuffle(order);

    double train_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<Image> augmented;
      augmented.reserve(end - start);
      std::vector<const std::vector<int>*> targets;
      std::vector<std::string> ids;
      for (std::size_t k = start; k < end; ++k) {
        const Sample& s = *train_set[order[k]];
        if (config.augment) {
          Rng aug_rng(derive_seed(config.seed, {kAugmentStream, static_cast<std::uint64_t>(epoch), order[k]}));
          augmented.push_back(augment(s, aug_stage, aug_rng, config.augmentation).image);
        } else {
          augmented.push_back(s.image);
        }
        targets.push_back(&s.labels);
        ids.push_back(s.id);
      }
      std::vector<const Image*> images;
      for (const auto& img : augmented) images.push_back(&img);

      const auto lg = loss_and_gradient(state, images, targets, weights, config.precision);
      train_total += lg.loss * static_cast<double>(end - start);
      ++step;
      for (std::size_t p = 0; p < state.params.size(); ++p) {
        adam_step<float>(state.params[p].values, lg.gradients[p], moments[p], step, config.adam, state.params[p].name);
      }
      if (observer && observer->on_batch) observer->on_batch(epoch, ids);
    }

    EpochLoss e{train_total / static_cast<double>(train_set.size()), mean_loss(state, val_set, weights, config.precision)};
    result.log.epochs.push_back(e);
    if (e.val_loss < best_val) {
      best_val = e.val_loss;
      result.best = state;
      result.log.selected_epoch = epoch;
    }
    if (observer && observer->on_epoch) observer->on_epoch(epoch, e);
  }
  return result;
}

}  // namespace camalign
