#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "camalign/datagen.hpp"
#include "camalign/dataset.hpp"
#include "camalign/metrics.hpp"
#include "camalign/model.hpp"
#include "camalign/train.hpp"

namespace camalign {

/// The five training recipes. Pre-training always uses the proxy dataset.
enum class Recipe { U, B, UU, UB, BB };

struct RecipeSpec {
  Recipe recipe;
  std::string_view name;                 // "M_U", "M_B", "M_UU", "M_UB", "M_BB"
  std::optional<bool> pretrain_balanced;  // nullopt: trained on the target only
  bool finetune_balanced;
};

const std::array<RecipeSpec, 5>& recipe_table();
const RecipeSpec& recipe_spec(Recipe recipe);
Recipe recipe_from_string(std::string_view name);

/// Either a manifest on disk or a synthetic generator configuration.
struct DatasetSource {
  std::optional<std::filesystem::path> manifest;
  std::optional<SynthConfig> synth;

  Dataset materialize() const;
};

struct ExperimentPlan {
  DatasetSource proxy;
  DatasetSource target;
  DatasetSource external;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::vector<Recipe> models{Recipe::U, Recipe::B, Recipe::UU, Recipe::UB, Recipe::BB};
  TrainConfig proxy_train = TrainConfig::defaults_for(TrainStage::Proxy);
  TrainConfig target_train = TrainConfig::defaults_for(TrainStage::Target);
  std::filesystem::path output_root = "runs";
  int overlays = 5;

  /// Synthetic proxy/target/external at desk-scale defaults, marker strength 0.9.
  static ExperimentPlan desk_default();
  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentPlan from_json(const nlohmann::json& j);
  std::string hash() const;
};

/// Proxy stage of a recipe: fresh model sized to the proxy objectives, trained
/// with the given balancing. Seeds for init and data order derive from `seed`.
TrainResult run_pretraining(const Dataset& proxy, std::uint64_t seed, bool balanced, TrainConfig config,
                            const TrainObserver* observer = nullptr);

/// Target stage. With a pretrained model the head is swapped for one sized to
/// the target objectives; without one the model starts from scratch. The data
/// order depends on `seed` only, so every recipe sees the same batches.
TrainResult run_finetuning(const ModelState* pretrained, const Dataset& target, std::uint64_t seed, bool balanced,
                           TrainConfig config, const TrainObserver* observer = nullptr);

/// AUROC on the target test split and the whole external set, plus all three
/// CAMs at last_conv with Proportional Energy over every boxed test positive.
MetricsReport evaluate_model(const ModelState& state, const Dataset& target, const Dataset* external,
                             std::string model_name);

struct SeedOutcome {
  std::uint64_t seed = 0;
  std::vector<MetricsReport> reports;
};

struct ExperimentResult {
  std::filesystem::path run_dir;
  std::vector<SeedOutcome> seeds;
};

/// Runs every (seed, recipe) pair. Layout:
///   <output_root>/<plan hash>/plan.json
///   <output_root>/<plan hash>/seed_<n>/<model>/{checkpoint.bin, trainlog.json, report.json, overlays/}
///   <output_root>/<plan hash>/seed_<n>/pretrain_{unbalanced,balanced}/{checkpoint.bin, trainlog.json}
/// A failing recipe is recorded in its report and the others proceed.
ExperimentResult run_experiment(const ExperimentPlan& plan, std::ostream* log = nullptr);

/// ids of the k lowest scores, ties broken by id. Throws if k > size.
std::vector<std::string> rank_lowest(const std::vector<EnergyScore>& scores, std::size_t k);

struct SummaryRow {
  std::string model;
  std::size_t seeds = 0;
  double auroc_target = 0.0;
  double auroc_external = 0.0;
  std::array<double, 3> energy{};  // gradcam, hirescam, scorecam medians
};

/// Median over seeds of every metric, per model, in recipe order.
std::vector<SummaryRow> summarize(const std::vector<SeedOutcome>& seeds);
std::vector<SummaryRow> summarize_run(const std::filesystem::path& run_dir);
std::string format_summary(const std::vector<SummaryRow>& rows);

}  // namespace camalign
