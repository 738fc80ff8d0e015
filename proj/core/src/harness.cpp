#include "camalign/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "camalign/checkpoint.hpp"
#include "camalign/errors.hpp"
#include "camalign/hash.hpp"
#include "camalign/overlay.hpp"
#include "camalign/saliency.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace camalign {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;     // "init"
constexpr std::uint64_t kHeadSeedStream = 0x68736564;  // "hsed"
constexpr std::uint64_t kProxyStream = 0x70727879;     // "prxy"
constexpr std::uint64_t kTargetStream = 0x74726774;    // "trgt"

const std::array<RecipeSpec, 5> kRecipes{{
    {Recipe::U, "M_U", std::nullopt, false},
    {Recipe::B, "M_B", std::nullopt, true},
    {Recipe::UU, "M_UU", false, false},
    {Recipe::UB, "M_UB", false, true},
    {Recipe::BB, "M_BB", true, true},
}};

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(1) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  return json::parse(in);
}

json source_to_json(const DatasetSource& s) {
  if (s.manifest) return json{{"manifest", s.manifest->string()}};
  json j;
  if (s.synth) to_json(j, *s.synth);
  return json{{"synth", j}};
}

DatasetSource source_from_json(const json& j, const SynthConfig& fallback) {
  DatasetSource s;
  if (j.contains("manifest")) {
    s.manifest = j.at("manifest").get<std::string>();
    return s;
  }
  SynthConfig c = fallback;
  if (j.contains("synth")) from_json(j.at("synth"), c);
  s.synth = c;
  return s;
}

}  // namespace

const std::array<RecipeSpec, 5>& recipe_table() { return kRecipes; }

const RecipeSpec& recipe_spec(Recipe recipe) {
  for (const auto& r : kRecipes) {
    if (r.recipe == recipe) return r;
  }
  throw std::out_of_range("unknown recipe");
}

Recipe recipe_from_string(std::string_view name) {
  for (const auto& r : kRecipes) {
    if (r.name == name) return r.recipe;
  }
  throw ConfigError("unknown model recipe '" + std::string(name) + "' (expected M_U, M_B, M_UU, M_UB or M_BB)");
}

Dataset DatasetSource::materialize() const {
  if (manifest) return load_manifest(*manifest);
  if (synth) return generate_synthetic(*synth);
  throw ConfigError("dataset source has neither a manifest nor a synthetic config");
}

ExperimentPlan ExperimentPlan::desk_default() {
  ExperimentPlan p;
  p.proxy.synth = SynthConfig::proxy_default();
  p.target.synth = SynthConfig::target_default();
  p.external.synth = SynthConfig::external_default();
  return p;
}

void ExperimentPlan::validate() const {
  if (seeds.empty()) throw ConfigError("plan: at least one seed is required");
  if (models.empty()) throw ConfigError("plan: at least one model recipe is required");
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      if (models[i] == models[j]) throw ConfigError("plan: duplicate model recipe");
    }
  }
  proxy_train.validate();
  target_train.validate();
  if (overlays < 0) throw ConfigError("plan: overlays must be >= 0");
}

json ExperimentPlan::to_json() const {
  json models_json = json::array();
  for (auto r : models) models_json.push_back(std::string(recipe_spec(r).name));
  json pt;
  json tt;
  camalign::to_json(pt, proxy_train);
  camalign::to_json(tt, target_train);
  return json{{"proxy", source_to_json(proxy)},
              {"target", source_to_json(target)},
              {"external", source_to_json(external)},
              {"seeds", seeds},
              {"models", models_json},
              {"proxy_train", pt},
              {"target_train", tt},
              {"output_root", output_root.string()},
              {"overlays", overlays}};
}

ExperimentPlan ExperimentPlan::from_json(const json& j) {
  ExperimentPlan p = desk_default();
  if (j.contains("proxy")) p.proxy = source_from_json(j.at("proxy"), SynthConfig::proxy_default());
  if (j.contains("target")) p.target = source_from_json(j.at("target"), SynthConfig::target_default());
  if (j.contains("external")) p.external = source_from_json(j.at("external"), SynthConfig::external_default());
  if (j.contains("seeds")) p.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("models")) {
    p.models.clear();
    for (const auto& m : j.at("models")) p.models.push_back(recipe_from_string(m.get<std::string>()));
  }
  if (j.contains("proxy_train")) camalign::from_json(j.at("proxy_train"), p.proxy_train);
  if (j.contains("target_train")) camalign::from_json(j.at("target_train"), p.target_train);
  p.proxy_train.stage = TrainStage::Proxy;
  p.target_train.stage = TrainStage::Target;
  if (j.contains("output_root")) p.output_root = j.at("output_root").get<std::string>();
  p.overlays = j.value("overlays", p.overlays);
  p.validate();
  return p;
}

std::string ExperimentPlan::hash() const {
  json j = to_json();
  j.erase("output_root");
  return config_hash(j);
}

MetricsReport evaluate_model(const ModelState& state, const Dataset& target, const Dataset* external,
                             std::string model_name) {
  MetricsReport report;
  report.model = std::move(model_name);

  auto scores_of = [&](const std::vector<const Sample*>& samples, std::vector<double>& scores, std::vector<int>& labels) {
    std::vector<const Image*> images;
    for (const auto* s : samples) {
      images.push_back(&s->image);
      labels.push_back(s->labels.at(kActiveObjective));
    }
    for (const auto& z : batch_logits(state, images, Precision::Double)) scores.push_back(z.at(kActiveObjective));
  };

  auto test = target.in_split(Split::Test);
  if (test.empty()) throw ConfigError("evaluate: target dataset has no test split");
  {
    std::vector<double> scores;
    std::vector<int> labels;
    scores_of(test, scores, labels);
    report.auroc_target = auroc(scores, labels);
  }
  if (external) {
    std::vector<const Sample*> all;
    for (const auto& s : external->samples) all.push_back(&s);
    std::vector<double> scores;
    std::vector<int> labels;
    scores_of(all, scores, labels);
    report.auroc_external = auroc(scores, labels);
  }

  std::size_t boxed = 0;
  for (const auto* s : test) {
    if (s->labels.at(kActiveObjective) != 1 || s->boxes.empty()) continue;
    ++boxed;
    for (auto method : kAllCamMethods) {
      auto map = compute_saliency(method, state, s->image, kActiveObjective);
      map.sample_id = s->id;
      report.energy(method).per_sample.push_back(proportional_energy(map, s->boxes));
    }
  }
  std::size_t zero_maps = 0;
  for (auto method : kAllCamMethods) {
    auto& e = report.energy(method);
    std::vector<double> values;
    for (const auto& s : e.per_sample) {
      values.push_back(s.value);
      zero_maps += s.zero_map ? 1 : 0;
    }
    e.median = values.empty() ? 0.0 : median(values);
  }
  report.provenance = json{{"target", target.provenance},
                           {"external", external ? external->provenance : std::string("none")},
                           {"boxed_test_positives", boxed},
                           {"zero_maps", zero_maps},
                           {"stage", state.stage}};
  return report;
}

TrainResult run_pretraining(const Dataset& proxy, std::uint64_t seed, bool balanced, TrainConfig config,
                            const TrainObserver* observer) {
  if (proxy.objectives() < 1) throw ConfigError("proxy dataset has no objectives");
  const auto cfg = ModelConfig::desk_default(proxy.height, proxy.width, static_cast<int>(proxy.objectives()));
  ModelState init = init_model(cfg, derive_seed(seed, {kInitStream, kProxyStream}));
  if (config.prior_head_bias) set_prior_head_bias(init, proxy, balanced);
  config.stage = TrainStage::Proxy;
  config.balanced = balanced;
  config.seed = derive_seed(seed, {kProxyStream});
  auto result = train(init, proxy, config, observer);
  result.best.stage = "pretrain";
  return result;
}

TrainResult run_finetuning(const ModelState* pretrained, const Dataset& target, std::uint64_t seed, bool balanced,
                           TrainConfig config, const TrainObserver* observer) {
  const int m = static_cast<int>(target.objectives());
  if (m < 1) throw ConfigError("target dataset has no objectives");
  ModelState init;
  if (pretrained) {
    init = swap_head(*pretrained, m, derive_seed(seed, {kHeadSeedStream}));
  } else {
    init = init_model(ModelConfig::desk_default(target.height, target.width, m),
                      derive_seed(seed, {kInitStream, kTargetStream}));
  }
  if (config.prior_head_bias) set_prior_head_bias(init, target, balanced);
  config.stage = TrainStage::Target;
  config.balanced = balanced;
  config.seed = derive_seed(seed, {kTargetStream});
  auto result = train(init, target, config, observer);
  return result;
}

std::vector<std::string> rank_lowest(const std::vector<EnergyScore>& scores, std::size_t k) {
  if (k > scores.size()) throw std::invalid_argument("rank_lowest: k exceeds the number of scores");
  std::vector<const EnergyScore*> sorted;
  for (const auto& s : scores) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(), [](const EnergyScore* a, const EnergyScore* b) {
    if (a->value != b->value) return a->value < b->value;
    return a->sample_id < b->sample_id;
  });
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < k; ++i) ids.push_back(sorted[i]->sample_id);
  return ids;
}

namespace {

struct RunContext {
  const ExperimentPlan& plan;
  std::string plan_hash;
  Dataset proxy;
  Dataset target;
  Dataset external;
  std::ostream* log;

  void say(const std::string& msg) const {
    if (log) *log << msg << std::endl;
  }
};

TrainObserver progress(const RunContext& ctx, const std::string& label) {
  TrainObserver obs;
  if (ctx.log) {
    obs.on_epoch = [&ctx, label](int epoch, const EpochLoss& e) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  [%s] epoch %3d  train %.5f  val %.5f", label.c_str(), epoch + 1, e.train_loss,
                    e.val_loss);
      ctx.say(buf);
    };
  }
  return obs;
}

ModelState pretrain(const RunContext& ctx, std::uint64_t seed, bool balanced, const fs::path& dir) {
  ctx.say("pre-training on proxy (" + std::string(balanced ? "balanced" : "unbalanced") + "), seed " + std::to_string(seed));
  const auto obs = progress(ctx, balanced ? "proxy-B" : "proxy-U");
  auto result = run_pretraining(ctx.proxy, seed, balanced, ctx.plan.proxy_train, &obs);
  fs::create_directories(dir);
  save_checkpoint(result.best, dir / "checkpoint.bin");
  write_json(dir / "trainlog.json", result.log.to_json());
  return result.best;
}

void write_overlays(const RunContext& ctx, const ModelState& state, const MetricsReport& report, const fs::path& dir) {
  const auto& scores = report.hirescam.per_sample;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(ctx.plan.overlays), scores.size());
  if (k == 0) return;
  fs::create_directories(dir);
  std::map<std::string, const Sample*> by_id;
  for (const auto& s : ctx.target.samples) by_id[s.id] = &s;
  const auto ids = rank_lowest(scores, k);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const Sample& s = *by_id.at(ids[r]);
    const auto map = hires_cam(state, s.image, kActiveObjective);
    char name[64];
    std::snprintf(name, sizeof name, "%02zu_", r + 1);
    render_overlay(s.image, map, s.boxes, dir / (name + s.id + ".png"));
  }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentPlan& plan, std::ostream* log) {
  plan.validate();
  const bool needs_proxy = std::any_of(plan.models.begin(), plan.models.end(),
                                       [](Recipe r) { return recipe_spec(r).pretrain_balanced.has_value(); });
  RunContext ctx{plan, plan.hash(), needs_proxy ? plan.proxy.materialize() : Dataset{}, plan.target.materialize(),
                 plan.external.materialize(), log};

  ExperimentResult result;
  result.run_dir = plan.output_root / ctx.plan_hash;
  fs::create_directories(result.run_dir);
  write_json(result.run_dir / "plan.json", plan.to_json());

  for (const auto seed : plan.seeds) {
    const fs::path seed_dir = result.run_dir / ("seed_" + std::to_string(seed));
    std::map<bool, ModelState> pretrained;
    SeedOutcome outcome;
    outcome.seed = seed;
    for (const auto recipe : plan.models) {
      const auto& spec = recipe_spec(recipe);
      const fs::path model_dir = seed_dir / std::string(spec.name);
      fs::create_directories(model_dir);
      MetricsReport report;
      report.model = std::string(spec.name);
      try {
        std::string pretrain_tag = "none";
        const ModelState* base = nullptr;
        if (spec.pretrain_balanced) {
          const bool b = *spec.pretrain_balanced;
          pretrain_tag = b ? "balanced" : "unbalanced";
          if (!pretrained.contains(b)) pretrained.emplace(b, pretrain(ctx, seed, b, seed_dir / ("pretrain_" + pretrain_tag)));
          base = &pretrained.at(b);
        }
        ctx.say("training " + std::string(spec.name) + ", seed " + std::to_string(seed));
        const auto obs = progress(ctx, std::string(spec.name));
        const auto trained = run_finetuning(base, ctx.target, seed, spec.finetune_balanced, plan.target_train, &obs);
        save_checkpoint(trained.best, model_dir / "checkpoint.bin");
        write_json(model_dir / "trainlog.json", trained.log.to_json());

        report = evaluate_model(trained.best, ctx.target, &ctx.external, std::string(spec.name));
        report.provenance["seed"] = seed;
        report.provenance["proxy"] = spec.pretrain_balanced ? ctx.proxy.provenance : std::string("none");
        report.provenance["pretraining"] = pretrain_tag;
        report.provenance["finetuning"] = spec.finetune_balanced ? "balanced" : "unbalanced";
        report.provenance["weights_used"] = to_json(trained.log.weights_used);
        report.provenance["selected_epoch"] = trained.log.selected_epoch;
        write_overlays(ctx, trained.best, report, model_dir / "overlays");
        char line[200];
        std::snprintf(line, sizeof line, "%s seed %llu: AUROC target %.3f external %.3f | PE grad %.3f hires %.3f score %.3f",
                      report.model.c_str(), static_cast<unsigned long long>(seed), report.auroc_target,
                      report.auroc_external, report.gradcam.median, report.hirescam.median, report.scorecam.median);
        ctx.say(line);
      } catch (const std::exception& e) {
        report.error = e.what();
        ctx.say(std::string(spec.name) + " failed: " + e.what());
      }
      write_json(model_dir / "report.json", report.to_json());
      outcome.reports.push_back(std::move(report));
    }
    result.seeds.push_back(std::move(outcome));
  }

  json summary = json::array();
  for (const auto& row : summarize(result.seeds)) {
    summary.push_back({{"model", row.model},
                       {"seeds", row.seeds},
                       {"auroc_target", row.auroc_target},
                       {"auroc_external", row.auroc_external},
                       {"prop_energy", {{"gradcam", row.energy[0]}, {"hirescam", row.energy[1]}, {"scorecam", row.energy[2]}}}});
  }
  write_json(result.run_dir / "summary.json", summary);
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<SeedOutcome>& seeds) {
  std::vector<SummaryRow> rows;
  for (const auto& spec : recipe_table()) {
    std::vector<double> at;
    std::vector<double> ae;
    std::array<std::vector<double>, 3> pe;
    for (const auto& s : seeds) {
      for (const auto& r : s.reports) {
        if (r.model != spec.name || !r.error.empty()) continue;
        at.push_back(r.auroc_target);
        ae.push_back(r.auroc_external);
        pe[0].push_back(r.gradcam.median);
        pe[1].push_back(r.hirescam.median);
        pe[2].push_back(r.scorecam.median);
      }
    }
    if (at.empty()) continue;
    SummaryRow row;
    row.model = std::string(spec.name);
    row.seeds = at.size();
    row.auroc_target = median(at);
    row.auroc_external = median(ae);
    for (int m = 0; m < 3; ++m) row.energy[m] = median(pe[m]);
    rows.push_back(row);
  }
  return rows;
}

std::vector<SummaryRow> summarize_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw std::runtime_error("run directory not found: " + run_dir.string());
  std::vector<std::pair<std::uint64_t, fs::path>> seed_dirs;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_directory() && name.starts_with("seed_")) seed_dirs.emplace_back(std::stoull(name.substr(5)), entry.path());
  }
  std::sort(seed_dirs.begin(), seed_dirs.end());
  std::vector<SeedOutcome> seeds;
  for (const auto& [seed, dir] : seed_dirs) {
    SeedOutcome o;
    o.seed = seed;
    for (const auto& spec : recipe_table()) {
      const auto path = dir / std::string(spec.name) / "report.json";
      if (fs::exists(path)) o.reports.push_back(MetricsReport::from_json(read_json(path)));
    }
    seeds.push_back(std::move(o));
  }
  return summarize(seeds);
}

std::string format_summary(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %5s | %8s %8s | %8s %8s %8s\n", "Model", "seeds", "AUROC-T", "AUROC-E",
                "Grad-CAM", "HiResCAM", "ScoreCAM");
  os << line << std::string(66, '-') << "\n";
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-6s %5zu | %8.3f %8.3f | %8.3f %8.3f %8.3f\n", r.model.c_str(), r.seeds,
                  r.auroc_target, r.auroc_external, r.energy[0], r.energy[1], r.energy[2]);
    os << line;
  }
  return os.str();
}

}  // namespace camalign
