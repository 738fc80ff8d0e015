// Command-line front end. Every subcommand accepts --config <json>; keys in the
// file have the same names as the long flags, and flags given on the command
// line take precedence over the file.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "camalign/checkpoint.hpp"
#include "camalign/datagen.hpp"
#include "camalign/dataset.hpp"
#include "camalign/errors.hpp"
#include "camalign/harness.hpp"
#include "camalign/metrics.hpp"
#include "camalign/saliency.hpp"
#include "camalign/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace camalign;

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(1) << "\n";
}

// Flag values and the optional config file for one subcommand.
class Settings {
 public:
  explicit Settings(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON file with default values for the flags");
  }

  void load() {
    if (!config_path_.empty()) file_ = read_json_file(config_path_);
  }

  template <typename T>
  T get(const std::string& key, const T& flag_value, std::optional<T> fallback = std::nullopt) const {
    if (app_->count("--" + key) > 0) return flag_value;
    if (file_.contains(key)) return file_.at(key).get<T>();
    if (fallback) return *fallback;
    throw ConfigError("missing required setting '" + key + "' (flag --" + key + " or config key)");
  }

  // --balanced / --unbalanced pair mapped onto a boolean "balanced" key.
  bool balanced(bool fallback) const {
    if (app_->count("--balanced") > 0) return true;
    if (app_->count("--unbalanced") > 0) return false;
    return file_.value("balanced", fallback);
  }

  const json& file() const { return file_; }

 private:
  CLI::App* app_;
  std::string config_path_;
  json file_ = json::object();
};

void add_balance_flags(CLI::App* app) {
  auto* b = app->add_flag("--balanced", "use MOON class weights");
  auto* u = app->add_flag("--unbalanced", "use unit class weights");
  b->excludes(u);
}

TrainConfig train_config(const Settings& s, TrainStage stage, const std::optional<int>& epochs_flag) {
  TrainConfig tc = TrainConfig::defaults_for(stage);
  if (s.file().contains("train")) from_json(s.file().at("train"), tc);
  if (epochs_flag) tc.max_epochs = *epochs_flag;
  return tc;
}

TrainObserver epoch_printer() {
  TrainObserver obs;
  obs.on_epoch = [](int epoch, const EpochLoss& e) {
    std::cerr << "epoch " << epoch + 1 << "  train " << e.train_loss << "  val " << e.val_loss << "\n";
  };
  return obs;
}

void save_training(const TrainResult& result, const fs::path& out) {
  fs::create_directories(out);
  save_checkpoint(result.best, out / "checkpoint.bin");
  write_json_file(out / "trainlog.json", result.log.to_json());
  std::cout << "selected epoch " << result.log.selected_epoch + 1 << ", checkpoint written to "
            << (out / "checkpoint.bin").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Class-balanced CNN training and CAM alignment scoring on chest-radiograph-like data"};
  app.require_subcommand(1);

  // datagen
  auto* datagen = app.add_subcommand("datagen", "generate a synthetic dataset and its manifest");
  Settings datagen_s(datagen);
  std::string dg_out, dg_preset;
  std::uint64_t dg_seed = 0;
  datagen->add_option("--out", dg_out, "output directory");
  datagen->add_option("--preset", dg_preset, "proxy | target | external (base values before config overrides)");
  datagen->add_option("--seed", dg_seed, "generator seed");
  datagen->callback([&] {
    datagen_s.load();
    const auto preset = datagen_s.get<std::string>("preset", dg_preset, std::string("target"));
    SynthConfig cfg = preset == "proxy"      ? SynthConfig::proxy_default()
                      : preset == "external" ? SynthConfig::external_default()
                      : preset == "target"   ? SynthConfig::target_default()
                                             : throw ConfigError("unknown preset '" + preset + "'");
    from_json(datagen_s.file(), cfg);
    cfg.seed = datagen_s.get<std::uint64_t>("seed", dg_seed, cfg.seed);
    const fs::path out = datagen_s.get<std::string>("out", dg_out);
    Dataset ds = generate_synthetic(cfg);
    write_dataset(ds, out);
    std::cout << "wrote " << ds.samples.size() << " samples to " << (out / "manifest.json").string() << "\n";
  });

  // pretrain
  auto* pretrain = app.add_subcommand("pretrain", "train a fresh model on a (proxy) dataset");
  Settings pretrain_s(pretrain);
  std::string pt_data, pt_out;
  std::uint64_t pt_seed = 0;
  std::optional<int> pt_epochs;
  pretrain->add_option("--data", pt_data, "manifest of the proxy dataset");
  add_balance_flags(pretrain);
  pretrain->add_option("--seed", pt_seed, "run seed");
  pretrain->add_option("--out", pt_out, "output directory");
  pretrain->add_option("--epochs", pt_epochs, "override the epoch budget");
  pretrain->callback([&] {
    pretrain_s.load();
    const Dataset ds = load_manifest(pretrain_s.get<std::string>("data", pt_data));
    const auto obs = epoch_printer();
    const auto result = run_pretraining(ds, pretrain_s.get<std::uint64_t>("seed", pt_seed, 0), pretrain_s.balanced(false),
                                        train_config(pretrain_s, TrainStage::Proxy, pt_epochs), &obs);
    save_training(result, pretrain_s.get<std::string>("out", pt_out));
  });

  // finetune
  auto* finetune = app.add_subcommand("finetune", "train on the target dataset, optionally from a checkpoint");
  Settings finetune_s(finetune);
  std::string ft_data, ft_from, ft_out;
  std::uint64_t ft_seed = 0;
  std::optional<int> ft_epochs;
  finetune->add_option("--data", ft_data, "manifest of the target dataset");
  finetune->add_option("--from", ft_from, "pre-trained checkpoint, or 'none'");
  add_balance_flags(finetune);
  finetune->add_option("--seed", ft_seed, "run seed");
  finetune->add_option("--out", ft_out, "output directory");
  finetune->add_option("--epochs", ft_epochs, "override the epoch budget");
  finetune->callback([&] {
    finetune_s.load();
    const Dataset ds = load_manifest(finetune_s.get<std::string>("data", ft_data));
    const auto from = finetune_s.get<std::string>("from", ft_from, std::string("none"));
    std::optional<ModelState> base;
    if (from != "none") base = load_checkpoint(from);
    const auto obs = epoch_printer();
    const auto result =
        run_finetuning(base ? &*base : nullptr, ds, finetune_s.get<std::uint64_t>("seed", ft_seed, 0),
                       finetune_s.balanced(false), train_config(finetune_s, TrainStage::Target, ft_epochs), &obs);
    save_training(result, finetune_s.get<std::string>("out", ft_out));
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "AUROC and Proportional Energy report for one checkpoint");
  Settings evaluate_s(evaluate);
  std::string ev_model, ev_target, ev_external, ev_out, ev_name;
  evaluate->add_option("--model", ev_model, "checkpoint");
  evaluate->add_option("--target", ev_target, "target manifest (test split is scored)");
  evaluate->add_option("--external", ev_external, "external manifest (every sample is scored)");
  evaluate->add_option("--out", ev_out, "report path");
  evaluate->add_option("--name", ev_name, "model name recorded in the report");
  evaluate->callback([&] {
    evaluate_s.load();
    const auto model_path = evaluate_s.get<std::string>("model", ev_model);
    const ModelState state = load_checkpoint(model_path);
    const Dataset target = load_manifest(evaluate_s.get<std::string>("target", ev_target));
    const Dataset external = load_manifest(evaluate_s.get<std::string>("external", ev_external));
    const auto name = evaluate_s.get<std::string>("name", ev_name, fs::path(model_path).parent_path().filename().string());
    auto report = evaluate_model(state, target, &external, name);
    report.provenance["checkpoint"] = model_path;
    const fs::path out = evaluate_s.get<std::string>("out", ev_out);
    write_json_file(out, report.to_json());
    std::cout << "AUROC target " << report.auroc_target << ", external " << report.auroc_external
              << "; median PE gradcam " << report.gradcam.median << ", hirescam " << report.hirescam.median
              << ", scorecam " << report.scorecam.median << "\n";
  });

  // saliency
  auto* saliency = app.add_subcommand("saliency", "dump CAMs for every sample of one split");
  Settings saliency_s(saliency);
  std::string sa_model, sa_data, sa_method, sa_out, sa_split;
  int sa_objective = 0;
  saliency->add_option("--model", sa_model, "checkpoint");
  saliency->add_option("--data", sa_data, "manifest");
  saliency->add_option("--method", sa_method, "gradcam | hirescam | scorecam");
  saliency->add_option("--out", sa_out, "output directory");
  saliency->add_option("--split", sa_split, "train | validation | test (default test)");
  saliency->add_option("--objective", sa_objective, "output index explained (default 0)");
  saliency->callback([&] {
    saliency_s.load();
    const ModelState state = load_checkpoint(saliency_s.get<std::string>("model", sa_model));
    const Dataset ds = load_manifest(saliency_s.get<std::string>("data", sa_data));
    const CamMethod method = cam_method_from_string(saliency_s.get<std::string>("method", sa_method));
    const Split split = split_from_string(saliency_s.get<std::string>("split", sa_split, std::string("test")));
    const int objective = saliency_s.get<int>("objective", sa_objective, 0);
    const fs::path out = saliency_s.get<std::string>("out", sa_out);
    fs::create_directories(out);
    std::size_t n = 0;
    for (const auto* s : ds.in_split(split)) {
      auto map = compute_saliency(method, state, s->image, objective);
      map.sample_id = s->id;
      dump_map(map, out);
      ++n;
    }
    std::cout << "wrote " << n << " " << to_string(method) << " maps to " << out.string() << "\n";
  });

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run the five-recipe matrix");
  Settings experiment_s(experiment);
  std::string ex_plan, ex_root;
  experiment->add_option("--plan", ex_plan, "plan JSON (missing keys take desk-scale defaults)");
  experiment->add_option("--output-root", ex_root, "directory receiving <plan hash>/");
  experiment->callback([&] {
    experiment_s.load();
    json plan_json = json::object();
    const auto plan_path = experiment_s.get<std::string>("plan", ex_plan, std::string());
    if (!plan_path.empty()) plan_json = read_json_file(plan_path);
    if (experiment_s.file().contains("output_root")) plan_json["output_root"] = experiment_s.file().at("output_root");
    if (experiment->count("--output-root") > 0) plan_json["output_root"] = ex_root;
    const ExperimentPlan plan = ExperimentPlan::from_json(plan_json);
    const auto result = run_experiment(plan, &std::cerr);
    std::cout << format_summary(summarize(result.seeds)) << "run directory: " << result.run_dir.string() << "\n";
  });

  // report
  auto* report = app.add_subcommand("report", "median-of-seeds summary table for a run directory");
  Settings report_s(report);
  std::string rp_run;
  report->add_option("--run", rp_run, "run directory (<output_root>/<plan hash>)");
  report->callback([&] {
    report_s.load();
    std::cout << format_summary(summarize_run(report_s.get<std::string>("run", rp_run)));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
