#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

#include "camalign/checkpoint.hpp"
#include "camalign/errors.hpp"
#include "camalign/harness.hpp"
#include "camalign/overlay.hpp"
#include "camalign/png_io.hpp"
#include "fixtures.hpp"

using namespace camalign;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kOverlayGolden = fs::path(CAMALIGN_GOLDEN_DIR) / "overlay_fixture.png";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SynthConfig tiny(SynthConfig c, int n_train, int n_val, int n_test) {
  c.height = c.width = 32;
  c.n_train = n_train;
  c.n_validation = n_val;
  c.n_test = n_test;
  for (auto& o : c.objectives) {
    o.lesion.sigma_min = 1.0;
    o.lesion.sigma_max = 1.5;
  }
  return c;
}

ExperimentPlan tiny_plan(const fs::path& root) {
  ExperimentPlan p;
  p.proxy.synth = tiny(SynthConfig::proxy_default(), 60, 20, 5);
  for (auto& o : p.proxy.synth->objectives) o.positive_rate = 0.2;
  p.target.synth = tiny(SynthConfig::target_default(), 40, 12, 20);
  p.target.synth->objectives[0].positive_rate = 0.25;
  p.external.synth = tiny(SynthConfig::external_default(), 0, 0, 16);
  p.seeds = {1};
  p.proxy_train.max_epochs = 1;
  p.target_train.max_epochs = 2;
  p.output_root = root;
  p.overlays = 2;
  return p;
}

std::vector<EnergyScore> scores(std::initializer_list<std::pair<const char*, double>> v) {
  std::vector<EnergyScore> out;
  for (const auto& [id, value] : v) out.push_back({id, CamMethod::HiResCam, value, false});
  return out;
}

// Image gradient left to right, map peaking in the middle, one box.
void overlay_fixture(Image& img, SaliencyMap& map, std::vector<BoundingBox>& boxes) {
  img = Image(12, 16);
  map.height = 12;
  map.width = 16;
  map.values.assign(12 * 16, 0.0);
  for (int y = 0; y < 12; ++y) {
    for (int x = 0; x < 16; ++x) {
      img.at(y, x) = static_cast<float>(x) / 15.0F;
      const double d2 = (x - 8.0) * (x - 8.0) + (y - 5.0) * (y - 5.0);
      map.values[static_cast<std::size_t>(y) * 16 + x] = std::exp(-d2 / 18.0);
    }
  }
  boxes = {{5, 3, 6, 5}};
}

}  // namespace

TEST_CASE("rank_lowest") {
  CHECK(rank_lowest(scores({{"a", 0.3}, {"b", 0.1}}), 0).empty());
  CHECK(rank_lowest(scores({{"a", 0.3}, {"b", 0.1}, {"c", 0.2}}), 2) == std::vector<std::string>{"b", "c"});
  CHECK(rank_lowest(scores({{"z", 0.5}, {"m", 0.5}, {"a", 0.5}, {"q", 0.1}}), 3) ==
        std::vector<std::string>{"q", "a", "m"});
  CHECK_THROWS_AS(rank_lowest(scores({{"a", 0.3}}), 2), std::invalid_argument);
}

TEST_CASE("recipe table") {
  const auto& t = recipe_table();
  CHECK(t.size() == 5);
  CHECK(recipe_spec(Recipe::U).name == "M_U");
  CHECK_FALSE(recipe_spec(Recipe::B).pretrain_balanced.has_value());
  CHECK(recipe_spec(Recipe::UU).pretrain_balanced == false);
  CHECK_FALSE(recipe_spec(Recipe::UU).finetune_balanced);
  CHECK(recipe_spec(Recipe::UB).pretrain_balanced == false);
  CHECK(recipe_spec(Recipe::UB).finetune_balanced);
  CHECK(recipe_spec(Recipe::BB).pretrain_balanced == true);
  CHECK(recipe_from_string("M_BB") == Recipe::BB);
  CHECK_THROWS_AS(recipe_from_string("M_X"), ConfigError);
}

TEST_CASE("plan JSON round-trip and hashing") {
  const auto p = ExperimentPlan::desk_default();
  CHECK(p.models.size() == 5);
  CHECK(p.target.synth->shortcut_strength == 0.9);
  const auto back = ExperimentPlan::from_json(p.to_json());
  CHECK(back.to_json() == p.to_json());
  CHECK(back.hash() == p.hash());
  auto moved = p;
  moved.output_root = "/elsewhere";
  CHECK(moved.hash() == p.hash());
  auto reseeded = p;
  reseeded.seeds = {4};
  CHECK(reseeded.hash() != p.hash());

  const auto partial = ExperimentPlan::from_json(json{{"seeds", {7}}, {"models", {"M_U", "M_BB"}}});
  CHECK(partial.seeds == std::vector<std::uint64_t>{7});
  CHECK(partial.models == std::vector<Recipe>{Recipe::U, Recipe::BB});
  CHECK(partial.target.synth == p.target.synth);

  const auto manifest = ExperimentPlan::from_json(json{{"target", {{"manifest", "/data/tbx/manifest.json"}}}});
  CHECK(manifest.target.manifest == fs::path("/data/tbx/manifest.json"));
  CHECK_THROWS_AS(ExperimentPlan::from_json(json{{"models", {"M_U", "M_U"}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentPlan::from_json(json{{"seeds", json::array()}}), ConfigError);
}

TEST_CASE("overlay: zero map without boxes is the grayscale base") {
  Image img(3, 4);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i) / 11.0F;
  SaliencyMap zero;
  zero.height = 3;
  zero.width = 4;
  zero.values.assign(12, 0.0);
  const auto out = render_overlay(img, zero, {});
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      const auto g = static_cast<std::uint8_t>(std::lround(img.at(y, x) * 255.0));
      CHECK(out.pixel(y, x) == std::array<std::uint8_t, 3>{g, g, g});
    }
  }
}

TEST_CASE("overlay: box outlines are magenta and the ramp runs blue to red") {
  Image img;
  SaliencyMap map;
  std::vector<BoundingBox> boxes;
  overlay_fixture(img, map, boxes);
  const auto out = render_overlay(img, map, boxes);
  const auto& b = boxes[0];
  for (int x = b.x; x < b.x + b.w; ++x) {
    CHECK(out.pixel(b.y, x) == kBoxColor);
    CHECK(out.pixel(b.y + b.h - 1, x) == kBoxColor);
  }
  for (int y = b.y; y < b.y + b.h; ++y) {
    CHECK(out.pixel(y, b.x) == kBoxColor);
    CHECK(out.pixel(y, b.x + b.w - 1) == kBoxColor);
  }
  CHECK(heat_color(0.0) == std::array<std::uint8_t, 3>{0, 0, 255});
  CHECK(heat_color(1.0) == std::array<std::uint8_t, 3>{255, 0, 0});
  CHECK(heat_color(0.5) == std::array<std::uint8_t, 3>{0, 255, 0});

  SaliencyMap wrong = map;
  wrong.height = 11;
  CHECK_THROWS_AS(render_overlay(img, wrong, boxes), ShapeError);
  CHECK_THROWS(render_overlay(img, map, boxes, "/nonexistent-dir/for/overlay.png"));
}

TEST_CASE("overlay golden file") {
  Image img;
  SaliencyMap map;
  std::vector<BoundingBox> boxes;
  overlay_fixture(img, map, boxes);
  if (std::getenv("CAMALIGN_REGENERATE_GOLDEN")) render_overlay(img, map, boxes, kOverlayGolden);
  const auto golden = read_rgb_png(kOverlayGolden);
  const auto out = render_overlay(img, map, boxes);
  CHECK(golden.height == out.height);
  CHECK(golden.width == out.width);
  CHECK(golden.data == out.data);
}

TEST_CASE("plan restricted to M_U with one seed writes one checkpoint and one report") {
  fixtures::TempDir dir("plan_mu");
  auto plan = tiny_plan(dir.path());
  plan.models = {Recipe::U};
  const auto result = run_experiment(plan);
  CHECK(result.run_dir == dir.path() / plan.hash());
  CHECK(fs::exists(result.run_dir / "plan.json"));
  int checkpoints = 0;
  int reports = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir.path())) {
    checkpoints += e.path().filename() == "checkpoint.bin";
    reports += e.path().filename() == "report.json";
  }
  CHECK(checkpoints == 1);
  CHECK(reports == 1);
  REQUIRE(result.seeds.size() == 1);
  REQUIRE(result.seeds[0].reports.size() == 1);
  const auto& r = result.seeds[0].reports[0];
  CHECK(r.error.empty());
  CHECK(r.model == "M_U");
  const auto j = json::parse(slurp(result.run_dir / "seed_1" / "M_U" / "report.json"));
  CHECK_NOTHROW(validate_report_json(j));
  CHECK(j.at("provenance").at("weights_used")[0].at("w_minus") == 1.0);
  std::size_t overlays = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(result.run_dir / "seed_1" / "M_U" / "overlays")) ++overlays;
  CHECK(overlays == 2);
}

TEST_CASE("pre-training checkpoints are shared and runs are reproducible") {
  fixtures::TempDir a("plan_a");
  fixtures::TempDir b("plan_b");
  auto plan = tiny_plan(a.path());
  plan.models = {Recipe::UU, Recipe::UB};
  const auto ra = run_experiment(plan);
  const auto seed_dir = ra.run_dir / "seed_1";
  CHECK(fs::exists(seed_dir / "pretrain_unbalanced" / "checkpoint.bin"));
  CHECK_FALSE(fs::exists(seed_dir / "pretrain_balanced"));
  const auto uu = load_checkpoint(seed_dir / "M_UU" / "checkpoint.bin");
  CHECK(uu.config.objectives == 1);
  CHECK(uu.stage == "fine-tune");

  plan.output_root = b.path();
  const auto rb = run_experiment(plan);
  for (const auto* m : {"M_UU", "M_UB"}) {
    CHECK(slurp(seed_dir / m / "report.json") == slurp(rb.run_dir / "seed_1" / m / "report.json"));
    CHECK(slurp(seed_dir / m / "checkpoint.bin") == slurp(rb.run_dir / "seed_1" / m / "checkpoint.bin"));
  }
}

TEST_CASE("a failing recipe is recorded and the others proceed") {
  fixtures::TempDir dir("plan_fail");
  auto plan = tiny_plan(dir.path());
  plan.models = {Recipe::B, Recipe::U};
  // no positives in train/validation: balanced weights are undefined
  plan.target.synth->objectives[0].positive_rate = 0.01;
  plan.target.synth->n_test = 100;
  const auto result = run_experiment(plan);
  const auto& reports = result.seeds.at(0).reports;
  REQUIRE(reports.size() == 2);
  CHECK(reports[0].model == "M_B");
  CHECK_FALSE(reports[0].error.empty());
  CHECK(reports[1].error.empty());
  const auto j = json::parse(slurp(result.run_dir / "seed_1" / "M_B" / "report.json"));
  CHECK(j.contains("error"));
  CHECK_NOTHROW(validate_report_json(j));

  const auto rows = summarize_run(result.run_dir);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].model == "M_U");
  CHECK(format_summary(rows).find("M_U") != std::string::npos);
}

TEST_CASE("median-of-seeds summary") {
  std::vector<SeedOutcome> seeds(3);
  const double vals[3] = {0.2, 0.9, 0.5};
  for (int s = 0; s < 3; ++s) {
    MetricsReport r;
    r.model = "M_BB";
    r.auroc_target = vals[s];
    r.hirescam.median = vals[2 - s];
    seeds[s].seed = static_cast<std::uint64_t>(s + 1);
    seeds[s].reports.push_back(r);
  }
  const auto rows = summarize(seeds);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].seeds == 3);
  CHECK(rows[0].auroc_target == 0.5);
  CHECK(rows[0].energy[1] == 0.5);
}
