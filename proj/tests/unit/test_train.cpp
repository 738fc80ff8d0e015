#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "camalign/errors.hpp"
#include "camalign/train.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace camalign;

namespace {

// 16x16 images; positives carry a bright 4x4 patch at a random spot.
Dataset toy_dataset(int n_train, int n_val, int n_test, std::uint64_t seed) {
  Dataset ds;
  ds.objective_names = {"spot"};
  ds.height = ds.width = 16;
  Rng rng(seed);
  int idx = 0;
  auto add = [&](Split split, int count) {
    for (int i = 0; i < count; ++i, ++idx) {
      Sample s;
      s.id = "toy_" + std::to_string(idx);
      s.split = split;
      s.labels = {i % 2};
      s.image = Image(16, 16);
      for (auto& p : s.image.pixels) p = static_cast<float>(rng.uniform(0.0, 0.2));
      if (s.labels[0] == 1) {
        BoundingBox b{rng.uniform_int(0, 12), rng.uniform_int(0, 12), 4, 4};
        for (int y = b.y; y < b.y + 4; ++y)
          for (int x = b.x; x < b.x + 4; ++x) s.image.at(y, x) = 0.9F;
        s.boxes.push_back(b);
      }
      ds.samples.push_back(std::move(s));
    }
  };
  add(Split::Train, n_train);
  add(Split::Validation, n_val);
  add(Split::Test, n_test);
  return ds;
}

TrainConfig fast_config(int epochs) {
  TrainConfig c = TrainConfig::defaults_for(TrainStage::Target);
  c.max_epochs = epochs;
  c.batch_size = 4;
  c.adam.learning_rate = 1e-2;
  c.seed = 3;
  return c;
}

double validation_loss(const ModelState& s, const Dataset& ds, const ObjectiveWeights& w, Precision p) {
  std::vector<const Image*> images;
  std::vector<const std::vector<int>*> targets;
  for (const auto* x : ds.in_split(Split::Validation)) {
    images.push_back(&x->image);
    targets.push_back(&x->labels);
  }
  return batch_loss(s, images, targets, w, p);
}

}  // namespace

TEST_CASE("Adam: zero gradients leave parameters and decay moments") {
  std::vector<double> p{0.5, -1.0};
  AdamMoments m(2);
  m.first = {0.2, -0.1};
  m.second = {0.04, 0.01};
  const std::vector<double> g{0.0, 0.0};
  const auto before = p;
  AdamHyper h;
  h.learning_rate = 0.0;
  adam_step<double>(p, g, m, 3, h);
  CHECK(p == before);
  CHECK(m.first[0] == doctest::Approx(0.18));
  CHECK(m.second[1] == doctest::Approx(0.00999));
  CHECK(std::abs(m.first[1]) < 0.1);
}

TEST_CASE("Adam: first step with unit gradient moves by the learning rate") {
  std::vector<double> p{0.0};
  AdamMoments m(1);
  const std::vector<double> g{1.0};
  AdamHyper h;
  adam_step<double>(p, g, m, 1, h);
  CHECK(std::abs(p[0] - (-h.learning_rate / (1.0 + h.epsilon))) <= 1e-18);
}

TEST_CASE("Adam: trajectory on a quadratic matches the reference implementation") {
  AdamHyper h;
  h.learning_rate = 0.1;
  std::vector<double> p{2.0, -3.0, 0.5};
  std::vector<double> ref = p;
  AdamMoments m(3);
  oracle::AdamReference r;
  r.lr = 0.1;
  for (long t = 1; t <= 3; ++t) {
    std::vector<double> g(3);
    for (int i = 0; i < 3; ++i) g[i] = 2.0 * (i + 1) * p[i];  // d/dp of sum (i+1) p_i^2
    std::vector<double> gr(3);
    for (int i = 0; i < 3; ++i) gr[i] = 2.0 * (i + 1) * ref[i];
    adam_step<double>(p, g, m, t, h);
    r.step(ref, gr);
  }
  for (int i = 0; i < 3; ++i) CHECK(std::abs(p[i] - ref[i]) <= 1e-12);
}

TEST_CASE("Adam: errors name the layer") {
  std::vector<double> p{1.0};
  AdamMoments m(1);
  const std::vector<double> bad{std::numeric_limits<double>::quiet_NaN()};
  try {
    adam_step<double>(p, bad, m, 1, AdamHyper{}, "conv2.weight");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(e.layer() == "conv2.weight");
  }
  const std::vector<double> two{1.0, 2.0};
  CHECK_THROWS_AS(adam_step<double>(p, two, m, 1, AdamHyper{}), ShapeError);
}

TEST_CASE("zero epochs return the initial model") {
  const auto ds = toy_dataset(8, 4, 2, 1);
  const auto init = init_model(fixtures::micro_strided(1), 2);
  const auto r = train(init, ds, fast_config(0));
  CHECK(r.best == init);
  CHECK(r.log.epochs.empty());
  CHECK(r.log.selected_epoch == -1);
}

TEST_CASE("training on a separable micro-dataset lowers the loss") {
  const auto ds = toy_dataset(8, 8, 0, 4);
  const auto init = init_model(fixtures::micro_strided(1), 5);
  auto cfg = fast_config(30);
  cfg.augment = false;
  const auto r = train(init, ds, cfg);
  const auto w = unbalanced_weights(1);
  std::vector<const Image*> images;
  std::vector<const std::vector<int>*> targets;
  for (const auto* s : ds.in_split(Split::Train)) {
    images.push_back(&s->image);
    targets.push_back(&s->labels);
  }
  const double before = batch_loss(init, images, targets, w, Precision::Double);
  const double after = batch_loss(r.best, images, targets, w, Precision::Double);
  CHECK(after < before);
  CHECK(r.log.selected_epoch >= 0);
}

TEST_CASE("selected epoch has the lowest validation loss and matches the returned model") {
  const auto ds = toy_dataset(12, 6, 2, 6);
  const auto r = train(init_model(fixtures::micro_strided(1), 7), ds, fast_config(12));
  REQUIRE(r.log.selected_epoch >= 0);
  const double best = r.log.epochs[static_cast<std::size_t>(r.log.selected_epoch)].val_loss;
  for (std::size_t e = 0; e < r.log.epochs.size(); ++e) {
    CHECK(best <= r.log.epochs[e].val_loss);
    if (static_cast<int>(e) < r.log.selected_epoch) CHECK(best < r.log.epochs[e].val_loss);
  }
  CHECK(validation_loss(r.best, ds, r.log.weights_used, Precision::Single) == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("training is deterministic in the seed") {
  const auto ds = toy_dataset(10, 4, 2, 8);
  const auto init = init_model(fixtures::micro_strided(1), 9);
  const auto a = train(init, ds, fast_config(4));
  const auto b = train(init, ds, fast_config(4));
  CHECK(a.best == b.best);
  CHECK(a.log.to_json() == b.log.to_json());
  auto other = fast_config(4);
  other.seed = 4;
  CHECK_FALSE(train(init, ds, other).best == a.best);
}

TEST_CASE("batch order is shared by balanced/unbalanced runs and unaffected by augmentation") {
  auto ds = toy_dataset(13, 4, 3, 10);
  ds.samples[0].labels = {1};  // make the classes unequal so the weights differ
  ds.samples[0].boxes = {{0, 0, 1, 1}};
  const auto init = init_model(fixtures::micro_strided(1), 11);
  auto record = [&](bool balanced, bool augment) {
    std::vector<std::string> seen;
    TrainObserver obs;
    obs.on_batch = [&](int, std::span<const std::string> ids) { seen.insert(seen.end(), ids.begin(), ids.end()); };
    auto cfg = fast_config(3);
    cfg.balanced = balanced;
    cfg.augment = augment;
    const auto r = train(init, ds, cfg, &obs);
    return std::make_pair(seen, r.log.weights_used);
  };
  const auto [u_order, u_weights] = record(false, true);
  const auto [b_order, b_weights] = record(true, true);
  const auto [n_order, n_weights] = record(true, false);
  CHECK(u_order == b_order);
  CHECK(b_order == n_order);
  CHECK(u_weights == unbalanced_weights(1));
  CHECK_FALSE(b_weights == u_weights);
}

TEST_CASE("only training samples contribute gradients") {
  const auto ds = toy_dataset(10, 5, 5, 12);
  std::set<std::string> train_ids;
  for (const auto* s : ds.in_split(Split::Train)) train_ids.insert(s->id);
  std::multiset<std::string> seen;
  TrainObserver obs;
  obs.on_batch = [&](int, std::span<const std::string> ids) { seen.insert(ids.begin(), ids.end()); };
  train(init_model(fixtures::micro_strided(1), 13), ds, fast_config(3), &obs);
  for (const auto& id : seen) CHECK(train_ids.contains(id));
  for (const auto& id : train_ids) CHECK(seen.count(id) == 3);  // once per epoch
}

TEST_CASE("training errors") {
  const auto init = init_model(fixtures::micro_strided(1), 1);
  auto all_negative = toy_dataset(6, 2, 0, 14);
  for (auto& s : all_negative.samples) {
    s.labels = {0};
    s.boxes.clear();
  }
  auto cfg = fast_config(1);
  cfg.balanced = true;
  CHECK_THROWS_AS(train(init, all_negative, cfg), EmptyClassError);
  CHECK_NOTHROW(train(init, all_negative, fast_config(1)));

  auto no_val = toy_dataset(6, 0, 2, 15);
  CHECK_THROWS_AS(train(init, no_val, fast_config(1)), ConfigError);
  auto bad = fast_config(1);
  bad.adam.learning_rate = 0.0;
  CHECK_THROWS_AS(train(init, toy_dataset(6, 2, 0, 1), bad), ConfigError);
  bad = fast_config(1);
  bad.batch_size = 0;
  CHECK_THROWS_AS(train(init, toy_dataset(6, 2, 0, 1), bad), ConfigError);
}

TEST_CASE("prior head bias matches the weighted class masses of the train split") {
  auto ds = toy_dataset(12, 4, 4, 5);
  // 3 of the 12 train samples positive; validation and test stay mixed
  int flipped = 0;
  for (auto& s : ds.samples) {
    if (s.split == Split::Train && s.labels[0] == 1 && flipped < 3) {
      s.labels[0] = 0;
      s.boxes.clear();
      ++flipped;
    }
  }
  auto model = init_model(fixtures::micro_strided(1), 4);
  const auto weight_before = model.param("head.weight").values;
  set_prior_head_bias(model, ds, false);
  CHECK(model.param("head.bias").values[0] == doctest::Approx(std::log(3.0 / 9.0)).epsilon(1e-6));
  CHECK(model.param("head.weight").values == weight_before);
  // balanced masses are equal, so the prior is one half
  set_prior_head_bias(model, ds, true);
  CHECK(model.param("head.bias").values[0] == doctest::Approx(0.0).epsilon(1e-12));

  CHECK_FALSE(TrainConfig{}.prior_head_bias);
  TrainConfig parsed;
  from_json(nlohmann::json{{"prior_head_bias", true}}, parsed);
  CHECK(parsed.prior_head_bias);

  auto two_heads = init_model(fixtures::micro_strided(2), 4);
  CHECK_THROWS_AS(set_prior_head_bias(two_heads, ds, false), ShapeError);
}

TEST_CASE("config and log serialization") {
  auto c = TrainConfig::defaults_for(TrainStage::Proxy);
  CHECK(c.max_epochs == 30);
  CHECK(c.adam.learning_rate == 1e-4);
  CHECK(TrainConfig::defaults_for(TrainStage::Target).max_epochs == 40);
  c.balanced = true;
  c.seed = 99;
  nlohmann::json j;
  to_json(j, c);
  TrainConfig back;
  from_json(j, back);
  nlohmann::json j2;
  to_json(j2, back);
  CHECK(j == j2);

  const auto r = train(init_model(fixtures::micro_strided(1), 1), toy_dataset(6, 2, 0, 2), fast_config(2));
  const auto lj = r.log.to_json();
  CHECK(lj.at("epochs").size() == 2);
  CHECK(lj.at("epochs")[0].contains("train_loss"));
  CHECK(lj.at("epochs")[0].contains("val_loss"));
  CHECK(lj.contains("selected_epoch"));
  CHECK(lj.contains("config"));
  CHECK(lj.at("weights_used")[0].at("w_plus") == 1.0);
}
