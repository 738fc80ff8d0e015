#include <doctest.h>

#include <cmath>
#include <vector>

#include "camalign/balance.hpp"
#include "camalign/errors.hpp"
#include "camalign/rng.hpp"
#include "oracles.hpp"

using namespace camalign;

namespace {

std::vector<oracle::Weights> as_oracle(const ObjectiveWeights& w) {
  std::vector<oracle::Weights> out;
  for (const auto& p : w) out.push_back({p.positive, p.negative});
  return out;
}

}  // namespace

TEST_CASE("compute_weights on the 630 / 3800 split") {
  const auto w = compute_weights({{630}, {3800}});
  REQUIRE(w.size() == 1);
  CHECK(w[0].positive == 1.0);
  CHECK(w[0].negative == 630.0 / 3800.0);
  CHECK(w[0].negative == doctest::Approx(0.16579).epsilon(1e-4));
}

TEST_CASE("balanced classes keep unit weights") {
  const auto w = compute_weights({{100}, {100}});
  CHECK(w[0] == WeightPair{1.0, 1.0});
}

TEST_CASE("three objectives with mixed majorities") {
  const auto w = compute_weights({{10, 90, 50}, {90, 10, 50}});
  CHECK(w[0].positive == 1.0);
  CHECK(w[0].negative == 10.0 / 90.0);
  CHECK(w[1].positive == 10.0 / 90.0);
  CHECK(w[1].negative == 1.0);
  CHECK(w[2] == WeightPair{1.0, 1.0});
}

TEST_CASE("an empty class names its objective") {
  try {
    compute_weights({{5, 0}, {5, 7}});
    FAIL("expected EmptyClassError");
  } catch (const EmptyClassError& e) {
    CHECK(e.objective() == 1);
  }
  CHECK_THROWS_AS(compute_weights({{5}, {0}}), EmptyClassError);
  CHECK_THROWS_AS(compute_weights({{1, 2}, {1}}), ShapeError);
}

TEST_CASE("random counts: oracle agreement, range and mass equalization") {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto sp = static_cast<std::size_t>(rng.uniform_int(1, 5000));
    const auto sn = static_cast<std::size_t>(rng.uniform_int(1, 5000));
    const auto w = compute_weights({{sp}, {sn}});
    const auto o = oracle::moon(sp, sn);
    CHECK(w[0].positive == o.plus);
    CHECK(w[0].negative == o.minus);
    CHECK(w[0].positive > 0.0);
    CHECK(w[0].positive <= 1.0);
    CHECK(w[0].negative > 0.0);
    CHECK(w[0].negative <= 1.0);
    CHECK(std::max(w[0].positive, w[0].negative) == 1.0);
    const double mp = w[0].positive * static_cast<double>(sp);
    const double mn = w[0].negative * static_cast<double>(sn);
    CHECK(std::abs(mp - mn) <= 1e-12 * std::max(mp, mn));
  }
}

TEST_CASE("unbalanced weights are all ones") {
  CHECK(unbalanced_weights(1) == ObjectiveWeights{{1.0, 1.0}});
  const auto w14 = unbalanced_weights(14);
  CHECK(w14.size() == 14);
  for (const auto& p : w14) CHECK(p == WeightPair{1.0, 1.0});
}

TEST_CASE("weighted_bce closed forms") {
  const std::vector<double> half{0.5};
  const std::vector<int> one{1};
  CHECK(std::abs(weighted_bce(half, one, unbalanced_weights(1)) - std::log(2.0)) <= 1e-15);

  const ObjectiveWeights w{{1.0, 0.25}, {0.5, 1.0}};
  const std::vector<double> f{0.8, 0.3};
  const std::vector<int> t{1, 0};
  const double expected = -(std::log(0.8) + std::log(0.7));
  CHECK(std::abs(weighted_bce(f, t, w) - expected) <= 1e-12);
  CHECK(weighted_bce(f, t, w) == doctest::Approx(0.57982).epsilon(1e-5));

  // perfect prediction: only the clamp contributes
  const std::vector<double> exact{1.0, 0.0, 1.0};
  const std::vector<int> labels{1, 0, 1};
  CHECK(weighted_bce(exact, labels, unbalanced_weights(3)) <= 3 * -std::log1p(-1e-7) + 1e-15);

  const std::vector<int> short_t{1};
  CHECK_THROWS_AS(weighted_bce(f, short_t, w), ShapeError);
}

TEST_CASE("630 / 3800 weights inside the loss") {
  const auto w = compute_weights({{630}, {3800}});
  const std::vector<double> f{0.3};
  const std::vector<int> neg{0};
  const std::vector<int> pos{1};
  CHECK(std::abs(weighted_bce(f, neg, w) - (-(630.0 / 3800.0) * std::log(0.7))) <= 1e-12);
  CHECK(std::abs(weighted_bce(f, pos, w) - (-std::log(0.3))) <= 1e-12);
}

TEST_CASE("random batches agree with the oracle and with plain BCE") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const int m = rng.uniform_int(1, 8);
    std::vector<double> f(m);
    std::vector<int> t(m);
    ObjectiveWeights w(m);
    for (int i = 0; i < m; ++i) {
      f[i] = rng.uniform(-0.05, 1.05);  // exercises the clamp at both ends
      t[i] = rng.bernoulli(0.3) ? 1 : 0;
      w[i] = rng.bernoulli(0.5) ? WeightPair{1.0, rng.uniform(0.01, 1.0)} : WeightPair{rng.uniform(0.01, 1.0), 1.0};
    }
    const double j = weighted_bce(f, t, w);
    CHECK(j >= 0.0);
    CHECK(std::abs(j - oracle::weighted_bce(f, t, as_oracle(w))) <= 1e-12 * std::max(1.0, j));
    const double plain = weighted_bce(f, t, unbalanced_weights(m));
    CHECK(std::abs(plain - oracle::plain_bce(f, t)) <= 1e-12 * std::max(1.0, plain));
  }
}

TEST_CASE("batch loss is the mean of per-sample losses") {
  const ObjectiveWeights w{{1.0, 0.5}};
  const std::vector<std::vector<double>> f{{0.9}, {0.2}, {0.6}};
  const std::vector<std::vector<int>> t{{1}, {0}, {0}};
  const double expected = (-std::log(0.9) - 0.5 * std::log(0.8) - 0.5 * std::log(0.4)) / 3.0;
  CHECK(std::abs(weighted_bce_batch(f, t, w) - expected) <= 1e-12);
}

TEST_CASE("gradient matches finite differences and has the right sign") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = rng.uniform_int(1, 5);
    std::vector<double> f(m);
    std::vector<int> t(m);
    ObjectiveWeights w(m);
    for (int i = 0; i < m; ++i) {
      f[i] = rng.uniform(0.02, 0.98);
      t[i] = rng.bernoulli(0.5) ? 1 : 0;
      w[i] = {rng.uniform(0.05, 1.0), rng.uniform(0.05, 1.0)};
    }
    const auto g = weighted_bce_gradient(f, t, w);
    for (int i = 0; i < m; ++i) {
      const double h = 1e-6;
      auto up = f;
      auto dn = f;
      up[i] += h;
      dn[i] -= h;
      const double fd = (weighted_bce(up, t, w) - weighted_bce(dn, t, w)) / (2 * h);
      CHECK(std::abs(fd - g[i]) <= 1e-4 * std::abs(g[i]));
      // monotone: decreasing in f for positives, increasing for negatives
      if (t[i] == 1) CHECK(fd < 0.0);
      else CHECK(fd > 0.0);
    }
  }
}

TEST_CASE("weights serialize with explicit names") {
  const auto j = to_json(ObjectiveWeights{{1.0, 0.25}});
  CHECK(j[0]["w_plus"] == 1.0);
  CHECK(j[0]["w_minus"] == 0.25);
}
