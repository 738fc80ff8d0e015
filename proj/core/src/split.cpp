#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

#include "camalign/datagen.hpp"
#include "camalign/errors.hpp"

namespace camalign {

std::vector<int> stratified_split(std::span<const int> classes, std::span<const double> fractions,
                                  std::uint64_t seed) {
  if (fractions.empty()) throw ConfigError("stratified_split: no fractions given");
  double sum = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw ConfigError("stratified_split: fractions must be nonnegative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("stratified_split: fractions must sum to 1");

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < classes.size(); ++i) members[classes[i]].push_back(i);

  const std::size_t n_splits = fractions.size();
  const double total = static_cast<double>(classes.size());
  std::vector<long long> assigned(n_splits, 0);
  std::vector<int> out(classes.size(), 0);

  for (auto& [label, idx] : members) {
    if (idx.size() < n_splits) {
      throw ConfigError("stratified_split: class " + std::to_string(label) + " has " + std::to_string(idx.size()) +
                        " members, fewer than the " + std::to_string(n_splits) + " splits");
    }
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(static_cast<std::int64_t>(label))}));
    rng.shuffle(idx);

    const double n = static_cast<double>(idx.size());
    std::vector<long long> quota(n_splits);
    std::vector<double> frac(n_splits);
    long long given = 0;
    for (std::size_t s = 0; s < n_splits; ++s) {
      const double exact = n * fractions[s];
      quota[s] = static_cast<long long>(std::floor(exact + 1e-9));
      frac[s] = exact - static_cast<double>(quota[s]);
      given += quota[s];
    }
    // Remaining members go to the largest fractional parts; among equal
    // parts, to the split furthest below its overall target size.
    std::vector<std::size_t> order(n_splits);
    std::iota(order.begin(), order.end(), 0);
    auto deficit = [&](std::size_t s) { return total * fractions[s] - static_cast<double>(assigned[s] + quota[s]); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (std::abs(frac[a] - frac[b]) > 1e-9) return frac[a] > frac[b];
      const double da = deficit(a);
      const double db = deficit(b);
      if (std::abs(da - db) > 1e-9) return da > db;
      return a < b;
    });
    for (long long r = static_cast<long long>(idx.size()) - given, k = 0; r > 0; --r, ++k) {
      ++quota[order[static_cast<std::size_t>(k) % n_splits]];
    }

    std::size_t pos = 0;
    for (std::size_t s = 0; s < n_splits; ++s) {
      for (long long q = 0; q < quota[s]; ++q) out[idx[pos++]] = static_cast<int>(s);
      assigned[s] += quota[s];
    }
  }
  return out;
}

void assign_splits(Dataset& dataset, std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.size() != 3) throw ConfigError("assign_splits: expected train/validation/test fractions");
  std::vector<int> classes;
  classes.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) classes.push_back(s.labels.at(kActiveObjective));
  const auto split = stratified_split(classes, fractions, seed);
  for (std::size_t i = 0; i < split.size(); ++i) dataset.samples[i].split = static_cast<Split>(split[i]);
}

}  // namespace camalign
