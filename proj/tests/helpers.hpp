#pragma once

#include <map>
#include <random>
#include <utility>
#include <vector>

#include "mechlearn/grid.hpp"
#include "mechlearn/mechanism.hpp"
#include "mechlearn/outcome.hpp"
#include "mechlearn/sampling.hpp"
#include "mechlearn/valuation.hpp"

namespace mechlearn::testing {

inline Rational q(long a, long b = 1) { return Rational(a, b); }

/// Marginal from {grid index: a/b} pairs.
inline DiscreteMarginal marginal(const GridSpec& g, std::map<int, Rational> mass) { return DiscreteMarginal(g, mass); }

inline DiscreteMarginal uniform_on(const GridSpec& g, const std::vector<int>& idx) {
  std::map<int, Rational> mass;
  for (int i : idx) mass[i] = q(1, static_cast<long>(idx.size()));
  return DiscreteMarginal(g, mass);
}

/// Same marginal in every (bidder, parameter) cell.
inline ProductPrior iid(int n, int m, const DiscreteMarginal& mg) {
  return ProductPrior(n, m, std::vector<DiscreteMarginal>(static_cast<std::size_t>(n * m), mg));
}

inline Setting additive_setting(int n, int m, const GridSpec& g) {
  return Setting(enumerate_multi_item(n, m), ValuationModel::additive(m), g);
}

/// Random marginal on a random subset of `max_points` grid indices with
/// small-denominator masses.
inline DiscreteMarginal random_marginal(std::mt19937_64& rng, const GridSpec& g, int max_points) {
  std::uniform_int_distribution<int> count(1, max_points);
  std::uniform_int_distribution<int> idx(0, g.top_index());
  std::uniform_int_distribution<int> weight(1, 4);
  std::map<int, Rational> raw;
  const int k = count(rng);
  while (static_cast<int>(raw.size()) < k) raw[idx(rng)] = weight(rng);
  Rational total = 0;
  for (auto& [i, w] : raw) total += w;
  for (auto& [i, w] : raw) w /= total;
  return DiscreteMarginal(g, raw);
}

/// Samples given cell by cell, (bidder, parameter) order.
inline SampleSet samples_from(int n, int m, const std::vector<std::vector<double>>& cells) {
  SampleSet out{n, m, static_cast<int>(cells.front().size()), 0, {}};
  for (const auto& c : cells) out.values.insert(out.values.end(), c.begin(), c.end());
  return out;
}

/// Single-bidder, single-item posted price over the full grid.
inline MechanismTable posted_price(const GridSpec& g, int n, int price_index) {
  auto domain = ProfileDomain::full(n, 1, g.levels());
  std::vector<Lottery> rows(domain.size());
  std::vector<int> profile(static_cast<std::size_t>(n));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    domain.profile_into(r, profile);
    // Highest bidder at or above the price wins; ties go to the lowest index.
    int winner = -1;
    for (int i = 0; i < n; ++i) {
      if (profile[static_cast<std::size_t>(i)] >= price_index &&
          (winner < 0 || profile[static_cast<std::size_t>(i)] > profile[static_cast<std::size_t>(winner)])) {
        winner = i;
      }
    }
    std::vector<double> pay(static_cast<std::size_t>(n), 0.0);
    if (winner >= 0) pay[static_cast<std::size_t>(winner)] = g.value(price_index);
    rows[r] = {LotteryEntry{1.0, winner + 1, pay}};
  }
  return MechanismTable(g, std::move(domain), static_cast<std::size_t>(n + 1), std::move(rows));
}

}  // namespace mechlearn::testing
