#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/profile.hpp"
#include "mechlearn/rational.hpp"

namespace mechlearn {

/// A point of the value grid, identified by its integer index.
struct GridValue {
  int index = 0;
  auto operator<=>(const GridValue&) const = default;
};

/// The grid of integer multiples of epsilon in [0, h].
///
/// All equality on grid values is integer equality on indices. The top grid
/// point is the largest multiple of epsilon not exceeding h, so when h is not
/// a multiple of epsilon the partial top cell [top, h] rounds to it.
class GridSpec {
 public:
  /// Real values this close (relative) below a grid point count as on it.
  static constexpr double kSnapTolerance = 1e-9;

  GridSpec(double epsilon, double h) : epsilon_(epsilon), h_(h) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw UsageError("grid step must be positive");
    if (!(h > 0.0) || !std::isfinite(h)) throw UsageError("value cap must be positive");
    if (epsilon > h) throw UsageError("grid step must not exceed the value cap");
    top_ = floor_index(h);
    cells_ = static_cast<int>(std::ceil(h / epsilon - kSnapTolerance));
  }

  double epsilon() const { return epsilon_; }
  double h() const { return h_; }

  /// Number of grid points.
  int levels() const { return top_ + 1; }
  int top_index() const { return top_; }

  /// ceil(h / epsilon): the number of grid cells used by the counting bounds.
  int cells() const { return cells_; }

  double value(GridValue g) const { return g.index * epsilon_; }
  double value(int index) const { return index * epsilon_; }
  Rational exact_value(int index) const { return exact_rational(epsilon_) * index; }

  bool contains(GridValue g) const { return g.index >= 0 && g.index <= top_; }

  /// Largest grid point not exceeding v.
  GridValue round_down(double v) const {
    if (!(v >= 0.0) || v > h_) {
      throw DomainError("value " + format_double(v) + " is outside [0, " + format_double(h_) + "]");
    }
    return GridValue{std::min(floor_index(v), top_)};
  }

  bool operator==(const GridSpec&) const = default;

 private:
  int floor_index(double v) const {
    double q = v / epsilon_;
    double k = std::floor(q);
    if (q - k > 1.0 - kSnapTolerance) k += 1.0;
    return static_cast<int>(k);
  }

  double epsilon_;
  double h_;
  int top_ = 0;
  int cells_ = 0;
};

/// A finite distribution over grid points with exact rational masses.
class DiscreteMarginal {
 public:
  DiscreteMarginal(GridSpec grid, const std::map<int, Rational>& mass) : grid_(grid) {
    Rational total = 0;
    for (const auto& [index, p] : mass) {
      if (!grid_.contains(GridValue{index})) {
        throw UsageError("marginal mass at grid index " + std::to_string(index) + " is off the grid");
      }
      if (p < 0) throw UsageError("marginal has a negative probability");
      total += p;
      if (p > 0) {
        support_.push_back(index);
        mass_.push_back(p);
      }
    }
    if (total != 1) throw UsageError("marginal probabilities sum to " + format_rational(total) + ", not 1");
    mass_d_.reserve(mass_.size());
    for (const auto& p : mass_) mass_d_.push_back(to_double(p));
  }

  /// Real-valued masses; the sum must be within 1e-12 of one and is then
  /// renormalized exactly.
  static DiscreteMarginal from_real(GridSpec grid, const std::map<int, double>& mass) {
    double total = 0.0;
    for (const auto& [index, p] : mass) {
      if (!(p >= 0.0)) throw UsageError("marginal has a negative probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw UsageError("marginal probabilities do not sum to 1");
    Rational exact_total = 0;
    std::map<int, Rational> exact;
    for (const auto& [index, p] : mass) {
      exact[index] = exact_rational(p);
      exact_total += exact[index];
    }
    for (auto& [index, p] : exact) p /= exact_total;
    return DiscreteMarginal(grid, exact);
  }

  static DiscreteMarginal point_mass(GridSpec grid, GridValue g) {
    return DiscreteMarginal(grid, {{g.index, Rational(1)}});
  }

  const GridSpec& grid() const { return grid_; }

  /// Grid indices with positive mass, increasing.
  const std::vector<int>& support() const { return support_; }
  std::size_t support_size() const { return support_.size(); }

  const Rational& mass_at(std::size_t pos) const { return mass_[pos]; }
  double mass_at_d(std::size_t pos) const { return mass_d_[pos]; }

  std::optional<std::size_t> position(GridValue g) const {
    auto it = std::lower_bound(support_.begin(), support_.end(), g.index);
    if (it == support_.end() || *it != g.index) return std::nullopt;
    return static_cast<std::size_t>(it - support_.begin());
  }

  bool contains(GridValue g) const { return position(g).has_value(); }

  Rational probability(GridValue g) const {
    auto pos = position(g);
    return pos ? mass_[*pos] : Rational(0);
  }

  bool operator==(const DiscreteMarginal& o) const {
    return grid_ == o.grid_ && support_ == o.support_ && mass_ == o.mass_;
  }

 private:
  GridSpec grid_;
  std::vector<int> support_;
  std::vector<Rational> mass_;
  std::vector<double> mass_d_;
};

/// Independent product of n x m grid marginals sharing one grid.
class ProductPrior {
 public:
  ProductPrior(int n, int m, std::vector<DiscreteMarginal> marginals)
      : n_(n), m_(m), marginals_(std::move(marginals)) {
    if (n < 1 || m < 1) throw UsageError("prior needs n >= 1 and m >= 1");
    if (marginals_.size() != static_cast<std::size_t>(n * m)) {
      throw UsageError("prior needs exactly n*m marginals");
    }
    for (const auto& mg : marginals_) {
      if (!(mg.grid() == marginals_.front().grid())) throw UsageError("all marginals must share one grid");
    }
    std::vector<std::vector<int>> allowed;
    allowed.reserve(marginals_.size());
    for (const auto& mg : marginals_) allowed.push_back(mg.support());
    domain_ = ProfileDomain::product(n, m, grid().levels(), std::move(allowed));
  }

  int bidders() const { return n_; }
  int params() const { return m_; }
  const GridSpec& grid() const { return marginals_.front().grid(); }

  const DiscreteMarginal& marginal(int i, int j) const {
    return marginals_.at(static_cast<std::size_t>(i * m_ + j));
  }
  const std::vector<DiscreteMarginal>& marginals() const { return marginals_; }

  /// The product of the marginal supports.
  const ProfileDomain& support_domain() const { return domain_; }

  Rational type_probability(int k, std::span<const int> type) const {
    Rational p = 1;
    for (int j = 0; j < m_; ++j) p *= marginal(k, j).probability(GridValue{type[static_cast<std::size_t>(j)]});
    return p;
  }

  double type_probability_d(int k, std::span<const int> type) const {
    double p = 1.0;
    for (int j = 0; j < m_; ++j) {
      const auto& mg = marginal(k, j);
      auto pos = mg.position(GridValue{type[static_cast<std::size_t>(j)]});
      if (!pos) return 0.0;
      p *= mg.mass_at_d(*pos);
    }
    return p;
  }

  /// Probabilities of each support type of bidder k, in domain order.
  std::vector<Rational> type_weights(int k) const {
    std::vector<Rational> w(domain_.type_count(k));
    std::vector<int> t(static_cast<std::size_t>(m_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      domain_.type_into(k, i, t);
      w[i] = type_probability(k, t);
    }
    return w;
  }

  std::vector<double> type_weights_d(int k) const {
    std::vector<double> w(domain_.type_count(k));
    std::vector<int> t(static_cast<std::size_t>(m_));
    for (std::size_t i = 0; i < w.size(); ++i) {
      domain_.type_into(k, i, t);
      w[i] = type_probability_d(k, t);
    }
    return w;
  }

  bool operator==(const ProductPrior& o) const {
    return n_ == o.n_ && m_ == o.m_ && marginals_ == o.marginals_;
  }

 private:
  int n_;
  int m_;
  std::vector<DiscreteMarginal> marginals_;
  ProfileDomain domain_;
};

/// Rounds every sample down and returns the uniform distribution over the
/// rounded multiset: mass(g) = count(g) / S exactly.
inline DiscreteMarginal empirical_marginal(std::span<const double> samples, const GridSpec& grid) {
  if (samples.empty()) throw UsageError("empirical marginal needs at least one sample");
  std::map<int, std::int64_t> counts;
  for (double v : samples) ++counts[grid.round_down(v).index];
  std::map<int, Rational> mass;
  const auto total = static_cast<std::int64_t>(samples.size());
  for (const auto& [index, c] : counts) mass[index] = Rational(c, total);
  return DiscreteMarginal(grid, mass);
}

/// Smallest S with
///   S >= (8 n^2 m^2 L^2 H^2 / eps^2) * (log(4nmLH/eps) + log(1/delta) + log n
///          + 2m log ceil(H/eps) + n m ceil(H/eps) log(S+1)),
/// which is enough for the empirical revenues and interim utilities of every
/// candidate mechanism to concentrate with probability 1 - delta.
inline std::uint64_t recommended_sample_count(int n, int m, double lipschitz, double h, double epsilon,
                                              double delta) {
  if (n < 1 || m < 1) throw UsageError("n and m must be positive");
  if (!(lipschitz > 0) || !(h > 0) || !(epsilon > 0)) throw UsageError("L, H and epsilon must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw UsageError("delta must lie in (0, 1)");
  const double nm = static_cast<double>(n) * m;
  const double cells = std::ceil(h / epsilon);
  const double scale = 8.0 * nm * nm * lipschitz * lipschitz * h * h / (epsilon * epsilon);
  const double constant = std::log(4.0 * nm * lipschitz * h / epsilon) + std::log(1.0 / delta) +
                          std::log(static_cast<double>(n)) + 2.0 * m * std::log(cells);
  const double slope = nm * cells;
  auto required = [&](double s) { return scale * (constant + slope * std::log(s + 1.0)); };
  // The right-hand side is increasing and concave, so iterating from below
  // climbs monotonically to the least fixed point.
  double s = 1.0;
  for (int iter = 0; iter < 10000; ++iter) {
    double next = std::max(1.0, std::ceil(required(s)));
    if (next <= s) break;
    s = next;
  }
  if (s > 9.0e18) throw CapacityError("recommended sample count overflows");
  auto result = static_cast<std::uint64_t>(s);
  while (result > 1 && static_cast<double>(result - 1) >= required(static_cast<double>(result - 1))) --result;
  return result;
}

}  // namespace mechlearn
