#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/outcome.hpp"

namespace mechlearn {

enum class ModelTag { additive, unit_demand, additive_up_to_k, paired_complements, custom_table };

inline const char* to_string(ModelTag t) {
  switch (t) {
    case ModelTag::additive: return "additive";
    case ModelTag::unit_demand: return "unit_demand";
    case ModelTag::additive_up_to_k: return "additive_up_to_k";
    case ModelTag::paired_complements: return "paired_complements";
    case ModelTag::custom_table: return "custom";
  }
  return "?";
}

/// Maps a bidder's parameter vector and an outcome to a value.
///
/// The built-in models read bidder i's allocation row of the outcome:
///   additive            sum_j x_ij v_j
///   unit_demand         max_j x_ij v_j
///   additive_up_to_k    sum of the k largest x_ij v_j
///   paired_complements  sum_j v_j x_{i,2j} x_{i,2j+1}  (2m columns)
/// All four are 1-Lipschitz in each parameter.
class ValuationModel {
 public:
  static ValuationModel additive(int m) { return ValuationModel(ModelTag::additive, m, 1.0, 0); }
  static ValuationModel unit_demand(int m) { return ValuationModel(ModelTag::unit_demand, m, 1.0, 0); }
  static ValuationModel additive_up_to_k(int m, int k) {
    if (k < 1) throw UsageError("additive_up_to_k needs k >= 1");
    return ValuationModel(ModelTag::additive_up_to_k, m, 1.0, k);
  }
  static ValuationModel paired_complements(int m) { return ValuationModel(ModelTag::paired_complements, m, 1.0, 0); }

  /// Lookup tables values[i][g][o] over grid parameter vectors g (mixed
  /// radix, parameter 0 most significant). Real parameters interpolate
  /// multilinearly between neighbouring grid vectors. The declared L is
  /// audited on every pair of grid neighbours.
  static ValuationModel custom_table(GridSpec grid, int m, double lipschitz,
                                     std::vector<std::vector<std::vector<double>>> values) {
    if (!(lipschitz > 0.0)) throw UsageError("custom model needs a positive Lipschitz constant");
    ValuationModel model(ModelTag::custom_table, m, lipschitz, 0);
    model.grid_ = grid;
    const std::size_t vectors = grid_vector_count(grid, m);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].size() != vectors) {
        throw UsageError("custom table for bidder " + std::to_string(i) + " needs " + std::to_string(vectors) +
                         " grid vectors");
      }
      for (const auto& row : values[i]) {
        if (row.size() != values[i].front().size()) throw UsageError("custom table rows differ in outcome count");
        for (double v : row) {
          if (!(v >= 0.0) || !std::isfinite(v)) throw UsageError("custom table values must be finite and nonnegative");
        }
      }
    }
    model.table_ = std::move(values);
    model.audit_table();
    return model;
  }

  ModelTag tag() const { return tag_; }
  int params() const { return m_; }
  double lipschitz() const { return lipschitz_; }
  int k() const { return k_; }

  /// Throws if the space's shape does not fit this model.
  void check_space(const OutcomeSpace& space) const {
    switch (tag_) {
      case ModelTag::additive:
      case ModelTag::unit_demand:
      case ModelTag::additive_up_to_k:
        if (space.columns() != m_) {
          throw UsageError(std::string(to_string(tag_)) + " model needs one allocation column per parameter");
        }
        break;
      case ModelTag::paired_complements:
        if (space.columns() != 2 * m_) throw UsageError("paired_complements needs 2m allocation columns");
        break;
      case ModelTag::custom_table:
        if (static_cast<int>(table_.size()) != space.bidders()) {
          throw UsageError("custom table has " + std::to_string(table_.size()) + " bidders, space has " +
                           std::to_string(space.bidders()));
        }
        if (table_.front().front().size() != space.size()) {
          throw UsageError("custom table outcome count does not match the space");
        }
        break;
    }
  }

  double value(const OutcomeSpace& space, int i, std::span<const double> params, std::size_t o) const {
    if (static_cast<int>(params.size()) != m_) {
      throw UsageError("parameter vector has length " + std::to_string(params.size()) + ", expected " +
                       std::to_string(m_));
    }
    if (o >= space.size()) throw UsageError("outcome index out of range");
    switch (tag_) {
      case ModelTag::additive: {
        double v = 0.0;
        for (int j = 0; j < m_; ++j) v += space.allocation(o, i, j) * params[static_cast<std::size_t>(j)];
        return v;
      }
      case ModelTag::unit_demand: {
        double v = 0.0;
        for (int j = 0; j < m_; ++j) v = std::max(v, space.allocation(o, i, j) * params[static_cast<std::size_t>(j)]);
        return v;
      }
      case ModelTag::additive_up_to_k: {
        std::vector<double> terms(static_cast<std::size_t>(m_));
        for (int j = 0; j < m_; ++j) terms[static_cast<std::size_t>(j)] = space.allocation(o, i, j) * params[static_cast<std::size_t>(j)];
        std::sort(terms.begin(), terms.end(), std::greater<>());
        double v = 0.0;
        for (int t = 0; t < std::min(k_, m_); ++t) v += terms[static_cast<std::size_t>(t)];
        return v;
      }
      case ModelTag::paired_complements: {
        double v = 0.0;
        for (int j = 0; j < m_; ++j) {
          v += params[static_cast<std::size_t>(j)] * space.allocation(o, i, 2 * j) * space.allocation(o, i, 2 * j + 1);
        }
        return v;
      }
      case ModelTag::custom_table:
        return interpolate(i, params, o);
    }
    return 0.0;
  }

  /// Value at a grid parameter vector given by indices.
  double grid_value(const OutcomeSpace& space, const GridSpec& grid, int i, std::span<const int> type,
                    std::size_t o) const {
    if (tag_ == ModelTag::custom_table && grid == grid_) {
      return table_[static_cast<std::size_t>(i)][vector_index(type)][o];
    }
    std::vector<double> params(type.size());
    for (std::size_t j = 0; j < type.size(); ++j) params[j] = grid.value(type[j]);
    return value(space, i, params, o);
  }

 private:
  ValuationModel(ModelTag tag, int m, double lipschitz, int k) : tag_(tag), m_(m), lipschitz_(lipschitz), k_(k), grid_(1.0, 1.0) {
    if (m < 1) throw UsageError("valuation model needs m >= 1");
  }

  static std::size_t grid_vector_count(const GridSpec& grid, int m) {
    std::size_t count = 1;
    for (int j = 0; j < m; ++j) {
      count *= static_cast<std::size_t>(grid.levels());
      if (count > 10'000'000) throw CapacityError("custom table grid is too large");
    }
    return count;
  }

  std::size_t vector_index(std::span<const int> type) const {
    std::size_t idx = 0;
    for (int g : type) idx = idx * static_cast<std::size_t>(grid_.levels()) + static_cast<std::size_t>(g);
    return idx;
  }

  double interpolate(int i, std::span<const double> params, std::size_t o) const {
    const auto& table = table_[static_cast<std::size_t>(i)];
    std::vector<int> lo(static_cast<std::size_t>(m_));
    std::vector<double> frac(static_cast<std::size_t>(m_));
    for (int j = 0; j < m_; ++j) {
      double v = params[static_cast<std::size_t>(j)];
      int g = grid_.round_down(v).index;
      lo[static_cast<std::size_t>(j)] = g;
      frac[static_cast<std::size_t>(j)] = g < grid_.top_index() ? std::clamp((v - grid_.value(g)) / grid_.epsilon(), 0.0, 1.0) : 0.0;
    }
    double total = 0.0;
    std::vector<int> corner(static_cast<std::size_t>(m_));
    for (unsigned mask = 0; mask < (1u << m_); ++mask) {
      double w = 1.0;
      for (int j = 0; j < m_; ++j) {
        bool up = (mask >> j) & 1u;
        double f = frac[static_cast<std::size_t>(j)];
        w *= up ? f : 1.0 - f;
        corner[static_cast<std::size_t>(j)] = lo[static_cast<std::size_t>(j)] + (up ? 1 : 0);
      }
      if (w == 0.0) continue;
      total += w * table[vector_index(corner)][o];
    }
    return total;
  }

  void audit_table() const {
    const double bound = lipschitz_ * grid_.epsilon() + 1e-12;
    const int levels = grid_.levels();
    std::size_t stride = 1;
    for (int j = m_ - 1; j >= 0; --j) {
      for (std::size_t b = 0; b < table_.size(); ++b) {
        const auto& table = table_[b];
        for (std::size_t g = 0; g < table.size(); ++g) {
          if (static_cast<int>((g / stride) % static_cast<std::size_t>(levels)) == levels - 1) continue;
          for (std::size_t o = 0; o < table[g].size(); ++o) {
            if (std::abs(table[g][o] - table[g + stride][o]) > bound) {
              throw UsageError("custom table violates the declared Lipschitz constant for bidder " + std::to_string(b) +
                               " at grid vector " + std::to_string(g) + ", parameter " + std::to_string(j) +
                               ", outcome " + std::to_string(o));
            }
          }
        }
      }
      stride *= static_cast<std::size_t>(levels);
    }
  }

  ModelTag tag_;
  int m_;
  double lipschitz_;
  int k_;
  GridSpec grid_;
  std::vector<std::vector<std::vector<double>>> table_;
};

/// Per-bidder value of every outcome at every grid type of that bidder,
/// enumerated lexicographically (parameter 0 most significant).
class GridValueTable {
 public:
  GridValueTable(const OutcomeSpace& space, const ValuationModel& model, const GridSpec& grid)
      : outcomes_(space.size()), levels_(grid.levels()), m_(model.params()) {
    model.check_space(space);
    types_ = 1;
    for (int j = 0; j < m_; ++j) {
      types_ *= static_cast<std::size_t>(levels_);
      if (types_ * outcomes_ > 50'000'000) throw CapacityError("grid value table is too large");
    }
    values_.resize(static_cast<std::size_t>(space.bidders()));
    std::vector<int> type(static_cast<std::size_t>(m_));
    for (int i = 0; i < space.bidders(); ++i) {
      auto& v = values_[static_cast<std::size_t>(i)];
      v.resize(types_ * outcomes_);
      for (std::size_t t = 0; t < types_; ++t) {
        decode(t, type);
        for (std::size_t o = 0; o < outcomes_; ++o) v[t * outcomes_ + o] = model.grid_value(space, grid, i, type, o);
      }
    }
  }

  std::size_t types() const { return types_; }
  std::size_t outcomes() const { return outcomes_; }

  void decode(std::size_t t, std::span<int> type) const {
    for (int j = m_ - 1; j >= 0; --j) {
      type[static_cast<std::size_t>(j)] = static_cast<int>(t % static_cast<std::size_t>(levels_));
      t /= static_cast<std::size_t>(levels_);
    }
  }

  std::size_t encode(std::span<const int> type) const {
    std::size_t t = 0;
    for (int g : type) t = t * static_cast<std::size_t>(levels_) + static_cast<std::size_t>(g);
    return t;
  }

  /// Values of every outcome for bidder i at grid type t.
  std::span<const double> row(int i, std::size_t t) const {
    return std::span<const double>(values_[static_cast<std::size_t>(i)]).subspan(t * outcomes_, outcomes_);
  }

 private:
  std::size_t outcomes_;
  int levels_;
  int m_;
  std::size_t types_ = 0;
  std::vector<std::vector<double>> values_;
};

/// Witness outcomes derived from value signatures over the whole grid.
struct OutcomeWitnesses {
  /// keep[o][k]: an outcome giving k the same value as o at every grid type
  /// and every other bidder value 0, or -1 if none exists.
  std::vector<std::vector<int>> keep;
  /// remove[o][k]: an outcome giving k value 0 and every other bidder the
  /// same value as o, or -1.
  std::vector<std::vector<int>> remove;
  /// An outcome worth 0 to everybody at every grid type, or -1.
  int null_outcome = -1;
};

struct DownwardClosure {
  bool closed = false;
  OutcomeWitnesses witnesses;
  /// First (outcome, bidder) without a keep witness when not closed.
  int counterexample_outcome = -1;
  int counterexample_bidder = -1;
};

inline OutcomeWitnesses compute_witnesses(const OutcomeSpace& space, const ValuationModel& model, const GridSpec& grid) {
  GridValueTable table(space, model, grid);
  const int n = space.bidders();
  const std::size_t outcomes = space.size();
  constexpr double tol = 1e-12;
  auto same = [&](int i, std::size_t a, std::size_t b) {
    for (std::size_t t = 0; t < table.types(); ++t) {
      auto r = table.row(i, t);
      if (std::abs(r[a] - r[b]) > tol) return false;
    }
    return true;
  };
  std::vector<std::vector<char>> zero(static_cast<std::size_t>(n), std::vector<char>(outcomes, 1));
  for (int i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < table.types(); ++t) {
      auto r = table.row(i, t);
      for (std::size_t o = 0; o < outcomes; ++o) {
        if (std::abs(r[o]) > tol) zero[static_cast<std::size_t>(i)][o] = 0;
      }
    }
  }
  OutcomeWitnesses w;
  w.keep.assign(outcomes, std::vector<int>(static_cast<std::size_t>(n), -1));
  w.remove.assign(outcomes, std::vector<int>(static_cast<std::size_t>(n), -1));
  for (std::size_t o = 0; o < outcomes; ++o) {
    bool all_zero = true;
    for (int i = 0; i < n; ++i) all_zero = all_zero && zero[static_cast<std::size_t>(i)][o];
    if (all_zero) {
      w.null_outcome = static_cast<int>(o);
      break;
    }
  }
  for (std::size_t o = 0; o < outcomes; ++o) {
    for (int k = 0; k < n; ++k) {
      for (std::size_t c = 0; c < outcomes && w.keep[o][static_cast<std::size_t>(k)] < 0; ++c) {
        bool ok = same(k, o, c);
        for (int i = 0; i < n && ok; ++i) ok = i == k || zero[static_cast<std::size_t>(i)][c];
        if (ok) w.keep[o][static_cast<std::size_t>(k)] = static_cast<int>(c);
      }
      for (std::size_t c = 0; c < outcomes && w.remove[o][static_cast<std::size_t>(k)] < 0; ++c) {
        bool ok = zero[static_cast<std::size_t>(k)][c];
        for (int i = 0; i < n && ok; ++i) ok = i == k || same(i, o, c);
        if (ok) w.remove[o][static_cast<std::size_t>(k)] = static_cast<int>(c);
      }
    }
  }
  return w;
}

/// Checks that for every outcome x and bidder k some x' keeps k's value at
/// every grid type while zeroing everyone else's.
inline DownwardClosure check_weakly_downward_closed(const OutcomeSpace& space, const ValuationModel& model,
                                                    const GridSpec& grid) {
  DownwardClosure result;
  result.witnesses = compute_witnesses(space, model, grid);
  result.closed = true;
  for (std::size_t o = 0; o < space.size() && result.closed; ++o) {
    for (int k = 0; k < space.bidders(); ++k) {
      if (result.witnesses.keep[o][static_cast<std::size_t>(k)] < 0) {
        result.closed = false;
        result.counterexample_outcome = static_cast<int>(o);
        result.counterexample_bidder = k;
        break;
      }
    }
  }
  return result;
}

}  // namespace mechlearn
