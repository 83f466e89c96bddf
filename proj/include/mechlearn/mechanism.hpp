#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/outcome.hpp"
#include "mechlearn/profile.hpp"
#include "mechlearn/rational.hpp"
#include "mechlearn/valuation.hpp"

namespace mechlearn {

struct LotteryEntry {
  double probability = 0.0;
  int outcome = 0;
  std::vector<double> payments;

  bool operator==(const LotteryEntry&) const = default;
};

/// A finite distribution over priced outcomes.
using Lottery = std::vector<LotteryEntry>;

inline double expected_payment(const Lottery& lottery, int k) {
  double p = 0.0;
  for (const auto& e : lottery) p += e.probability * e.payments[static_cast<std::size_t>(k)];
  return p;
}

inline double expected_value(const Lottery& lottery, std::span<const double> outcome_values) {
  double v = 0.0;
  for (const auto& e : lottery) v += e.probability * outcome_values[static_cast<std::size_t>(e.outcome)];
  return v;
}

/// The priced outcome with all-zero payments on a fixed outcome.
inline Lottery certain(int outcome, int n) {
  return {LotteryEntry{1.0, outcome, std::vector<double>(static_cast<std::size_t>(n), 0.0)}};
}

/// Explicit map from the grid profiles of a product domain to lotteries,
/// stored densely in domain order.
class MechanismTable {
 public:
  static constexpr double kProbabilityTolerance = 1e-9;

  MechanismTable(GridSpec grid, ProfileDomain domain, std::size_t outcome_count, std::vector<Lottery> rows)
      : grid_(grid), domain_(std::move(domain)), outcome_count_(outcome_count), rows_(std::move(rows)) {
    if (domain_.levels() != grid_.levels()) throw UsageError("mechanism domain does not match the grid");
    if (rows_.size() != domain_.size()) {
      throw UsageError("mechanism has " + std::to_string(rows_.size()) + " rows for a domain of " +
                       std::to_string(domain_.size()) + " profiles");
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) validate_row(r);
  }

  const GridSpec& grid() const { return grid_; }
  const ProfileDomain& domain() const { return domain_; }
  int bidders() const { return domain_.bidders(); }
  int params() const { return domain_.params(); }
  std::size_t outcome_count() const { return outcome_count_; }
  const std::vector<Lottery>& rows() const { return rows_; }
  const Lottery& row(std::size_t idx) const { return rows_.at(idx); }

  /// The lottery at a grid profile, or nullptr if the profile is outside the domain.
  const Lottery* find(std::span<const int> profile) const {
    auto idx = domain_.index_of(profile);
    return idx ? &rows_[*idx] : nullptr;
  }

  bool operator==(const MechanismTable& o) const {
    return grid_ == o.grid_ && domain_ == o.domain_ && outcome_count_ == o.outcome_count_ && rows_ == o.rows_;
  }

 private:
  void validate_row(std::size_t r) const {
    const auto& lottery = rows_[r];
    auto where = [&] { return "mechanism row " + std::to_string(r); };
    if (lottery.empty()) throw UsageError(where() + " has an empty lottery");
    double total = 0.0;
    for (const auto& e : lottery) {
      if (!(e.probability >= 0.0)) throw UsageError(where() + " has a negative probability");
      if (e.outcome < 0 || static_cast<std::size_t>(e.outcome) >= outcome_count_) {
        throw UsageError(where() + " references outcome " + std::to_string(e.outcome));
      }
      if (e.payments.size() != static_cast<std::size_t>(bidders())) throw UsageError(where() + " has a wrong payment count");
      for (double p : e.payments) {
        if (!std::isfinite(p)) throw UsageError(where() + " has a non-finite payment");
      }
      total += e.probability;
    }
    if (std::abs(total - 1.0) > kProbabilityTolerance) {
      throw UsageError(where() + " has probabilities summing to " + format_double(total));
    }
  }

  GridSpec grid_;
  ProfileDomain domain_;
  std::size_t outcome_count_;
  std::vector<Lottery> rows_;
};

/// Outcome space, valuation model and grid, with every grid value precomputed.
class Setting {
 public:
  Setting(OutcomeSpace space, ValuationModel model, GridSpec grid)
      : space_(std::move(space)), model_(std::move(model)), grid_(grid), values_(space_, model_, grid_) {}

  const OutcomeSpace& space() const { return space_; }
  const ValuationModel& model() const { return model_; }
  const GridSpec& grid() const { return grid_; }
  const GridValueTable& values() const { return values_; }
  int bidders() const { return space_.bidders(); }
  int params() const { return model_.params(); }

  /// Values of every outcome for bidder k at grid type `type`.
  std::span<const double> outcome_values(int k, std::span<const int> type) const {
    return values_.row(k, values_.encode(type));
  }

  double utility(const Lottery& lottery, int k, std::span<const int> type) const {
    return expected_value(lottery, outcome_values(k, type)) - expected_payment(lottery, k);
  }

 private:
  OutcomeSpace space_;
  ValuationModel model_;
  GridSpec grid_;
  GridValueTable values_;
};

namespace detail {

inline void check_compatible(const MechanismTable& mech, const ProductPrior& prior) {
  if (!(mech.grid() == prior.grid())) throw UsageError("mechanism and prior use different grids");
  if (mech.bidders() != prior.bidders() || mech.params() != prior.params()) {
    throw UsageError("mechanism and prior have different shapes");
  }
}

inline std::string describe_profile(std::span<const int> profile) {
  std::string s = "(";
  for (std::size_t c = 0; c < profile.size(); ++c) s += (c ? "," : "") + std::to_string(profile[c]);
  return s + ")";
}

/// For each bidder, the mechanism type index of every prior-support type.
inline std::vector<std::vector<std::size_t>> map_support_types(const MechanismTable& mech, const ProductPrior& prior) {
  const auto& support = prior.support_domain();
  std::vector<std::vector<std::size_t>> map(static_cast<std::size_t>(prior.bidders()));
  std::vector<int> t(static_cast<std::size_t>(prior.params()));
  for (int k = 0; k < prior.bidders(); ++k) {
    for (std::size_t s = 0; s < support.type_count(k); ++s) {
      support.type_into(k, s, t);
      auto idx = mech.domain().type_index(k, t);
      if (!idx) {
        throw UsageError("mechanism does not cover bidder " + std::to_string(k) + "'s prior type " +
                         describe_profile(t));
      }
      map[static_cast<std::size_t>(k)].push_back(*idx);
    }
  }
  return map;
}

/// Calls f(weight, mechanism type indices of all bidders except k) for each
/// profile of the others in the prior support. Weight is their probability.
template <class T, class F>
void for_each_others(const ProductPrior& prior, const std::vector<std::vector<std::size_t>>& map,
                     const std::vector<std::vector<T>>& weights, int k, F&& f) {
  const int n = prior.bidders();
  std::vector<std::size_t> pos(static_cast<std::size_t>(n), 0);
  std::vector<std::size_t> mech_types(static_cast<std::size_t>(n), 0);
  while (true) {
    T w = T(1);
    for (int i = 0; i < n; ++i) {
      if (i == k) continue;
      w *= weights[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]];
      mech_types[static_cast<std::size_t>(i)] = map[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]];
    }
    f(w, mech_types);
    int i = n - 1;
    for (; i >= 0; --i) {
      if (i == k) continue;
      if (++pos[static_cast<std::size_t>(i)] < map[static_cast<std::size_t>(i)].size()) break;
      pos[static_cast<std::size_t>(i)] = 0;
    }
    if (i < 0) return;
  }
}

template <class T>
T to_number(double d) {
  if constexpr (std::is_same_v<T, Rational>) {
    return exact_rational(d);
  } else {
    return d;
  }
}

template <class T>
std::vector<std::vector<T>> support_weights(const ProductPrior& prior) {
  std::vector<std::vector<T>> w;
  for (int k = 0; k < prior.bidders(); ++k) {
    if constexpr (std::is_same_v<T, Rational>) {
      w.push_back(prior.type_weights(k));
    } else {
      w.push_back(prior.type_weights_d(k));
    }
  }
  return w;
}

}  // namespace detail

/// Expected total payment under a prior whose support the mechanism covers.
/// With T = Rational the sum is exact (every double is a dyadic rational).
template <class T = double>
T revenue(const MechanismTable& mech, const ProductPrior& prior) {
  detail::check_compatible(mech, prior);
  auto map = detail::map_support_types(mech, prior);
  auto weights = detail::support_weights<T>(prior);
  const int n = prior.bidders();
  T total = T(0);
  // Bidder 0 is handled by the outer loop, the rest by for_each_others.
  for (std::size_t s0 = 0; s0 < map[0].size(); ++s0) {
    detail::for_each_others<T>(prior, map, weights, 0, [&](const T& w, std::vector<std::size_t>& types) {
      types[0] = map[0][s0];
      const auto& lottery = mech.row(mech.domain().compose(types));
      T pay = T(0);
      for (const auto& e : lottery) {
        T sum = T(0);
        for (int i = 0; i < n; ++i) sum += detail::to_number<T>(e.payments[static_cast<std::size_t>(i)]);
        pay += detail::to_number<T>(e.probability) * sum;
      }
      total += weights[0][s0] * w * pay;
    });
  }
  return total;
}

inline Rational revenue_exact(const MechanismTable& mech, const ProductPrior& prior) {
  return revenue<Rational>(mech, prior);
}

/// Interim allocation and payment of bidder k for each of her reports,
/// averaging over the other bidders drawn from the prior.
struct InterimReports {
  int bidder = 0;
  std::size_t outcomes = 0;
  /// a[r * outcomes + o]: interim probability of outcome o when reporting r.
  std::vector<double> a;
  /// p[r]: interim expected payment when reporting r.
  std::vector<double> p;

  double utility(std::size_t r, std::span<const double> outcome_values) const {
    double u = -p[r];
    for (std::size_t o = 0; o < outcomes; ++o) u += a[r * outcomes + o] * outcome_values[o];
    return u;
  }
};

inline InterimReports interim_reports(const MechanismTable& mech, const ProductPrior& prior, int k) {
  detail::check_compatible(mech, prior);
  auto map = detail::map_support_types(mech, prior);
  auto weights = detail::support_weights<double>(prior);
  InterimReports out;
  out.bidder = k;
  out.outcomes = mech.outcome_count();
  const std::size_t reports = mech.domain().type_count(k);
  out.a.assign(reports * out.outcomes, 0.0);
  out.p.assign(reports, 0.0);
  detail::for_each_others<double>(prior, map, weights, k, [&](double w, std::vector<std::size_t>& types) {
    for (std::size_t r = 0; r < reports; ++r) {
      types[static_cast<std::size_t>(k)] = r;
      for (const auto& e : mech.row(mech.domain().compose(types))) {
        out.a[r * out.outcomes + static_cast<std::size_t>(e.outcome)] += w * e.probability;
        out.p[r] += w * e.probability * e.payments[static_cast<std::size_t>(k)];
      }
    }
  });
  return out;
}

/// U[t][r]: interim utility of true type t (a grid type) reporting the
/// mechanism's r-th type of bidder k; P[r]: interim payment.
struct InterimForm {
  int bidder = 0;
  std::vector<std::vector<int>> true_types;
  std::vector<std::vector<int>> reports;
  std::vector<std::vector<double>> utility;
  std::vector<double> payment;
};

enum class RegretScope { grid, support };

namespace detail {

inline std::vector<std::vector<int>> scope_types(const MechanismTable& mech, const ProductPrior& prior, int k,
                                                 RegretScope scope) {
  std::vector<std::vector<int>> types;
  if (scope == RegretScope::support) {
    const auto& d = prior.support_domain();
    for (std::size_t t = 0; t < d.type_count(k); ++t) types.push_back(d.type_at(k, t));
  } else {
    auto full = ProfileDomain::full(mech.bidders(), mech.params(), mech.grid().levels());
    for (std::size_t t = 0; t < full.type_count(k); ++t) types.push_back(full.type_at(k, t));
  }
  return types;
}

}  // namespace detail

inline InterimForm interim_form(const MechanismTable& mech, const ProductPrior& prior, const Setting& setting, int k,
                                RegretScope scope = RegretScope::support) {
  auto ir = interim_reports(mech, prior, k);
  InterimForm out;
  out.bidder = k;
  out.true_types = detail::scope_types(mech, prior, k, scope);
  for (std::size_t r = 0; r < mech.domain().type_count(k); ++r) out.reports.push_back(mech.domain().type_at(k, r));
  out.payment = ir.p;
  for (const auto& t : out.true_types) {
    auto vals = setting.outcome_values(k, t);
    std::vector<double> row(out.reports.size());
    for (std::size_t r = 0; r < row.size(); ++r) row[r] = ir.utility(r, vals);
    out.utility.push_back(std::move(row));
  }
  return out;
}

struct RegretWitness {
  int bidder = -1;
  /// BIC: bidder's true type; DSIC and IR: the full true profile.
  std::vector<int> truth;
  /// The deviating report (empty for IR).
  std::vector<int> report;
  double value = 0.0;
};

struct RegretReport {
  double bic_regret = 0.0;
  double dsic_regret = 0.0;
  double ir_slack = std::numeric_limits<double>::infinity();
  RegretWitness bic_witness;
  RegretWitness dsic_witness;
  RegretWitness ir_witness;
};

/// Interim gain of bidder k with true type `truth` from reporting `report`.
inline double bic_gain(const MechanismTable& mech, const ProductPrior& prior, const Setting& setting, int k,
                       std::span<const int> truth, std::span<const int> report) {
  auto ir = interim_reports(mech, prior, k);
  auto vals = setting.outcome_values(k, truth);
  auto t = mech.domain().type_index(k, truth);
  auto r = mech.domain().type_index(k, report);
  if (!t || !r) throw UsageError("bic_gain: type outside the mechanism domain");
  return ir.utility(*r, vals) - ir.utility(*t, vals);
}

inline double dsic_gain(const MechanismTable& mech, const Setting& setting, int k, std::span<const int> profile,
                        std::span<const int> report) {
  const auto m = static_cast<std::size_t>(mech.params());
  std::vector<int> truth(profile.begin() + static_cast<std::ptrdiff_t>(k * m),
                         profile.begin() + static_cast<std::ptrdiff_t>((k + 1) * m));
  std::vector<int> deviated(profile.begin(), profile.end());
  std::copy(report.begin(), report.end(), deviated.begin() + static_cast<std::ptrdiff_t>(k * m));
  const Lottery* honest = mech.find(profile);
  const Lottery* lie = mech.find(deviated);
  if (!honest || !lie) throw UsageError("dsic_gain: profile outside the mechanism domain");
  return setting.utility(*lie, k, truth) - setting.utility(*honest, k, truth);
}

inline double truthful_utility(const MechanismTable& mech, const Setting& setting, int k, std::span<const int> profile) {
  const auto m = static_cast<std::size_t>(mech.params());
  std::vector<int> truth(profile.begin() + static_cast<std::ptrdiff_t>(k * m),
                         profile.begin() + static_cast<std::ptrdiff_t>((k + 1) * m));
  const Lottery* row = mech.find(profile);
  if (!row) throw UsageError("truthful_utility: profile outside the mechanism domain");
  return setting.utility(*row, k, truth);
}

/// Incentive and participation audit. True types (BIC) and true profiles
/// (DSIC, IR) range over the scope: every grid point, or the prior support.
/// Deviations range over every type the mechanism is defined on. Interim
/// expectations are over the prior.
inline RegretReport regret_report(const MechanismTable& mech, const ProductPrior& prior, const Setting& setting,
                                  RegretScope scope = RegretScope::grid) {
  detail::check_compatible(mech, prior);
  if (!(setting.grid() == mech.grid())) throw UsageError("setting and mechanism use different grids");
  if (setting.space().size() != mech.outcome_count()) throw UsageError("setting and mechanism disagree on |X|");
  const int n = mech.bidders();
  const auto& domain = mech.domain();
  if (scope == RegretScope::grid && !domain.is_full()) {
    throw UsageError("mechanism covers only part of the grid; extend it to the full grid first");
  }
  constexpr std::size_t kMaxEvaluations = 400'000'000;
  RegretReport rep;

  // BIC
  for (int k = 0; k < n; ++k) {
    auto ir = interim_reports(mech, prior, k);
    auto truths = detail::scope_types(mech, prior, k, scope);
    if (truths.size() * domain.type_count(k) > kMaxEvaluations) throw CapacityError("BIC audit is too large");
    for (const auto& t : truths) {
      auto vals = setting.outcome_values(k, t);
      auto ti = domain.type_index(k, t);
      if (!ti) throw UsageError("mechanism does not cover true type " + detail::describe_profile(t));
      const double honest = ir.utility(*ti, vals);
      for (std::size_t r = 0; r < domain.type_count(k); ++r) {
        double gain = ir.utility(r, vals) - honest;
        if (gain > rep.bic_regret) {
          rep.bic_regret = gain;
          rep.bic_witness = {k, t, domain.type_at(k, r), gain};
        }
      }
    }
  }

  // DSIC and IR over every scope profile.
  std::vector<std::vector<std::vector<int>>> truths(static_cast<std::size_t>(n));
  std::size_t profiles = 1;
  for (int k = 0; k < n; ++k) {
    truths[static_cast<std::size_t>(k)] = detail::scope_types(mech, prior, k, scope);
    profiles *= truths[static_cast<std::size_t>(k)].size();
  }
  for (int k = 0; k < n; ++k) {
    const std::size_t reports = domain.type_count(k);
    if (profiles * reports > kMaxEvaluations) throw CapacityError("DSIC audit is too large");
    const auto& mine = truths[static_cast<std::size_t>(k)];
    std::vector<std::vector<double>> mine_vals;
    std::vector<std::size_t> mine_idx;
    for (const auto& t : mine) {
      auto v = setting.outcome_values(k, t);
      mine_vals.emplace_back(v.begin(), v.end());
      auto ti = domain.type_index(k, t);
      if (!ti) throw UsageError("mechanism does not cover true type " + detail::describe_profile(t));
      mine_idx.push_back(*ti);
    }
    // Enumerate the others' scope profiles.
    std::vector<std::size_t> pos(static_cast<std::size_t>(n), 0);
    std::vector<std::size_t> types(static_cast<std::size_t>(n), 0);
    std::vector<double> honest(mine.size());
    while (true) {
      for (int i = 0; i < n; ++i) {
        if (i == k) continue;
        auto ti = domain.type_index(i, truths[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]]);
        if (!ti) throw UsageError("mechanism does not cover a scope profile");
        types[static_cast<std::size_t>(i)] = *ti;
      }
      for (std::size_t t = 0; t < mine.size(); ++t) {
        types[static_cast<std::size_t>(k)] = mine_idx[t];
        const auto& row = mech.row(domain.compose(types));
        honest[t] = expected_value(row, mine_vals[t]) - expected_payment(row, k);
        if (honest[t] < rep.ir_slack) {
          std::vector<int> profile;
          for (int i = 0; i < n; ++i) {
            const auto& ty = i == k ? mine[t] : truths[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]];
            profile.insert(profile.end(), ty.begin(), ty.end());
          }
          rep.ir_slack = honest[t];
          rep.ir_witness = {k, profile, {}, honest[t]};
        }
      }
      for (std::size_t r = 0; r < reports; ++r) {
        types[static_cast<std::size_t>(k)] = r;
        const auto& row = mech.row(domain.compose(types));
        const double pay = expected_payment(row, k);
        for (std::size_t t = 0; t < mine.size(); ++t) {
          double gain = expected_value(row, mine_vals[t]) - pay - honest[t];
          if (gain > rep.dsic_regret) {
            std::vector<int> profile;
            for (int i = 0; i < n; ++i) {
              const auto& ty = i == k ? mine[t] : truths[static_cast<std::size_t>(i)][pos[static_cast<std::size_t>(i)]];
              profile.insert(profile.end(), ty.begin(), ty.end());
            }
            rep.dsic_regret = gain;
            rep.dsic_witness = {k, profile, domain.type_at(k, r), gain};
          }
        }
      }
      int i = n - 1;
      for (; i >= 0; --i) {
        if (i == k) continue;
        if (++pos[static_cast<std::size_t>(i)] < truths[static_cast<std::size_t>(i)].size()) break;
        pos[static_cast<std::size_t>(i)] = 0;
      }
      if (i < 0) break;
    }
  }
  return rep;
}

}  // namespace mechlearn
