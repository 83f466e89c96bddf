#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/lp_oracle.hpp"
#include "mechlearn/mechanism.hpp"
#include "mechlearn/sampling.hpp"
#include "mechlearn/valuation.hpp"

namespace mechlearn {

enum class LearnMode { bic, dsic, single_bidder_ic };

inline const char* to_string(LearnMode m) {
  switch (m) {
    case LearnMode::bic: return "bic";
    case LearnMode::dsic: return "dsic";
    case LearnMode::single_bidder_ic: return "single_bidder_ic";
  }
  return "?";
}

/// Single-bidder menu of priced lotteries (payments have length one).
struct Menu {
  std::vector<Lottery> entries;

  bool operator==(const Menu&) const = default;
};

/// A learned mechanism over real bids: bids are rounded down to the grid and
/// the inner table is consulted. In single_bidder_ic mode the bidder instead
/// picks her favourite menu entry at her real type.
struct LearnedMechanism {
  MechanismTable inner;
  LearnMode mode = LearnMode::bic;
  std::optional<Menu> menu;
};

/// Everything a learning run produces, for diagnostics and experiments.
struct LearnRun {
  LearnedMechanism learned;
  ProductPrior empirical;
  MechanismTable support_mechanism;
  double empirical_objective = 0.0;
};

namespace detail {

inline void check_samples(const SampleSet& samples, const Setting& setting) {
  if (samples.n != setting.bidders() || samples.m != setting.params()) {
    throw UsageError("samples have shape " + std::to_string(samples.n) + "x" + std::to_string(samples.m) +
                     ", setting expects " + std::to_string(setting.bidders()) + "x" + std::to_string(setting.params()));
  }
}

inline std::vector<int> round_bids(const GridSpec& grid, std::span<const double> bids) {
  std::vector<int> g(bids.size());
  for (std::size_t c = 0; c < bids.size(); ++c) g[c] = grid.round_down(bids[c]).index;
  return g;
}

}  // namespace detail

/// Round the samples, optimize exactly over the empirical product with BIC
/// constraints, extend off-support types by interim best response.
inline LearnRun learn_bic(const SampleSet& samples, const Setting& setting) {
  detail::check_samples(samples, setting);
  auto prior = empirical_prior(samples, setting.grid());
  auto sol = solve_optimal({prior, setting, IcMode::bic, 0.0});
  auto inner = extend_bic(sol.mechanism, prior, setting);
  return LearnRun{LearnedMechanism{std::move(inner), LearnMode::bic, std::nullopt}, std::move(prior),
                  std::move(sol.mechanism), sol.objective};
}

/// DSIC slack allowed in the oracle: two grid steps per parameter, scaled by L.
inline double dsic_oracle_slack(const Setting& setting) {
  return 2.0 * setting.params() * setting.model().lipschitz() * setting.grid().epsilon();
}

/// Round the samples, optimize over the empirical product with ex-post
/// slack 2mLeps, extend by the weak downward closure rule.
inline LearnRun learn_dsic(const SampleSet& samples, const Setting& setting) {
  detail::check_samples(samples, setting);
  auto closure = check_weakly_downward_closed(setting.space(), setting.model(), setting.grid());
  if (!closure.closed) {
    throw UsageError("outcome space is not weakly downward closed: outcome " +
                     std::to_string(closure.counterexample_outcome) + " has no witness for bidder " +
                     std::to_string(closure.counterexample_bidder));
  }
  auto prior = empirical_prior(samples, setting.grid());
  auto sol = solve_optimal({prior, setting, IcMode::dsic, dsic_oracle_slack(setting)});
  auto inner = extend_dsic(sol.mechanism, setting, closure);
  return LearnRun{LearnedMechanism{std::move(inner), LearnMode::dsic, std::nullopt}, std::move(prior),
                  std::move(sol.mechanism), sol.objective};
}

// ---------------------------------------------------------------------------
// Menus and the nudge

/// Index of the entry maximizing utility; near-ties (1e-12) go to the
/// higher expected payment, then to the lower index.
template <class Utility>
std::size_t select_entry(const Menu& menu, Utility&& utility) {
  constexpr double tol = 1e-12;
  std::size_t best = 0;
  double best_u = utility(menu.entries[0]);
  double best_p = expected_payment(menu.entries[0], 0);
  for (std::size_t e = 1; e < menu.entries.size(); ++e) {
    double u = utility(menu.entries[e]);
    double p = expected_payment(menu.entries[e], 0);
    if (u > best_u + tol || (u >= best_u - tol && p > best_p)) {
      best = e;
      best_u = u;
      best_p = p;
    }
  }
  return best;
}

inline int null_outcome(const Setting& setting) {
  auto w = compute_witnesses(setting.space(), setting.model(), setting.grid());
  if (w.null_outcome < 0) throw UsageError("outcome space has no outcome worth zero to everybody");
  return w.null_outcome;
}

/// Distinct lotteries of a single-bidder full-grid mechanism, after the
/// zero entry (null outcome at price 0), in order of first appearance.
inline Menu mechanism_to_menu(const MechanismTable& mech, const Setting& setting) {
  if (mech.bidders() != 1) throw UsageError("menus exist only for single-bidder mechanisms");
  if (!mech.domain().is_full()) throw UsageError("menu extraction needs a full-grid mechanism");
  Menu menu;
  menu.entries.push_back(certain(null_outcome(setting), 1));
  for (const auto& row : mech.rows()) {
    if (std::find(menu.entries.begin(), menu.entries.end(), row) == menu.entries.end()) menu.entries.push_back(row);
  }
  return menu;
}

/// Multiplies every payment by 1 - sqrt(eps).
inline Menu nudge_to_ic(const Menu& menu, double eps) {
  if (!(eps >= 0.0)) throw UsageError("nudge needs eps >= 0");
  if (eps > 1.0) throw UsageError("nudge needs eps <= 1 so that 1 - sqrt(eps) stays nonnegative");
  if (menu.entries.empty()) throw UsageError("nudge needs a nonempty menu");
  const double factor = 1.0 - std::sqrt(eps);
  Menu out = menu;
  for (auto& lottery : out.entries) {
    for (auto& e : lottery) {
      for (auto& p : e.payments) p *= factor;
    }
  }
  return out;
}

/// The full-grid single-bidder table in which every grid type takes its
/// selected menu entry.
inline MechanismTable menu_table(const Menu& menu, const Setting& setting) {
  if (setting.bidders() != 1) throw UsageError("menu tables are single-bidder");
  auto domain = ProfileDomain::full(1, setting.params(), setting.grid().levels());
  std::vector<Lottery> rows(domain.size());
  std::vector<int> type(static_cast<std::size_t>(setting.params()));
  for (std::size_t t = 0; t < domain.size(); ++t) {
    domain.type_into(0, t, type);
    auto vals = setting.outcome_values(0, type);
    rows[t] = menu.entries[select_entry(menu, [&](const Lottery& l) { return expected_value(l, vals) - expected_payment(l, 0); })];
  }
  return MechanismTable(setting.grid(), std::move(domain), setting.space().size(), std::move(rows));
}

/// Real-type incentive slack of a single-bidder mechanism that is exactly IC
/// on grid types: a real type sits within one grid step of its rounding.
inline double single_bidder_real_slack(const Setting& setting) {
  return setting.params() * setting.model().lipschitz() * setting.grid().epsilon();
}

/// learn_bic for one bidder, then the nudge with slack nudge_eps (default
/// m L eps, see single_bidder_real_slack).
inline LearnRun learn_single_bidder_ic(const SampleSet& samples, const Setting& setting,
                                       std::optional<double> nudge_eps = std::nullopt) {
  if (setting.bidders() != 1) throw UsageError("single-bidder learning needs n = 1");
  auto run = learn_bic(samples, setting);
  const double e = nudge_eps.value_or(single_bidder_real_slack(setting));
  if (!nudge_eps && e > 1.0) {
    throw UsageError("default nudge slack m L eps = " + format_double(e) + " exceeds 1; pass an explicit nudge eps");
  }
  auto menu = nudge_to_ic(mechanism_to_menu(run.learned.inner, setting), e);
  run.learned = LearnedMechanism{menu_table(menu, setting), LearnMode::single_bidder_ic, std::move(menu)};
  return run;
}

/// Lottery for real bids in [0, H]^(n m).
inline Lottery evaluate_on_reals(const LearnedMechanism& mech, const Setting& setting, std::span<const double> bids) {
  const auto& inner = mech.inner;
  if (bids.size() != static_cast<std::size_t>(inner.bidders() * inner.params())) {
    throw UsageError("bid vector has length " + std::to_string(bids.size()));
  }
  auto g = detail::round_bids(inner.grid(), bids);
  if (mech.mode == LearnMode::single_bidder_ic && mech.menu) {
    std::vector<double> vals(setting.space().size());
    for (std::size_t o = 0; o < vals.size(); ++o) vals[o] = setting.model().value(setting.space(), 0, bids, o);
    return mech.menu->entries[select_entry(*mech.menu, [&](const Lottery& l) { return expected_value(l, vals) - expected_payment(l, 0); })];
  }
  const Lottery* row = inner.find(g);
  if (!row) throw UsageError("learned mechanism does not cover the rounded bids");
  return *row;
}

/// Revenue of the learned mechanism on a finite true prior with real
/// support points, computed exactly: each point's probability times the
/// payments of the lottery at its rounded profile.
inline Rational revenue_on_true_prior(const LearnedMechanism& mech, const Setting& setting, const PriorConfig& truth) {
  if (!is_discrete(truth)) throw ConfigError("exact revenue needs a finite true prior");
  const int n = truth.n;
  std::vector<const PointMasses*> cells;
  for (const auto& c : truth.cells) cells.push_back(&std::get<PointMasses>(c));
  std::vector<std::size_t> pos(cells.size(), 0);
  std::vector<double> bids(cells.size());
  Rational total = 0;
  while (true) {
    Rational w = 1;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      w *= cells[c]->weights[pos[c]];
      bids[c] = cells[c]->points[pos[c]];
    }
    if (w != 0) {
      auto lottery = evaluate_on_reals(mech, setting, bids);
      Rational pay = 0;
      for (const auto& e : lottery) {
        Rational sum = 0;
        for (int i = 0; i < n; ++i) sum += exact_rational(e.payments[static_cast<std::size_t>(i)]);
        pay += exact_rational(e.probability) * sum;
      }
      total += w * pay;
    }
    std::size_t c = cells.size();
    bool done = true;
    while (c-- > 0) {
      if (++pos[c] < cells[c]->points.size()) {
        done = false;
        break;
      }
      pos[c] = 0;
    }
    if (done) break;
  }
  return total;
}

}  // namespace mechlearn
