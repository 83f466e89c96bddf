#pragma once

#include <algorithm>
#include <optional>
#include <ostream>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/mechanism.hpp"
#include "mechlearn/outcome.hpp"
#include "mechlearn/rational.hpp"
#include "mechlearn/sampling.hpp"

namespace mechlearn {

/// Ironed virtual values of one discrete marginal, from the upper concave
/// hull of its revenue curve in quantile space. All exact.
struct IronedVirtuals {
  DiscreteMarginal marginal;
  /// Indexed by support position (increasing value).
  std::vector<Rational> quantile;  // Pr[v >= w_k]
  std::vector<Rational> revenue;   // w_k * quantile_k
  std::vector<Rational> hull;      // hull height at quantile_k
  std::vector<Rational> phi;       // hull slope on (quantile_{k+1}, quantile_k]

  const Rational& phi_at(GridValue g) const {
    auto pos = marginal.position(g);
    if (!pos) throw UsageError("value is not in the marginal's support; snap it first");
    return phi[*pos];
  }
};

inline IronedVirtuals iron(const DiscreteMarginal& marginal) {
  const auto& support = marginal.support();
  const std::size_t K = support.size();
  if (K == 0) throw UsageError("cannot iron an empty marginal");
  IronedVirtuals iv{marginal, std::vector<Rational>(K), std::vector<Rational>(K), std::vector<Rational>(K),
                    std::vector<Rational>(K)};
  Rational tail = 0;
  for (std::size_t k = K; k-- > 0;) {
    tail += marginal.mass_at(k);
    iv.quantile[k] = tail;
    iv.revenue[k] = marginal.grid().exact_value(support[k]) * tail;
  }
  // Points ordered by increasing quantile: origin, then k = K-1 .. 0.
  std::vector<Rational> qs{Rational(0)};
  std::vector<Rational> rs{Rational(0)};
  for (std::size_t k = K; k-- > 0;) {
    qs.push_back(iv.quantile[k]);
    rs.push_back(iv.revenue[k]);
  }
  // Upper hull by a monotone chain scan.
  std::vector<std::size_t> h;
  for (std::size_t i = 0; i < qs.size(); ++i) {
    while (h.size() >= 2) {
      std::size_t a = h[h.size() - 2];
      std::size_t b = h.back();
      // Drop b when it lies on or below the chord from a to i.
      if ((rs[b] - rs[a]) * (qs[i] - qs[a]) <= (rs[i] - rs[a]) * (qs[b] - qs[a])) {
        h.pop_back();
      } else {
        break;
      }
    }
    h.push_back(i);
  }
  // Evaluate hull heights and slopes at every point.
  std::size_t edge = 0;
  for (std::size_t i = 1; i < qs.size(); ++i) {
    while (qs[h[edge + 1]] < qs[i]) ++edge;
    const std::size_t a = h[edge];
    const std::size_t b = h[edge + 1];
    Rational slope = (rs[b] - rs[a]) / (qs[b] - qs[a]);
    std::size_t k = K - i;
    iv.phi[k] = slope;
    iv.hull[k] = rs[a] + slope * (qs[i] - qs[a]);
  }
  return iv;
}

/// Writes value, quantile, revenue-curve point, hull point and phi per support point.
inline void write_virtuals_csv(std::ostream& os, const IronedVirtuals& iv) {
  os << "value,quantile,revenue,hull,phi\n";
  for (std::size_t k = 0; k < iv.phi.size(); ++k) {
    os << format_double(iv.marginal.grid().value(iv.marginal.support()[k])) << ',' << format_rational(iv.quantile[k])
       << ',' << format_rational(iv.revenue[k]) << ',' << format_rational(iv.hull[k]) << ','
       << format_rational(iv.phi[k]) << '\n';
  }
}

/// The largest support point not above v, or nothing when v is below the
/// whole support (the bidder then does not participate).
inline std::optional<GridValue> snap_to_support(double v, const DiscreteMarginal& marginal) {
  GridValue g = marginal.grid().round_down(v);
  const auto& s = marginal.support();
  auto it = std::upper_bound(s.begin(), s.end(), g.index);
  if (it == s.begin()) return std::nullopt;
  return GridValue{*(it - 1)};
}

struct PricedOutcome {
  int outcome = 0;
  std::vector<double> payments;
};

/// Virtual-welfare maximization over a single-parameter space with
/// threshold payments.
class MyersonAuction {
 public:
  /// With allocate_on_ties, among virtual-welfare maximizers the outcome
  /// allocating the most total quantity wins; otherwise the least. Remaining
  /// ties go to the lowest outcome index. The order never depends on bids.
  MyersonAuction(std::vector<IronedVirtuals> virtuals, OutcomeSpace space, bool allocate_on_ties = true)
      : virtuals_(std::move(virtuals)), space_(std::move(space)), allocate_on_ties_(allocate_on_ties) {
    if (space_.columns() != 1) throw UsageError("Myerson auctions need a single-parameter outcome space");
    if (static_cast<int>(virtuals_.size()) != space_.bidders()) throw UsageError("one marginal per bidder is required");
    for (std::size_t o = 0; o < space_.size(); ++o) {
      Rational total = 0;
      std::vector<Rational> x;
      for (int i = 0; i < space_.bidders(); ++i) {
        x.push_back(exact_rational(space_.allocation(o, i, 0)));
        total += x.back();
      }
      alloc_.push_back(std::move(x));
      total_.push_back(total);
    }
    order_.resize(space_.size());
    for (std::size_t o = 0; o < order_.size(); ++o) order_[o] = o;
    std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
      return allocate_on_ties_ ? total_[a] > total_[b] : total_[a] < total_[b];
    });
  }

  const std::vector<IronedVirtuals>& virtuals() const { return virtuals_; }
  const OutcomeSpace& space() const { return space_; }
  int bidders() const { return space_.bidders(); }

  /// Allocation for bids given as support points, or nothing for a
  /// non-participant (who is never allocated).
  std::size_t allocate(const std::vector<std::optional<GridValue>>& bids) const {
    std::vector<const Rational*> phi(bids.size(), nullptr);
    for (std::size_t i = 0; i < bids.size(); ++i) {
      if (bids[i]) phi[i] = &virtuals_[i].phi_at(*bids[i]);
    }
    std::optional<std::size_t> best;
    Rational best_w;
    for (std::size_t o : order_) {
      Rational w = 0;
      bool ok = true;
      for (std::size_t i = 0; i < bids.size(); ++i) {
        if (alloc_[o][i] == 0) continue;
        if (!phi[i]) {
          ok = false;
          break;
        }
        w += alloc_[o][i] * *phi[i];
      }
      if (!ok) continue;
      if (!best || w > best_w) {
        best = o;
        best_w = w;
      }
    }
    if (!best) throw UsageError("outcome space has no outcome excluding the non-participating bidders");
    return *best;
  }

  PricedOutcome run(const std::vector<std::optional<GridValue>>& bids) const {
    if (static_cast<int>(bids.size()) != bidders()) throw UsageError("need one bid per bidder");
    for (std::size_t i = 0; i < bids.size(); ++i) {
      if (bids[i] && !virtuals_[i].marginal.contains(*bids[i])) {
        throw UsageError("bid of bidder " + std::to_string(i) + " is off its support; use snap_to_support");
      }
    }
    PricedOutcome out;
    out.outcome = static_cast<int>(allocate(bids));
    out.payments.assign(bids.size(), 0.0);
    // p_i = sum over support steps l up to the bid of w_l (x(w_l) - x(w_{l-1})),
    // where x below the support is 0.
    auto ladder = bids;
    for (std::size_t i = 0; i < bids.size(); ++i) {
      if (!bids[i]) continue;
      const auto& support = virtuals_[i].marginal.support();
      const auto& grid = virtuals_[i].marginal.grid();
      double prev = 0.0;
      double pay = 0.0;
      for (int g : support) {
        if (g > bids[i]->index) break;
        ladder[i] = GridValue{g};
        double x = space_.allocation(allocate(ladder), static_cast<int>(i), 0);
        pay += grid.value(g) * (x - prev);
        prev = x;
      }
      out.payments[i] = pay;
      ladder[i] = bids[i];
    }
    return out;
  }

  /// Real bids: snap each to its bidder's support first.
  PricedOutcome run_real(std::span<const double> bids) const {
    std::vector<std::optional<GridValue>> snapped;
    for (std::size_t i = 0; i < bids.size(); ++i) snapped.push_back(snap_to_support(bids[i], virtuals_[i].marginal));
    return run(snapped);
  }

 private:
  std::vector<IronedVirtuals> virtuals_;
  OutcomeSpace space_;
  bool allocate_on_ties_;
  std::vector<std::vector<Rational>> alloc_;
  std::vector<Rational> total_;
  std::vector<std::size_t> order_;
};

inline MyersonAuction myerson_auction(const ProductPrior& prior, OutcomeSpace space, bool allocate_on_ties = true) {
  if (prior.params() != 1) throw UsageError("Myerson auctions need m = 1");
  std::vector<IronedVirtuals> v;
  for (int i = 0; i < prior.bidders(); ++i) v.push_back(iron(prior.marginal(i, 0)));
  return MyersonAuction(std::move(v), std::move(space), allocate_on_ties);
}

/// The auction as a table over a domain: the prior support (on_grid =
/// false) or every grid profile, with grid bids snapped to the supports.
inline MechanismTable myerson_table(const MyersonAuction& auction, const GridSpec& grid, bool on_grid) {
  const int n = auction.bidders();
  ProfileDomain domain = on_grid ? ProfileDomain::full(n, 1, grid.levels()) : [&] {
    std::vector<std::vector<int>> allowed;
    for (const auto& v : auction.virtuals()) allowed.push_back(v.marginal.support());
    return ProfileDomain::product(n, 1, grid.levels(), std::move(allowed));
  }();
  std::vector<Lottery> rows(domain.size());
  std::vector<int> profile(static_cast<std::size_t>(n));
  std::vector<double> bids(static_cast<std::size_t>(n));
  for (std::size_t idx = 0; idx < domain.size(); ++idx) {
    domain.profile_into(idx, profile);
    for (int i = 0; i < n; ++i) bids[static_cast<std::size_t>(i)] = grid.value(profile[static_cast<std::size_t>(i)]);
    auto po = auction.run_real(bids);
    rows[idx] = {LotteryEntry{1.0, po.outcome, po.payments}};
  }
  return MechanismTable(grid, std::move(domain), auction.space().size(), std::move(rows));
}

/// Round every sample down, iron each empirical marginal, and tabulate the
/// resulting auction over the full grid. Real bids go through the grid
/// (round down, then snap), which lands on the same support point as
/// snapping the real bid directly, so the result is exactly DSIC and IR.
inline MechanismTable learn_single_parameter(const SampleSet& samples, const GridSpec& grid, const OutcomeSpace& space,
                                             bool allocate_on_ties = true) {
  if (samples.m != 1) throw UsageError("single-parameter learning needs m = 1");
  if (space.kind() != OutcomeKind::single_parameter) throw UsageError("single-parameter learning needs a single_parameter space");
  if (space.bidders() != samples.n) throw UsageError("space and samples disagree on n");
  auto prior = empirical_prior(samples, grid);
  return myerson_table(myerson_auction(prior, space, allocate_on_ties), grid, true);
}

}  // namespace mechlearn
