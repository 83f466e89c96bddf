#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/lp/exact_simplex.hpp"
#include "mechlearn/lp/simplex.hpp"
#include "mechlearn/mechanism.hpp"
#include "mechlearn/valuation.hpp"

namespace mechlearn {

enum class IcMode { bic, dsic };

inline const char* to_string(IcMode m) { return m == IcMode::bic ? "bic" : "dsic"; }

/// Revenue maximization over the support of a finite product prior. In dsic
/// mode ex-post deviations may gain at most eta.
struct OracleProblem {
  const ProductPrior& prior;
  const Setting& setting;
  IcMode mode = IcMode::bic;
  double eta = 0.0;
};

enum class SolverStatus { optimal };

struct LpSolution {
  MechanismTable mechanism;
  double objective = 0.0;
  SolverStatus status = SolverStatus::optimal;
  double dual_objective = 0.0;
  std::size_t iterations = 0;
};

namespace detail {

inline void check_problem(const OracleProblem& p) {
  if (!(p.prior.grid() == p.setting.grid())) throw UsageError("prior and setting use different grids");
  if (p.prior.bidders() != p.setting.bidders() || p.prior.params() != p.setting.params()) {
    throw UsageError("prior and setting have different shapes");
  }
  if (!(p.eta >= 0.0) || !std::isfinite(p.eta)) throw UsageError("DSIC slack must be finite and nonnegative");
}

/// Indexing shared by both LP formulations.
struct SupportLayout {
  const ProfileDomain& domain;
  int n;
  std::size_t outcomes;
  std::vector<std::vector<std::vector<int>>> types;  // types[k][t] = grid type
  std::vector<std::vector<double>> weights;          // weights[k][t]
  std::vector<std::vector<Rational>> exact_weights;

  explicit SupportLayout(const OracleProblem& p, bool exact)
      : domain(p.prior.support_domain()), n(p.prior.bidders()), outcomes(p.setting.space().size()) {
    for (int k = 0; k < n; ++k) {
      std::vector<std::vector<int>> tk;
      for (std::size_t t = 0; t < domain.type_count(k); ++t) tk.push_back(domain.type_at(k, t));
      types.push_back(std::move(tk));
      weights.push_back(p.prior.type_weights_d(k));
      if (exact) exact_weights.push_back(p.prior.type_weights(k));
    }
  }

  std::size_t profiles() const { return domain.size(); }
};

/// Calls f(profile index, type indices) for every support profile.
template <class F>
void for_each_profile(const SupportLayout& s, F&& f) {
  std::vector<std::size_t> ti(static_cast<std::size_t>(s.n));
  for (std::size_t p = 0; p < s.profiles(); ++p) {
    s.domain.split(p, ti);
    f(p, ti);
  }
}

}  // namespace detail

/// Builds the profile-form LP. One outcome o0 per profile is eliminated
/// through the simplex constraint, so every row reads <= with a
/// nonnegative right-hand side and the slack basis is feasible.
///   x[p][o] (o != o0)        lottery probabilities
///   q+[p][i], q-[p][i]       payment of bidder i is q+ - q-
class OracleLp {
 public:
  static constexpr std::size_t kMaxVariables = 500'000;

  explicit OracleLp(const OracleProblem& problem) : problem_(problem), layout_(problem, false) {
    detail::check_problem(problem);
    const auto& setting = problem.setting;
    const std::size_t P = layout_.profiles();
    const std::size_t O = layout_.outcomes;
    const auto n = static_cast<std::size_t>(layout_.n);
    {
      double vars = static_cast<double>(P) * static_cast<double>(O + 2 * n);
      if (vars > kMaxVariables) {
        throw CapacityError("oracle LP needs " + format_double(vars) + " variables (budget " +
                            std::to_string(kMaxVariables) + "); use smaller supports");
      }
    }
    o0_ = pick_reference_outcome();
    xcols_ = P * (O - 1);
    lp_.cols = xcols_ + 2 * P * n;
    lp_.c.assign(lp_.cols, 0.0);
    lp_.col_names.resize(lp_.cols);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t o = 0; o < O; ++o) {
        if (o != o0_) lp_.col_names[x(p, o)] = "x_" + std::to_string(p) + "_" + std::to_string(o);
      }
      for (std::size_t i = 0; i < n; ++i) {
        lp_.col_names[pay_plus(p, i)] = "qp_" + std::to_string(p) + "_" + std::to_string(i);
        lp_.col_names[pay_minus(p, i)] = "qm_" + std::to_string(p) + "_" + std::to_string(i);
      }
    }
    // Objective: expected total payment.
    detail::for_each_profile(layout_, [&](std::size_t p, const std::vector<std::size_t>& ti) {
      double w = 1.0;
      for (std::size_t k = 0; k < n; ++k) w *= layout_.weights[k][ti[k]];
      for (std::size_t i = 0; i < n; ++i) {
        lp_.c[pay_plus(p, i)] = w;
        lp_.c[pay_minus(p, i)] = -w;
      }
    });
    // Probabilities of the explicit outcomes sum to at most one.
    for (std::size_t p = 0; p < P; ++p) {
      std::vector<std::pair<std::size_t, double>> row;
      for (std::size_t o = 0; o < O; ++o) {
        if (o != o0_) row.emplace_back(x(p, o), 1.0);
      }
      lp_.add_row(std::move(row), 1.0, "simplex_" + std::to_string(p));
    }
    // IR: q_k - sum_o x_o (v_o - v_o0) <= v_o0.
    detail::for_each_profile(layout_, [&](std::size_t p, const std::vector<std::size_t>& ti) {
      for (std::size_t k = 0; k < n; ++k) {
        auto vals = setting.outcome_values(static_cast<int>(k), layout_.types[k][ti[k]]);
        std::vector<std::pair<std::size_t, double>> row{{pay_plus(p, k), 1.0}, {pay_minus(p, k), -1.0}};
        for (std::size_t o = 0; o < O; ++o) {
          if (o != o0_ && vals[o] != vals[o0_]) row.emplace_back(x(p, o), -(vals[o] - vals[o0_]));
        }
        lp_.add_row(std::move(row), vals[o0_], "ir_" + std::to_string(p) + "_" + std::to_string(k));
      }
    });
    if (problem.mode == IcMode::bic) {
      add_bic_rows();
    } else {
      add_dsic_rows();
    }
  }

  const lp::Problem& problem() const { return lp_; }
  std::size_t reference_outcome() const { return o0_; }

  LpSolution solve() const {
    auto res = lp::solve_auto(lp_);
    if (res.status != lp::Status::optimal) {
      throw InternalError("oracle LP reported unbounded; IR rows should bound every payment");
    }
    const double pv = lp::primal_violation(lp_, res.x);
    if (pv > 1e-8) throw InternalError("oracle LP solution violates a constraint by " + format_double(pv));
    const double dv = lp::dual_violation(lp_, res.y);
    if (dv > 1e-7) throw InternalError("oracle LP dual certificate is infeasible by " + format_double(dv));
    if (std::abs(res.objective - res.dual_objective) > 1e-7 * (1.0 + std::abs(res.objective))) {
      throw InternalError("oracle LP duality gap " + format_double(res.objective - res.dual_objective));
    }
    return LpSolution{to_mechanism(res.x), res.objective, SolverStatus::optimal, res.dual_objective, res.iterations};
  }

 private:
  std::size_t x(std::size_t p, std::size_t o) const {
    return p * (layout_.outcomes - 1) + (o < o0_ ? o : o - 1);
  }
  std::size_t pay_plus(std::size_t p, std::size_t i) const {
    return xcols_ + p * static_cast<std::size_t>(layout_.n) + i;
  }
  std::size_t pay_minus(std::size_t p, std::size_t i) const {
    return xcols_ + (layout_.profiles() + p) * static_cast<std::size_t>(layout_.n) + i;
  }

  /// The first outcome worth nothing to every bidder at every support type,
  /// else outcome 0.
  std::size_t pick_reference_outcome() const {
    for (std::size_t o = 0; o < layout_.outcomes; ++o) {
      bool zero = true;
      for (int k = 0; k < layout_.n && zero; ++k) {
        for (const auto& t : layout_.types[static_cast<std::size_t>(k)]) {
          if (problem_.setting.outcome_values(k, t)[o] != 0.0) {
            zero = false;
            break;
          }
        }
      }
      if (zero) return o;
    }
    return 0;
  }

  /// Adds the coefficients of (utility of type `truth` at profile p) * sign.
  void add_utility(std::vector<double>& dense, std::size_t p, std::size_t k, std::span<const double> vals,
                   double sign) const {
    for (std::size_t o = 0; o < layout_.outcomes; ++o) {
      if (o != o0_) dense[x(p, o)] += sign * (vals[o] - vals[o0_]);
    }
    dense[pay_plus(p, k)] -= sign;
    dense[pay_minus(p, k)] += sign;
  }

  static std::vector<std::pair<std::size_t, double>> sparse(const std::vector<double>& dense,
                                                             const std::vector<std::size_t>& touched) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t j : touched) {
      if (dense[j] != 0.0) row.emplace_back(j, dense[j]);
    }
    return row;
  }

  std::vector<std::size_t> profile_columns(std::size_t p, std::size_t k) const {
    std::vector<std::size_t> cols;
    for (std::size_t o = 0; o < layout_.outcomes; ++o) {
      if (o != o0_) cols.push_back(x(p, o));
    }
    cols.push_back(pay_plus(p, k));
    cols.push_back(pay_minus(p, k));
    return cols;
  }

  // For every bidder k and support types t != r:
  //   sum_{v-k} w(v-k) [u_t(row(r, v-k)) - u_t(row(t, v-k))] <= 0.
  void add_bic_rows() {
    const auto n = static_cast<std::size_t>(layout_.n);
    std::vector<double> dense(lp_.cols, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t T = layout_.types[k].size();
      // Others' profiles: iterate type indices of everyone but k.
      std::vector<std::pair<double, std::vector<std::size_t>>> others;
      {
        std::vector<std::size_t> ti(n, 0);
        while (true) {
          double w = 1.0;
          for (std::size_t i = 0; i < n; ++i) {
            if (i != k) w *= layout_.weights[i][ti[i]];
          }
          others.emplace_back(w, ti);
          std::size_t i = n;
          bool done = true;
          while (i-- > 0) {
            if (i == k) continue;
            if (++ti[i] < layout_.types[i].size()) {
              done = false;
              break;
            }
            ti[i] = 0;
          }
          if (done) break;
        }
      }
      for (std::size_t t = 0; t < T; ++t) {
        auto vals = problem_.setting.outcome_values(static_cast<int>(k), layout_.types[k][t]);
        for (std::size_t r = 0; r < T; ++r) {
          if (r == t) continue;
          std::vector<std::size_t> touched;
          for (auto& [w, ti] : others) {
            ti[k] = r;
            std::size_t pr = layout_.domain.compose(ti);
            ti[k] = t;
            std::size_t pt = layout_.domain.compose(ti);
            add_utility(dense, pr, k, vals, w);
            add_utility(dense, pt, k, vals, -w);
            for (auto c : profile_columns(pr, k)) touched.push_back(c);
            for (auto c : profile_columns(pt, k)) touched.push_back(c);
          }
          std::sort(touched.begin(), touched.end());
          touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
          lp_.add_row(sparse(dense, touched), 0.0,
                      "bic_" + std::to_string(k) + "_" + std::to_string(t) + "_" + std::to_string(r));
          for (std::size_t j : touched) dense[j] = 0.0;
        }
      }
    }
  }

  // For every support profile, bidder k and support report r != t_k:
  //   u_{t_k}(row(r, v-k)) - u_{t_k}(row(v)) <= eta.
  void add_dsic_rows() {
    const auto n = static_cast<std::size_t>(layout_.n);
    std::vector<double> dense(lp_.cols, 0.0);
    detail::for_each_profile(layout_, [&](std::size_t p, const std::vector<std::size_t>& ti_const) {
      auto ti = ti_const;
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = ti_const[k];
        auto vals = problem_.setting.outcome_values(static_cast<int>(k), layout_.types[k][t]);
        for (std::size_t r = 0; r < layout_.types[k].size(); ++r) {
          if (r == t) continue;
          ti[k] = r;
          std::size_t pr = layout_.domain.compose(ti);
          ti[k] = t;
          add_utility(dense, pr, k, vals, 1.0);
          add_utility(dense, p, k, vals, -1.0);
          auto touched = profile_columns(pr, k);
          for (auto c : profile_columns(p, k)) touched.push_back(c);
          std::sort(touched.begin(), touched.end());
          lp_.add_row(sparse(dense, touched), problem_.eta,
                      "dsic_" + std::to_string(p) + "_" + std::to_string(k) + "_" + std::to_string(r));
          for (std::size_t j : touched) dense[j] = 0.0;
        }
      }
    });
  }

  MechanismTable to_mechanism(const std::vector<double>& sol) const {
    const std::size_t P = layout_.profiles();
    const std::size_t O = layout_.outcomes;
    const auto n = static_cast<std::size_t>(layout_.n);
    constexpr double kDrop = 1e-12;
    std::vector<Lottery> rows(P);
    for (std::size_t p = 0; p < P; ++p) {
      std::vector<double> pay(n);
      for (std::size_t i = 0; i < n; ++i) pay[i] = sol[pay_plus(p, i)] - sol[pay_minus(p, i)];
      double rest = 1.0;
      for (std::size_t o = 0; o < O; ++o) {
        if (o != o0_) rest -= sol[x(p, o)];
      }
      for (std::size_t o = 0; o < O; ++o) {
        double pr = o == o0_ ? rest : sol[x(p, o)];
        if (pr > kDrop) rows[p].push_back(LotteryEntry{pr, static_cast<int>(o), pay});
      }
      if (rows[p].empty()) rows[p].push_back(LotteryEntry{1.0, static_cast<int>(o0_), pay});
    }
    return MechanismTable(problem_.setting.grid(), layout_.domain, O, std::move(rows));
  }

  const OracleProblem& problem_;
  detail::SupportLayout layout_;
  std::size_t o0_ = 0;
  std::size_t xcols_ = 0;
  lp::Problem lp_;
};

/// Exactly optimal mechanism over the prior's support.
inline LpSolution solve_optimal(const OracleProblem& problem, std::ostream* lp_dump = nullptr) {
  OracleLp lp(problem);
  if (lp_dump) lp::write_lp(*lp_dump, lp.problem());
  return lp.solve();
}

/// The same optimization, formulated independently (all outcomes explicit,
/// equality rows as inequality pairs) and solved in exact rationals.
inline Rational brute_force_optimal(const OracleProblem& problem) {
  detail::check_problem(problem);
  detail::SupportLayout s(problem, true);
  const std::size_t P = s.profiles();
  const std::size_t O = s.outcomes;
  const auto n = static_cast<std::size_t>(s.n);
  if (P > 16 || O > 16) {
    throw UsageError("brute_force_optimal handles at most 16 profiles and 16 outcomes (got " + std::to_string(P) +
                     " and " + std::to_string(O) + ")");
  }
  const std::size_t X = P * O;
  const std::size_t cols = X + 2 * P * n;
  auto xi = [&](std::size_t p, std::size_t o) { return p * O + o; };
  auto qp = [&](std::size_t p, std::size_t i) { return X + p * n + i; };
  auto qm = [&](std::size_t p, std::size_t i) { return X + P * n + p * n + i; };
  lp::ExactProblem lp;
  lp.c.assign(cols, Rational(0));
  auto new_row = [&]() -> std::vector<Rational>& {
    lp.a.emplace_back(cols, Rational(0));
    return lp.a.back();
  };
  auto value = [&](std::size_t k, std::size_t t, std::size_t o) {
    return exact_rational(problem.setting.outcome_values(static_cast<int>(k), s.types[k][t])[o]);
  };
  std::vector<std::vector<std::size_t>> split(P, std::vector<std::size_t>(n));
  for (std::size_t p = 0; p < P; ++p) s.domain.split(p, split[p]);
  for (std::size_t p = 0; p < P; ++p) {
    Rational w = 1;
    for (std::size_t k = 0; k < n; ++k) w *= s.exact_weights[k][split[p][k]];
    for (std::size_t i = 0; i < n; ++i) {
      lp.c[qp(p, i)] = w;
      lp.c[qm(p, i)] = -w;
    }
    // Probabilities sum to one, as a pair of inequalities.
    for (int sign : {1, -1}) {
      auto& row = new_row();
      for (std::size_t o = 0; o < O; ++o) row[xi(p, o)] = sign;
      lp.b.push_back(sign);
    }
    // IR: sum_o x v - q <= ... written as q - sum_o x v <= 0.
    for (std::size_t k = 0; k < n; ++k) {
      auto& row = new_row();
      for (std::size_t o = 0; o < O; ++o) row[xi(p, o)] = -value(k, split[p][k], o);
      row[qp(p, k)] = 1;
      row[qm(p, k)] = -1;
      lp.b.push_back(0);
    }
  }
  auto add_util = [&](std::vector<Rational>& row, std::size_t p, std::size_t k, std::size_t t, const Rational& sign) {
    for (std::size_t o = 0; o < O; ++o) row[xi(p, o)] += sign * value(k, t, o);
    row[qp(p, k)] -= sign;
    row[qm(p, k)] += sign;
  };
  if (problem.mode == IcMode::bic) {
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t T = s.types[k].size();
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t r = 0; r < T; ++r) {
          if (r == t) continue;
          auto& row = new_row();
          for (std::size_t p = 0; p < P; ++p) {
            if (split[p][k] != t) continue;
            Rational w = 1;
            for (std::size_t i = 0; i < n; ++i) {
              if (i != k) w *= s.exact_weights[i][split[p][i]];
            }
            auto dev = split[p];
            dev[k] = r;
            add_util(row, s.domain.compose(dev), k, t, w);
            add_util(row, p, k, t, -w);
          }
          lp.b.push_back(0);
        }
      }
    }
  } else {
    const Rational eta = exact_rational(problem.eta);
    for (std::size_t p = 0; p < P; ++p) {
      for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t r = 0; r < s.types[k].size(); ++r) {
          if (r == split[p][k]) continue;
          auto& row = new_row();
          auto dev = split[p];
          dev[k] = r;
          add_util(row, s.domain.compose(dev), k, split[p][k], Rational(1));
          add_util(row, p, k, split[p][k], Rational(-1));
          lp.b.push_back(eta);
        }
      }
    }
  }
  auto res = lp::solve_exact(lp);
  if (res.status != lp::ExactStatus::optimal) throw InternalError("exact oracle LP is not optimal");
  return res.objective;
}

// ---------------------------------------------------------------------------
// Extensions from the support to the whole grid

namespace detail {

/// Iterates over every grid type of one bidder (lexicographic).
inline std::vector<std::vector<int>> all_grid_types(int m, int levels) {
  auto full = ProfileDomain::full(1, m, levels);
  std::vector<std::vector<int>> out;
  for (std::size_t t = 0; t < full.type_count(0); ++t) out.push_back(full.type_at(0, t));
  return out;
}

}  // namespace detail

/// Extends a BIC mechanism on the product of supports to the whole grid.
/// Each bidder with an off-support type is treated as if she reported the
/// in-support type maximizing her interim utility (ties to the
/// lexicographically smallest). If even that utility is negative she opts
/// out: with one bidder she gets the zero-priced null outcome, with several
/// her value is removed from the outcome and her payment zeroed, leaving the
/// others untouched. Without the needed witness outcome she keeps the best
/// report.
inline MechanismTable extend_bic(const MechanismTable& mech, const ProductPrior& prior, const Setting& setting) {
  detail::check_compatible(mech, prior);
  if (!(mech.domain() == prior.support_domain())) throw UsageError("extend_bic expects a mechanism over the prior support");
  const int n = mech.bidders();
  const int m = mech.params();
  const auto& dom = mech.domain();
  const int levels = mech.grid().levels();
  auto grid_types = detail::all_grid_types(m, levels);
  std::optional<OutcomeWitnesses> witnesses;
  auto need_witnesses = [&]() -> const OutcomeWitnesses& {
    if (!witnesses) witnesses = compute_witnesses(setting.space(), setting.model(), setting.grid());
    return *witnesses;
  };

  // replacement[k][g] = support type index; opt_out[k][g].
  std::vector<std::vector<std::size_t>> replacement(static_cast<std::size_t>(n));
  std::vector<std::vector<char>> opt_out(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    auto ir = interim_reports(mech, prior, k);
    for (const auto& g : grid_types) {
      if (auto own = dom.type_index(k, g)) {
        replacement[static_cast<std::size_t>(k)].push_back(*own);
        opt_out[static_cast<std::size_t>(k)].push_back(0);
        continue;
      }
      auto vals = setting.outcome_values(k, g);
      std::size_t best = 0;
      double best_u = ir.utility(0, vals);
      for (std::size_t r = 1; r < dom.type_count(k); ++r) {
        double u = ir.utility(r, vals);
        if (u > best_u) {
          best_u = u;
          best = r;
        }
      }
      replacement[static_cast<std::size_t>(k)].push_back(best);
      bool out = false;
      if (best_u < 0.0) {
        const auto& w = need_witnesses();
        out = n == 1 ? w.null_outcome >= 0 : !w.remove.empty() && std::all_of(w.remove.begin(), w.remove.end(), [&](const auto& r) { return r[static_cast<std::size_t>(k)] >= 0; });
      }
      opt_out[static_cast<std::size_t>(k)].push_back(out ? 1 : 0);
    }
  }

  auto full = ProfileDomain::full(n, m, levels);
  std::vector<Lottery> rows(full.size());
  std::vector<std::size_t> gt(static_cast<std::size_t>(n));
  std::vector<std::size_t> st(static_cast<std::size_t>(n));
  for (std::size_t idx = 0; idx < full.size(); ++idx) {
    full.split(idx, gt);
    bool any_out = false;
    for (int k = 0; k < n; ++k) {
      st[static_cast<std::size_t>(k)] = replacement[static_cast<std::size_t>(k)][gt[static_cast<std::size_t>(k)]];
      any_out = any_out || opt_out[static_cast<std::size_t>(k)][gt[static_cast<std::size_t>(k)]];
    }
    Lottery row = mech.row(dom.compose(st));
    if (any_out) {
      const auto& w = need_witnesses();
      if (n == 1) {
        row = certain(w.null_outcome, 1);
      } else {
        for (int k = 0; k < n; ++k) {
          if (!opt_out[static_cast<std::size_t>(k)][gt[static_cast<std::size_t>(k)]]) continue;
          for (auto& e : row) {
            e.outcome = w.remove[static_cast<std::size_t>(e.outcome)][static_cast<std::size_t>(k)];
            e.payments[static_cast<std::size_t>(k)] = 0.0;
          }
        }
      }
    }
    rows[idx] = std::move(row);
  }
  return MechanismTable(mech.grid(), std::move(full), mech.outcome_count(), std::move(rows));
}

/// Extends a mechanism on the product of supports to the whole grid using
/// weak downward closure. With exactly one off-support bidder k, k is
/// treated as reporting her best in-support type against the others' actual
/// reports (ties lexicographic), the outcome is replaced by its witness that
/// keeps k's value and zeroes everyone else's, and only k pays. If that best
/// utility is negative, k opts out to the null outcome. With two or more
/// off-support bidders the null outcome is chosen and nobody pays.
inline MechanismTable extend_dsic(const MechanismTable& mech, const Setting& setting, const DownwardClosure& closure) {
  if (!closure.closed) {
    throw UsageError("extend_dsic needs a weakly downward closed outcome space; run check_weakly_downward_closed first");
  }
  if (!(mech.grid() == setting.grid())) throw UsageError("mechanism and setting use different grids");
  const auto& w = closure.witnesses;
  const int n = mech.bidders();
  const int m = mech.params();
  const auto& dom = mech.domain();
  const int levels = mech.grid().levels();
  auto grid_types = detail::all_grid_types(m, levels);
  std::vector<std::vector<std::optional<std::size_t>>> support_index(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    for (const auto& g : grid_types) support_index[static_cast<std::size_t>(k)].push_back(dom.type_index(k, g));
  }
  auto full = ProfileDomain::full(n, m, levels);
  std::vector<Lottery> rows(full.size());
  std::vector<std::size_t> gt(static_cast<std::size_t>(n));
  std::vector<std::size_t> st(static_cast<std::size_t>(n));
  for (std::size_t idx = 0; idx < full.size(); ++idx) {
    full.split(idx, gt);
    int off = -1;
    int off_count = 0;
    for (int k = 0; k < n; ++k) {
      auto s = support_index[static_cast<std::size_t>(k)][gt[static_cast<std::size_t>(k)]];
      if (s) {
        st[static_cast<std::size_t>(k)] = *s;
      } else {
        off = k;
        ++off_count;
      }
    }
    if (off_count == 0) {
      rows[idx] = mech.row(dom.compose(st));
      continue;
    }
    if (off_count >= 2) {
      if (w.null_outcome < 0) throw InternalError("downward closed space without a null outcome");
      rows[idx] = certain(w.null_outcome, n);
      continue;
    }
    const auto k = static_cast<std::size_t>(off);
    std::size_t best = 0;
    double best_u = 0.0;
    for (std::size_t r = 0; r < dom.type_count(off); ++r) {
      st[k] = r;
      double u = setting.utility(mech.row(dom.compose(st)), off, grid_types[gt[k]]);
      if (r == 0 || u > best_u) {
        best_u = u;
        best = r;
      }
    }
    if (best_u < 0.0 && w.null_outcome >= 0) {
      rows[idx] = certain(w.null_outcome, n);
      continue;
    }
    st[k] = best;
    Lottery row = mech.row(dom.compose(st));
    for (auto& e : row) {
      e.outcome = w.keep[static_cast<std::size_t>(e.outcome)][k];
      for (int i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(i) != k) e.payments[static_cast<std::size_t>(i)] = 0.0;
      }
    }
    rows[idx] = std::move(row);
  }
  return MechanismTable(mech.grid(), std::move(full), mech.outcome_count(), std::move(rows));
}

}  // namespace mechlearn
