#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "helpers.hpp"
#include "mechlearn/lp_oracle.hpp"

using namespace mechlearn;
using namespace mechlearn::testing;

namespace {

struct Solved {
  LpSolution sol;
  Rational exact;
};

Solved both(const ProductPrior& prior, const Setting& setting, IcMode mode, double eta = 0.0) {
  OracleProblem p{prior, setting, mode, eta};
  return {solve_optimal(p), brute_force_optimal(p)};
}

void audit(const LpSolution& sol, const ProductPrior& prior, const Setting& setting, IcMode mode, double eta = 0.0) {
  auto rep = regret_report(sol.mechanism, prior, setting, RegretScope::support);
  EXPECT_GE(rep.ir_slack, -1e-8);
  if (mode == IcMode::bic) {
    EXPECT_LE(rep.bic_regret, 1e-8);
  } else {
    EXPECT_LE(rep.dsic_regret, eta + 1e-8);
  }
  EXPECT_NEAR(revenue(sol.mechanism, prior), sol.objective, 1e-8);
  EXPECT_LE(std::abs(sol.objective - sol.dual_objective), 1e-7 * (1 + std::abs(sol.objective)));
}

}  // namespace

TEST(Oracle, PointMassExtractsFullSurplus) {
  GridSpec g(0.25, 2.0);
  auto setting = additive_setting(1, 1, g);
  auto prior = iid(1, 1, DiscreteMarginal::point_mass(g, GridValue{5}));
  auto s = both(prior, setting, IcMode::bic);
  EXPECT_NEAR(s.sol.objective, 1.25, 1e-9);
  EXPECT_EQ(s.exact, q(5, 4));
  audit(s.sol, prior, setting, IcMode::bic);
}

TEST(Oracle, SingleItemUniformOneTwo) {
  GridSpec g(1.0, 2.0);
  auto setting = additive_setting(1, 1, g);
  auto prior = iid(1, 1, uniform_on(g, {1, 2}));
  auto s = both(prior, setting, IcMode::bic);
  EXPECT_NEAR(s.sol.objective, 1.0, 1e-9);
  EXPECT_EQ(s.exact, q(1));
}

TEST(Oracle, TwoAdditiveItemsUniformOneTwo) {
  GridSpec g(0.25, 2.0);
  auto setting = additive_setting(1, 2, g);
  auto prior = iid(1, 2, uniform_on(g, {4, 8}));
  auto s = both(prior, setting, IcMode::bic);
  EXPECT_EQ(s.exact, q(9, 4));
  EXPECT_NEAR(s.sol.objective, 2.25, 1e-7);
  audit(s.sol, prior, setting, IcMode::bic);
}

TEST(Oracle, TwoBiddersOneItem) {
  GridSpec g(0.25, 2.0);
  auto setting = additive_setting(2, 1, g);
  auto prior = iid(2, 1, uniform_on(g, {4, 8}));
  for (auto mode : {IcMode::bic, IcMode::dsic}) {
    auto s = both(prior, setting, mode);
    EXPECT_EQ(s.exact, q(3, 2));
    EXPECT_NEAR(s.sol.objective, 1.5, 1e-7);
    audit(s.sol, prior, setting, mode);
  }
}

TEST(Oracle, TwoBiddersTwoItemsAsymmetric) {
  GridSpec g(0.25, 2.0);
  auto setting = additive_setting(2, 2, g);
  auto u12 = uniform_on(g, {4, 8});
  auto skew = marginal(g, {{2, q(1, 4)}, {5, q(3, 4)}});
  ProductPrior prior(2, 2, {u12, skew, skew, u12});
  auto bic = both(prior, setting, IcMode::bic);
  EXPECT_EQ(bic.exact, q(309, 104));
  EXPECT_NEAR(bic.sol.objective, 309.0 / 104.0, 1e-7);
  audit(bic.sol, prior, setting, IcMode::bic);
  auto dsic = both(prior, setting, IcMode::dsic);
  EXPECT_EQ(dsic.exact, q(189, 64));
  EXPECT_NEAR(dsic.sol.objective, 189.0 / 64.0, 1e-7);
  audit(dsic.sol, prior, setting, IcMode::dsic);
}

TEST(Oracle, ZeroPriorGivesZero) {
  GridSpec g(0.5, 1.0);
  auto setting = additive_setting(2, 1, g);
  auto prior = iid(2, 1, DiscreteMarginal::point_mass(g, GridValue{0}));
  auto s = both(prior, setting, IcMode::bic);
  EXPECT_EQ(s.exact, 0);
  EXPECT_NEAR(s.sol.objective, 0.0, 1e-12);
}

TEST(Oracle, DsicNeverBeatsBicAndSlackHelps) {
  std::mt19937_64 rng(12);
  GridSpec g(0.5, 1.5);
  auto setting = additive_setting(2, 1, g);
  for (int t = 0; t < 5; ++t) {
    ProductPrior prior(2, 1, {random_marginal(rng, g, 3), random_marginal(rng, g, 3)});
    const double bic = solve_optimal({prior, setting, IcMode::bic, 0.0}).objective;
    const double dsic = solve_optimal({prior, setting, IcMode::dsic, 0.0}).objective;
    const double slack = solve_optimal({prior, setting, IcMode::dsic, 0.5}).objective;
    EXPECT_LE(dsic, bic + 1e-9);
    EXPECT_GE(slack, dsic - 1e-9);
    auto sol = solve_optimal({prior, setting, IcMode::dsic, 0.5});
    audit(sol, prior, setting, IcMode::dsic, 0.5);
  }
}

TEST(Oracle, MonotoneInMassSingleBidder) {
  std::mt19937_64 rng(31);
  GridSpec g(0.25, 2.0);
  auto setting = additive_setting(1, 1, g);
  for (int t = 0; t < 20; ++t) {
    auto base = random_marginal(rng, g, 4);
    const auto& s = base.support();
    std::map<int, Rational> mass;
    for (std::size_t k = 0; k < s.size(); ++k) mass[s[k]] = base.mass_at(k);
    // Move half of the lowest type's mass up to a strictly higher type.
    const int low = s.front();
    if (low == g.top_index()) continue;
    const int high = std::uniform_int_distribution<int>(low + 1, g.top_index())(rng);
    Rational moved = mass[low] / 2;
    mass[low] -= moved;
    mass[high] += moved;
    const double before = solve_optimal({iid(1, 1, base), setting, IcMode::bic, 0.0}).objective;
    const double after = solve_optimal({iid(1, 1, DiscreteMarginal(g, mass)), setting, IcMode::bic, 0.0}).objective;
    EXPECT_GE(after, before - 1e-9);
  }
}

TEST(Oracle, Deterministic) {
  GridSpec g(0.25, 2.0);
  auto setting = additive_setting(2, 2, g);
  auto u12 = uniform_on(g, {4, 8});
  auto skew = marginal(g, {{2, q(1, 4)}, {5, q(3, 4)}});
  ProductPrior prior(2, 2, {u12, skew, skew, u12});
  auto a = solve_optimal({prior, setting, IcMode::bic, 0.0});
  auto b = solve_optimal({prior, setting, IcMode::bic, 0.0});
  EXPECT_EQ(a.mechanism, b.mechanism);
  EXPECT_EQ(a.objective, b.objective);
}

TEST(Oracle, Guards) {
  GridSpec g(0.1, 2.0);
  auto setting = additive_setting(1, 1, g);
  std::vector<int> seventeen;
  for (int i = 0; i < 17; ++i) seventeen.push_back(i);
  auto prior = iid(1, 1, uniform_on(g, seventeen));
  EXPECT_THROW(brute_force_optimal({prior, setting, IcMode::bic, 0.0}), UsageError);
  EXPECT_NO_THROW(solve_optimal({prior, setting, IcMode::bic, 0.0}));
  EXPECT_THROW(solve_optimal({prior, setting, IcMode::dsic, -1.0}), UsageError);

  GridSpec coarse(0.25, 2.0);
  auto big = additive_setting(3, 3, coarse);
  auto wide = iid(3, 3, uniform_on(coarse, {0, 2, 4, 6, 8}));
  EXPECT_THROW(solve_optimal({wide, big, IcMode::bic, 0.0}), CapacityError);
}

TEST(Oracle, LpDump) {
  GridSpec g(1.0, 2.0);
  auto setting = additive_setting(1, 1, g);
  auto prior = iid(1, 1, uniform_on(g, {1, 2}));
  std::ostringstream os;
  solve_optimal({prior, setting, IcMode::bic, 0.0}, &os);
  const auto text = os.str();
  EXPECT_NE(text.find("Maximize"), std::string::npos);
  EXPECT_NE(text.find("Subject To"), std::string::npos);
  EXPECT_NE(text.find("End"), std::string::npos);
}

TEST(ExtendBic, OnSupportUnchangedAndOffSupportBestResponds) {
  GridSpec g(0.25, 2.0);
  auto setting = additive_setting(2, 1, g);
  ProductPrior prior(2, 1, {uniform_on(g, {4, 8}), marginal(g, {{2, q(1, 3)}, {6, q(2, 3)}})});
  auto sol = solve_optimal({prior, setting, IcMode::bic, 0.0});
  auto ext = extend_bic(sol.mechanism, prior, setting);
  ASSERT_TRUE(ext.domain().is_full());
  const auto& sd = prior.support_domain();
  for (std::size_t r = 0; r < sd.size(); ++r) {
    auto profile = sd.profile_at(r);
    EXPECT_EQ(*ext.find(profile), *sol.mechanism.find(profile));
  }
  // Off-support types cannot gain by misreporting under the prior.
  auto rep = regret_report(ext, prior, setting, RegretScope::grid);
  EXPECT_LE(rep.bic_regret, 1e-8);
}

TEST(ExtendBic, SingleBidderTakesFavoriteRowWithLexicographicTies) {
  GridSpec g(1.0, 3.0);
  auto setting = additive_setting(1, 1, g);
  auto prior = iid(1, 1, uniform_on(g, {1, 3}));
  auto domain = prior.support_domain();
  // Type 1: item at price 1. Type 3: the item with probability 1/2 for free.
  MechanismTable mech(g, domain, 2, {{LotteryEntry{1.0, 1, {1.0}}}, {LotteryEntry{0.5, 1, {0.0}}, LotteryEntry{0.5, 0, {0.0}}}});
  auto ext = extend_bic(mech, prior, setting);
  // Type 2 values both rows at 1: the tie goes to the smaller type 1.
  EXPECT_EQ(*ext.find(std::vector<int>{2}), mech.row(0));
  // Type 0 prefers the free lottery (utility 0) over paying 1.
  EXPECT_EQ(*ext.find(std::vector<int>{0}), mech.row(1));
}

TEST(ExtendBic, NegativeBestUtilityOptsOut) {
  GridSpec g(1.0, 3.0);
  auto setting = additive_setting(1, 1, g);
  auto prior = iid(1, 1, uniform_on(g, {2, 3}));
  MechanismTable mech(g, prior.support_domain(), 2, {{LotteryEntry{1.0, 1, {2.0}}}, {LotteryEntry{1.0, 1, {2.0}}}});
  auto ext = extend_bic(mech, prior, setting);
  EXPECT_EQ(*ext.find(std::vector<int>{0}), certain(0, 1));
  EXPECT_EQ(*ext.find(std::vector<int>{1}), certain(0, 1));
}

TEST(ExtendDsic, Rules) {
  GridSpec g(0.5, 2.0);
  auto setting = additive_setting(2, 1, g);
  auto prior = iid(2, 1, uniform_on(g, {2, 4}));
  auto sol = solve_optimal({prior, setting, IcMode::dsic, 0.0});
  auto closure = check_weakly_downward_closed(setting.space(), setting.model(), g);
  auto ext = extend_dsic(sol.mechanism, setting, closure);
  const auto& sd = prior.support_domain();
  for (std::size_t r = 0; r < sd.size(); ++r) {
    auto profile = sd.profile_at(r);
    EXPECT_EQ(*ext.find(profile), *sol.mechanism.find(profile));
  }
  // Two off-support bidders: null outcome, no payments.
  EXPECT_EQ(*ext.find(std::vector<int>{1, 3}), certain(0, 2));
  // Bidder 0 off-support: bidder 1 gets nothing and pays nothing whatever she bids.
  for (int b = 0; b < g.levels(); ++b) {
    std::vector<int> profile{3, b};
    std::vector<int> type{b};
    EXPECT_EQ(setting.utility(*ext.find(profile), 1, type), 0.0);
    EXPECT_EQ(expected_payment(*ext.find(profile), 1), 0.0);
  }
  auto rep = regret_report(ext, prior, setting, RegretScope::grid);
  EXPECT_GE(rep.ir_slack, -1e-8);

  DownwardClosure open;
  EXPECT_THROW(extend_dsic(sol.mechanism, setting, open), UsageError);
}

TEST(Simplex, DualFormMatchesPrimalTableau) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    lp::Problem p;
    p.cols = 2 + rng() % 6;
    for (std::size_t j = 0; j < p.cols; ++j) p.c.push_back(u(rng));
    const int m = 1 + static_cast<int>(rng() % 25);
    for (int r = 0; r < m; ++r) {
      std::vector<std::pair<std::size_t, double>> row;
      for (std::size_t j = 0; j < p.cols; ++j) {
        if (rng() % 2) row.push_back({j, std::round(u(rng) * 4) / 2});
      }
      p.add_row(row, std::round((u(rng) + 1) * 2) / 2);
    }
    const bool boxed = t % 4 != 0;
    if (boxed) {
      for (std::size_t j = 0; j < p.cols; ++j) p.add_row({{j, 1.0}}, 3.0);
    }
    auto a = lp::solve(p);
    auto b = lp::solve_dual_form(p);
    ASSERT_EQ(a.status, b.status) << t;
    if (boxed) {
      ASSERT_EQ(b.status, lp::Status::optimal);
    }
    if (b.status != lp::Status::optimal) continue;
    EXPECT_NEAR(a.objective, b.objective, 1e-9) << t;
    EXPECT_LE(lp::primal_violation(p, b.x), 1e-12);
    EXPECT_LE(lp::dual_violation(p, b.y), 1e-9);
    EXPECT_NEAR(b.objective, b.dual_objective, 1e-9);
  }
}
