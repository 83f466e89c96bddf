#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/sampling.hpp"

using namespace mechlearn;
using namespace mechlearn::testing;

TEST(GridSpec, RoundDownExamples) {
  GridSpec g(0.25, 2.0);
  EXPECT_EQ(g.round_down(0.0).index, 0);
  EXPECT_EQ(g.round_down(0.75).index, 3);
  EXPECT_EQ(g.round_down(0.74).index, 2);
  EXPECT_DOUBLE_EQ(g.value(g.round_down(0.74)), 0.5);
  EXPECT_EQ(g.round_down(2.0).index, 8);
}

TEST(GridSpec, RoundDownRejectsOutOfRange) {
  GridSpec g(0.25, 2.0);
  EXPECT_THROW(g.round_down(-0.01), DomainError);
  EXPECT_THROW(g.round_down(2.01), DomainError);
  EXPECT_THROW(g.round_down(std::nan("")), DomainError);
  try {
    g.round_down(3.5);
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("3.5"), std::string::npos);
  }
}

TEST(GridSpec, Levels) {
  EXPECT_EQ(GridSpec(0.25, 2.0).levels(), 9);
  EXPECT_EQ(GridSpec(1.0, 1.0).levels(), 2);
  // Partial top cell: grid points 0, 0.3, 0.6, 0.9.
  GridSpec partial(0.3, 1.0);
  EXPECT_EQ(partial.levels(), 4);
  EXPECT_EQ(partial.cells(), 4);
  EXPECT_EQ(partial.round_down(1.0).index, 3);
  // 0.1 * 3 is 0.30000000000000004 in floating point; still a grid point.
  EXPECT_EQ(GridSpec(0.1, 1.0).round_down(0.3).index, 3);
  EXPECT_EQ(GridSpec(0.1, 1.0).levels(), 11);
  EXPECT_THROW(GridSpec(0.0, 1.0), UsageError);
  EXPECT_THROW(GridSpec(2.0, 1.0), UsageError);
}

TEST(GridSpec, LatticeScan) {
  for (auto [eps, h] : {std::pair{0.25, 2.0}, std::pair{0.3, 1.0}, std::pair{0.1, 1.0}, std::pair{1.0 / 3.0, 2.0}}) {
    GridSpec g(eps, h);
    const int steps = static_cast<int>(std::llround(h * 1000));
    for (int s = 0; s <= steps; ++s) {
      const double v = s * 1e-3;
      const GridValue r = g.round_down(v);
      const double w = g.value(r);
      ASSERT_LE(w, v + 1e-9 * std::max(1.0, v)) << "eps=" << eps << " v=" << v;
      if (r.index < g.top_index()) {
        ASSERT_LT(v, w + eps) << "eps=" << eps << " v=" << v;
      }
    }
  }
}

TEST(GridSpec, RoundingIsIdempotent) {
  for (double eps : {0.25, 0.1, 0.3, 1.0 / 3.0, 0.05}) {
    GridSpec g(eps, 2.0);
    for (int i = 0; i <= g.top_index(); ++i) EXPECT_EQ(g.round_down(g.value(i)).index, i) << eps;
  }
}

TEST(EmpiricalMarginal, Examples) {
  GridSpec g1(1.0, 2.0);
  std::vector<double> a{0.0, 0.0};
  auto m1 = empirical_marginal(a, g1);
  EXPECT_EQ(m1.support(), std::vector<int>{0});
  EXPECT_EQ(m1.mass_at(0), q(1));

  std::vector<double> b{0.3, 1.7, 1.2, 0.9};
  auto m2 = empirical_marginal(b, g1);
  EXPECT_EQ(m2.support(), (std::vector<int>{0, 1}));
  EXPECT_EQ(m2.probability(GridValue{0}), q(1, 2));
  EXPECT_EQ(m2.probability(GridValue{1}), q(1, 2));

  std::vector<double> c{2.0};
  auto m3 = empirical_marginal(c, g1);
  EXPECT_EQ(m3.support(), std::vector<int>{2});

  EXPECT_THROW(empirical_marginal(std::vector<double>{}, g1), UsageError);
}

TEST(EmpiricalMarginal, MassesSumToOneExactly) {
  GridSpec g(0.1, 1.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> xs(7 + trial * 13);
    for (auto& x : xs) x = u(rng);
    auto m = empirical_marginal(xs, g);
    Rational total = 0;
    for (std::size_t k = 0; k < m.support_size(); ++k) {
      total += m.mass_at(k);
      EXPECT_EQ(xs.size() % static_cast<std::size_t>(denominator(m.mass_at(k))), 0u);
    }
    EXPECT_EQ(total, 1);
  }
}

TEST(DiscreteMarginal, Validation) {
  GridSpec g(0.5, 1.0);
  EXPECT_THROW(marginal(g, {{0, q(1, 2)}, {1, q(1, 3)}}), UsageError);
  EXPECT_THROW(marginal(g, {{0, q(3, 2)}, {1, q(-1, 2)}}), UsageError);
  EXPECT_THROW(marginal(g, {{5, q(1)}}), UsageError);
  auto real = DiscreteMarginal::from_real(g, {{0, 0.25}, {2, 0.75}});
  EXPECT_EQ(real.probability(GridValue{2}), q(3, 4));
  EXPECT_THROW(DiscreteMarginal::from_real(g, {{0, 0.5}, {2, 0.4}}), UsageError);
}

TEST(ProductPrior, SharedGridAndProductSupport) {
  GridSpec g(0.5, 1.0);
  GridSpec other(0.25, 1.0);
  EXPECT_THROW(ProductPrior(1, 2, {uniform_on(g, {0, 1}), uniform_on(other, {0})}), UsageError);
  ProductPrior p(2, 1, {uniform_on(g, {0, 1}), uniform_on(g, {0, 1, 2})});
  EXPECT_EQ(p.support_domain().size(), 6u);
  std::vector<int> t{2};
  EXPECT_EQ(p.type_probability(1, t), q(1, 3));
}

TEST(SamplePrior, PointMassAndDeterminism) {
  PriorConfig cfg{3, 1, {PointMasses{{1.0}, {q(1)}}, PointMasses{{1.0}, {q(1)}}, PointMasses{{1.0}, {q(1)}}}};
  auto s = sample_prior(cfg, 3, 42, 2.0);
  ASSERT_EQ(s.values.size(), 9u);
  for (double v : s.values) EXPECT_EQ(v, 1.0);

  PriorConfig u{2, 2, std::vector<PriorFamily>(4, UniformInterval{0.0, 2.0})};
  EXPECT_EQ(sample_prior(u, 50, 7, 2.0), sample_prior(u, 50, 7, 2.0));
  EXPECT_NE(sample_prior(u, 50, 7, 2.0), sample_prior(u, 50, 8, 2.0));
}

TEST(SamplePrior, UniformMean) {
  PriorConfig u{1, 1, {UniformInterval{0.0, 2.0}}};
  auto s = sample_prior(u, 10000, 11, 2.0);
  double mean = 0.0;
  for (double v : s.values) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 2.0);
    mean += v;
  }
  EXPECT_NEAR(mean / 10000.0, 1.0, 0.05);
}

TEST(SamplePrior, TruncatedExponentialStaysInRange) {
  PriorConfig e{1, 1, {TruncatedExponential{2.0, 0.5, 1.5}}};
  auto s = sample_prior(e, 5000, 3, 2.0);
  for (double v : s.values) {
    ASSERT_GE(v, 0.5);
    ASSERT_LE(v, 1.5);
  }
}

TEST(SamplePrior, RoundedSamplesMatchPushforwardChiSquare) {
  // Off-grid points round to indices 1, 3 and 4 of the 0.25 grid.
  GridSpec g(0.25, 2.0);
  PointMasses pm{{0.3, 0.8, 1.1}, {q(1, 5), q(1, 2), q(3, 10)}};
  PriorConfig cfg{1, 1, {pm}};
  const int draws = 100000;
  auto s = sample_prior(cfg, draws, 2024, 2.0);
  auto emp = empirical_marginal(s.values, g);
  auto truth = rounded_marginal(pm, g);
  EXPECT_EQ(truth.support(), (std::vector<int>{1, 3, 4}));
  double chi2 = 0.0;
  for (std::size_t k = 0; k < truth.support_size(); ++k) {
    const double expected = draws * truth.mass_at_d(k);
    const double observed = draws * to_double(emp.probability(GridValue{truth.support()[k]}));
    chi2 += (observed - expected) * (observed - expected) / expected;
  }
  // chi-square critical value, 2 degrees of freedom, alpha = 0.001.
  EXPECT_LT(chi2, 13.816);
}

TEST(RoundedMarginal, ContinuousFamilies) {
  GridSpec g(0.5, 2.0);
  auto m = rounded_marginal(UniformInterval{0.0, 2.0}, g);
  EXPECT_EQ(m.support(), (std::vector<int>{0, 1, 2, 3}));
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(m.mass_at(k), q(1, 4));
  auto half = rounded_marginal(UniformInterval{0.25, 1.0}, g);
  // Masses come from a floating cdf, so they are only close to 1/3 and 2/3.
  EXPECT_NEAR(to_double(half.probability(GridValue{0})), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(to_double(half.probability(GridValue{1})), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(half.probability(GridValue{0}) + half.probability(GridValue{1}), 1);
}

TEST(SampleCount, FrozenValues) {
  EXPECT_EQ(recommended_sample_count(1, 1, 1, 1, 0.5, 0.1), 594u);
  EXPECT_EQ(recommended_sample_count(1, 2, 1, 2, 0.25, 0.1), 457340u);
  EXPECT_EQ(recommended_sample_count(2, 2, 1, 2, 0.25, 0.05), 4131658u);
}

TEST(SampleCount, MinimalAndMonotone) {
  auto holds = [](int n, int m, double h, double eps, double delta, double s) {
    const double nm = static_cast<double>(n) * m;
    const double cells = std::ceil(h / eps);
    const double rhs = 8.0 * nm * nm * h * h / (eps * eps) *
                       (std::log(4.0 * nm * h / eps) + std::log(1.0 / delta) + std::log(static_cast<double>(n)) +
                        2.0 * m * std::log(cells) + nm * cells * std::log(s + 1.0));
    return s >= rhs;
  };
  const auto s = recommended_sample_count(1, 1, 1, 1, 0.5, 0.1);
  EXPECT_TRUE(holds(1, 1, 1, 0.5, 0.1, static_cast<double>(s)));
  EXPECT_FALSE(holds(1, 1, 1, 0.5, 0.1, static_cast<double>(s - 1)));
  const auto base = recommended_sample_count(1, 1, 1, 1, 0.5, 0.1);
  EXPECT_LE(base, recommended_sample_count(2, 1, 1, 1, 0.5, 0.1));
  EXPECT_LE(base, recommended_sample_count(1, 2, 1, 1, 0.5, 0.1));
  EXPECT_LE(base, recommended_sample_count(1, 1, 1, 2, 0.5, 0.1));
  EXPECT_LE(base, recommended_sample_count(1, 1, 1, 1, 0.25, 0.1));
  EXPECT_LE(base, recommended_sample_count(1, 1, 1, 1, 0.5, 0.01));
  EXPECT_THROW(recommended_sample_count(1, 1, 1, 1, 0.5, 1.5), UsageError);
}

TEST(PriorConfigJson, ParsesFamiliesAndRejectsUnknown) {
  auto j = nlohmann::json::parse(R"({"family":"discrete","params":{"points":[1,2],"weights":["1/3",2]}})");
  auto f = parse_prior_family(j, 2.0);
  const auto& pm = std::get<PointMasses>(f);
  EXPECT_EQ(pm.weights[0], q(1, 7));
  EXPECT_THROW(parse_prior_family(nlohmann::json::parse(R"({"family":"cauchy"})"), 2.0), ConfigError);
  EXPECT_THROW(parse_prior_family(nlohmann::json::parse(R"({"family":"point_mass","params":{"value":3}})"), 2.0),
               ConfigError);
  auto cfg = parse_prior_config(nlohmann::json::parse(R"([{"family":"point_mass","params":{"value":1}},
                                                          {"family":"uniform","params":{"low":0,"high":1}}])"),
                                2, 2, 2.0);
  EXPECT_EQ(cfg.cells.size(), 4u);
  EXPECT_TRUE(std::holds_alternative<UniformInterval>(cfg.cell(1, 1)));
}

TEST(SampleCsv, RoundTrip) {
  PriorConfig u{2, 2, std::vector<PriorFamily>(4, UniformInterval{0.0, 2.0})};
  auto s = sample_prior(u, 5, 9, 2.0);
  std::stringstream ss;
  write_samples_csv(ss, s);
  auto back = read_samples_csv(ss, 2.0);
  EXPECT_EQ(back.values, s.values);
  EXPECT_EQ(back.n, 2);
  EXPECT_EQ(back.s, 5);
  std::stringstream bad("bidder,parameter,sample_index,value\n0,0,0,abc\n");
  EXPECT_THROW(read_samples_csv(bad, 2.0), ParseError);
}
