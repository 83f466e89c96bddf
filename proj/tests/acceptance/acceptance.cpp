// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "../helpers.hpp"
#include "mechlearn/experiments.hpp"
#include "mechlearn/mechanism_io.hpp"

using namespace mechlearn;
using namespace mechlearn::testing;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

Instance load_instance(const std::string& name) {
  std::ifstream in(std::string(MECHLEARN_CONFIG_DIR) + "/" + name);
  if (!in) throw ConfigError("cannot open config " + name);
  return parse_instance(read_json_file(in, name));
}

std::string fmt(double x) { return format_double(x); }

// 1 ---------------------------------------------------------------------------

Verdict oracle_correctness() {
  Verdict v;
  std::mt19937_64 rng(20240601);
  struct Shape {
    int n, m;
  };
  const std::vector<Shape> shapes{{1, 1}, {1, 2}, {2, 1}, {2, 2}, {3, 1}};
  double worst_gap = 0.0, worst_bic = 0.0, worst_ir = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto shape = shapes[static_cast<std::size_t>(t) % shapes.size()];
    GridSpec g(t % 3 == 0 ? 0.5 : 0.25, t % 2 == 0 ? 1.0 : 2.0);
    std::vector<DiscreteMarginal> ms;
    int profiles = 1;
    for (int c = 0; c < shape.n * shape.m; ++c) {
      const int room = std::min(3, 16 / profiles);
      ms.push_back(random_marginal(rng, g, room));
      profiles *= static_cast<int>(ms.back().support_size());
    }
    ProductPrior prior(shape.n, shape.m, ms);
    auto model = shape.m == 2 && t % 4 == 1 ? ValuationModel::unit_demand(2) : ValuationModel::additive(shape.m);
    Setting setting(enumerate_multi_item(shape.n, shape.m), model, g);
    OracleProblem p{prior, setting, IcMode::bic, 0.0};
    auto sol = solve_optimal(p);
    const double exact = to_double(brute_force_optimal(p));
    auto rep = regret_report(sol.mechanism, prior, setting, RegretScope::support);
    worst_gap = std::max(worst_gap, std::abs(sol.objective - exact));
    worst_bic = std::max(worst_bic, rep.bic_regret);
    worst_ir = std::min(worst_ir, rep.ir_slack);
    v.require(std::abs(sol.objective - exact) <= 1e-7, "instance " + std::to_string(t) + ": objective " +
                                                           fmt(sol.objective) + " vs exact " + fmt(exact));
    v.require(rep.ir_slack >= -1e-8, "instance " + std::to_string(t) + ": ir slack " + fmt(rep.ir_slack));
    v.require(rep.bic_regret <= 1e-8, "instance " + std::to_string(t) + ": bic regret " + fmt(rep.bic_regret));
  }
  if (v.pass) {
    v.detail = "50 instances, max |lp - exact| " + fmt(worst_gap) + ", max bic regret " + fmt(worst_bic) +
               ", min ir slack " + fmt(worst_ir);
  }
  return v;
}

// 2 ---------------------------------------------------------------------------

std::vector<DiscreteMarginal> myerson_family(const GridSpec& g) {
  return {marginal(g, {{2, q(1)}}),
          marginal(g, {{1, q(1, 2)}, {2, q(1, 2)}}),
          marginal(g, {{2, q(1, 4)}, {4, q(3, 4)}}),
          marginal(g, {{1, q(1, 3)}, {2, q(1, 3)}, {4, q(1, 3)}}),
          marginal(g, {{1, q(1, 2)}, {3, q(1, 8)}, {4, q(3, 8)}}),
          marginal(g, {{0, q(1, 2)}, {4, q(1, 2)}}),
          marginal(g, {{1, q(3, 4)}, {4, q(1, 4)}}),
          marginal(g, {{2, q(1, 2)}, {3, q(1, 4)}, {4, q(1, 4)}}),
          marginal(g, {{1, q(1, 5)}, {2, q(2, 5)}, {3, q(2, 5)}}),
          marginal(g, {{0, q(1, 3)}, {1, q(1, 3)}, {3, q(1, 3)}})};
}

Verdict myerson_optimality() {
  Verdict v;
  GridSpec g(0.5, 2.0);
  auto family = myerson_family(g);
  std::vector<ProductPrior> priors;
  for (const auto& mg : family) priors.emplace_back(1, 1, std::vector<DiscreteMarginal>{mg});
  for (std::size_t i = 0; i < family.size(); ++i) {
    priors.emplace_back(2, 1, std::vector<DiscreteMarginal>{family[i], family[(i + 3) % family.size()]});
  }
  double worst = 0.0;
  int exact_hits = 0;
  for (std::size_t k = 0; k < priors.size(); ++k) {
    const auto& prior = priors[k];
    Setting setting(single_item_space(prior.bidders()), ValuationModel::additive(1), g);
    auto table = myerson_table(myerson_auction(prior, setting.space()), g, false);
    const Rational mine = revenue_exact(table, prior);
    const Rational opt = brute_force_optimal({prior, setting, IcMode::bic, 0.0});
    exact_hits += mine == opt ? 1 : 0;
    const double gap = std::abs(to_double(mine) - to_double(opt));
    worst = std::max(worst, gap);
    v.require(gap <= 1e-7, "prior " + std::to_string(k) + ": myerson " + format_rational(mine) + " vs optimum " +
                               format_rational(opt));
  }
  if (v.pass) {
    v.detail = "20 priors, max gap " + fmt(worst) + ", " + std::to_string(exact_hits) + " exactly equal";
  }
  return v;
}

// 3 ---------------------------------------------------------------------------

Verdict dsic_invariants() {
  Verdict v;
  auto inst = load_instance("dsic_n2m2.json");
  const auto& truth = *inst.prior;
  auto rounded = rounded_prior(truth, inst.grid);
  const double bound = 4.0 * inst.m * inst.grid.epsilon() + 1e-8;
  double worst_dsic = 0.0, worst_ir = 0.0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    auto run = learn_dsic(sample_prior(truth, 10, seed, inst.grid.h()), inst.setting);
    auto rep = regret_report(run.learned.inner, rounded, inst.setting, RegretScope::grid);
    worst_dsic = std::max(worst_dsic, rep.dsic_regret);
    worst_ir = std::min(worst_ir, rep.ir_slack);
    const auto tag = "seed " + std::to_string(seed);
    v.require(rep.dsic_regret <= bound, tag + ": dsic regret " + fmt(rep.dsic_regret));
    v.require(rep.ir_slack >= -1e-8, tag + ": ir slack " + fmt(rep.ir_slack));
    v.require(revenue_on_true_prior(run.learned, inst.setting, truth) == revenue_exact(run.learned.inner, rounded),
              tag + ": revenue on the true prior differs from the inner revenue on the rounded prior");
  }
  if (v.pass) {
    v.detail = "40 runs, max dsic regret " + fmt(worst_dsic) + " (bound " + fmt(bound) + "), min ir slack " +
               fmt(worst_ir) + ", revenue identity exact";
  }
  return v;
}

// 4 ---------------------------------------------------------------------------

SweepConfig golden_sweep_config() {
  std::ifstream in(std::string(MECHLEARN_CONFIG_DIR) + "/sweep_uniform12.json");
  return parse_sweep_config(read_json_file(in, "sweep_uniform12.json"));
}

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  write_sweep_csv(os, r);
  return os.str();
}

Verdict sweep_gap(const SweepResult& r, double eps) {
  Verdict v;
  const auto& sum = r.summary;
  v.require(sum.size() == 3, "expected three sample sizes");
  if (!v.pass) return v;
  v.require(sum.back().s == 2000, "largest sample size is not 2000");
  v.require(sum.back().fraction_within_eps >= 0.95,
            "only " + fmt(sum.back().fraction_within_eps) + " of seeds within eps at S=2000");
  for (std::size_t k = 1; k < sum.size(); ++k) {
    const double slack = 2.0 * std::hypot(sum[k - 1].se_gap, sum[k].se_gap);
    v.require(sum[k].mean_gap <= sum[k - 1].mean_gap + slack,
              "mean gap rises from S=" + std::to_string(sum[k - 1].s) + " to S=" + std::to_string(sum[k].s));
  }
  std::ostringstream os;
  for (const auto& s : sum) os << "S=" << s.s << " mean " << fmt(s.mean_gap) << " se " << fmt(s.se_gap) << "; ";
  os << "within eps=" << fmt(eps) << " at S=2000: " << fmt(sum.back().fraction_within_eps);
  if (v.pass) v.detail = os.str();
  return v;
}

// 5 ---------------------------------------------------------------------------

/// A random IC and IR single-bidder mechanism with every row's payments
/// lowered by at most eps: still IR, and eps-IC.
MechanismTable random_eps_ic(std::mt19937_64& rng, const Setting& setting, double eps) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int outcomes = static_cast<int>(setting.space().size());
  const double top = setting.params() * setting.grid().h();
  Menu menu{{certain(0, 1)}};
  const int entries = 2 + static_cast<int>(rng() % 5);
  for (int e = 0; e < entries; ++e) {
    Lottery l;
    const int parts = 1 + static_cast<int>(rng() % 2);
    double left = 1.0;
    for (int k = 0; k < parts; ++k) {
      const double pr = k + 1 == parts ? left : std::round(unit(rng) * 4.0) / 8.0;
      left -= pr;
      l.push_back(LotteryEntry{pr, static_cast<int>(rng() % static_cast<unsigned>(outcomes)), {unit(rng) * top}});
    }
    menu.entries.push_back(std::move(l));
  }
  auto table = menu_table(menu, setting);
  std::vector<Lottery> rows = table.rows();
  for (auto& row : rows) {
    double floor_pay = std::numeric_limits<double>::infinity();
    for (const auto& e : row) floor_pay = std::min(floor_pay, e.payments[0]);
    const double cut = std::min(eps, std::max(0.0, floor_pay)) * unit(rng);
    for (auto& e : row) e.payments[0] -= cut;
  }
  return MechanismTable(table.grid(), table.domain(), table.outcome_count(), std::move(rows));
}

Verdict nudge_reduction() {
  Verdict v;
  std::mt19937_64 rng(99);
  GridSpec g(0.25, 1.0);
  double worst_regret = 0.0, worst_margin = std::numeric_limits<double>::infinity();
  int checked = 0;
  for (double eps : {0.01, 0.04, 0.09}) {
    for (int t = 0; t < 100; ++t) {
      const int m = 1 + t % 2;
      Setting setting(enumerate_multi_item(1, m), ValuationModel::additive(m), g);
      auto mech = random_eps_ic(rng, setting, eps);
      std::vector<DiscreteMarginal> ms;
      for (int j = 0; j < m; ++j) ms.push_back(random_marginal(rng, g, 4));
      ProductPrior prior(1, m, ms);
      auto before = regret_report(mech, prior, setting, RegretScope::grid);
      v.require(before.bic_regret <= eps + 1e-12 && before.ir_slack >= -1e-12, "generator produced a non-eps-IC menu");
      auto nudged = menu_table(nudge_to_ic(mechanism_to_menu(mech, setting), eps), setting);
      auto after = regret_report(nudged, prior, setting, RegretScope::grid);
      const double rev = revenue(mech, prior);
      const double floor = (1.0 - std::sqrt(eps)) * (rev - std::sqrt(eps)) - 1e-9;
      const double got = revenue(nudged, prior);
      worst_regret = std::max(worst_regret, after.bic_regret);
      worst_margin = std::min(worst_margin, got - floor);
      const auto tag = "eps " + fmt(eps) + " menu " + std::to_string(t);
      v.require(after.bic_regret <= 1e-9, tag + ": regret after nudge " + fmt(after.bic_regret));
      v.require(after.ir_slack >= -1e-9, tag + ": ir slack after nudge " + fmt(after.ir_slack));
      v.require(got >= floor, tag + ": revenue " + fmt(got) + " below " + fmt(floor));
      ++checked;
    }
  }
  if (v.pass) {
    v.detail = std::to_string(checked) + " menus, max regret " + fmt(worst_regret) + ", min revenue margin " +
               fmt(worst_margin);
  }
  return v;
}

// 6 ---------------------------------------------------------------------------

const char* kConcentrationSettings[] = {
    R"({"grid_epsilon": 0.25, "H": 1, "f": "sum", "S": 5000, "epsilon": 0.1, "trials": 10000,
        "marginals": [{"family": "discrete", "params": {"points": [0, 0.25, 0.5, 0.75, 1], "weights": [1, 1, 1, 1, 1]}}]})",
    R"({"grid_epsilon": 0.25, "H": 1, "f": "max", "S": 4000, "epsilon": 0.12, "trials": 10000,
        "marginals": [{"family": "discrete", "params": {"points": [0, 0.5, 1], "weights": [2, 1, 1]}},
                      {"family": "discrete", "params": {"points": [0.25, 0.75], "weights": [1, 3]}}]})",
    R"({"grid_epsilon": 0.25, "H": 1, "f": {"kind": "threshold", "t": 0.5}, "S": 3000, "epsilon": 0.15, "trials": 10000,
        "marginals": [{"family": "discrete", "params": {"points": [0, 0.5, 1], "weights": [1, 1, 1]}},
                      {"family": "discrete", "params": {"points": [0, 0.25, 1], "weights": [3, 1, 1]}}]})"};

Verdict concentration() {
  Verdict v;
  std::ostringstream os;
  int k = 0;
  for (const char* text : kConcentrationSettings) {
    auto cfg = parse_concentration_config(nlohmann::json::parse(text), 1000 + static_cast<std::uint64_t>(k));
    auto r = concentration_experiment(cfg);
    const double limit = r.bound + 3.0 * r.standard_error;
    v.require(r.frequency <= limit, "setting " + std::to_string(k) + ": frequency " + fmt(r.frequency) + " above " +
                                        fmt(limit));
    os << "setting " << k << " freq " << fmt(r.frequency) << " bound " << fmt(r.bound) << " max dev "
       << fmt(r.max_deviation) << "; ";
    ++k;
  }
  if (v.pass) v.detail = os.str();
  return v;
}

// 7 ---------------------------------------------------------------------------

std::string dump(const MechanismTable& table, std::optional<Menu> menu = std::nullopt) {
  std::ostringstream os;
  write_mechanism(os, MechanismFile{table, "table", 0, std::move(menu), nlohmann::json::object()});
  return os.str();
}

Verdict determinism(const std::string& first_sweep) {
  Verdict v;
  auto u12 = load_instance("uniform12_n1m2.json");
  auto s1 = sample_prior(*u12.prior, 200, 7, u12.grid.h());
  v.require(s1 == sample_prior(*u12.prior, 200, 7, u12.grid.h()), "samples differ between draws");
  v.require(dump(learn_bic(s1, u12.setting).learned.inner) == dump(learn_bic(s1, u12.setting).learned.inner),
            "learn_bic output differs");
  auto a = learn_single_bidder_ic(s1, u12.setting).learned;
  auto b = learn_single_bidder_ic(s1, u12.setting).learned;
  v.require(dump(a.inner, a.menu) == dump(b.inner, b.menu), "single-bidder output differs");

  auto ds = load_instance("dsic_n2m2.json");
  auto s2 = sample_prior(*ds.prior, 10, 3, ds.grid.h());
  v.require(dump(learn_dsic(s2, ds.setting).learned.inner) == dump(learn_dsic(s2, ds.setting).learned.inner),
            "learn_dsic output differs");

  auto si = load_instance("single_item_n2.json");
  auto s3 = sample_prior(*si.prior, 50, 5, si.grid.h());
  v.require(dump(learn_single_parameter(s3, si.grid, si.setting.space())) ==
                dump(learn_single_parameter(s3, si.grid, si.setting.space())),
            "single-parameter output differs");

  auto cfg = parse_concentration_config(nlohmann::json::parse(kConcentrationSettings[1]), 5);
  cfg.trials = 500;
  std::ostringstream c1, c2;
  write_concentration_csv(c1, cfg, concentration_experiment(cfg));
  write_concentration_csv(c2, cfg, concentration_experiment(cfg));
  v.require(c1.str() == c2.str(), "concentration output differs");

  v.require(sweep_csv(run_sweep(golden_sweep_config(), 3)) == first_sweep, "sweep differs between worker counts");
  std::ifstream golden(std::string(MECHLEARN_GOLDEN_DIR) + "/sweep_uniform12.csv", std::ios::binary);
  v.require(static_cast<bool>(golden), "golden sweep file is missing");
  if (golden) {
    std::stringstream gs;
    gs << golden.rdbuf();
    v.require(gs.str() == first_sweep, "sweep differs from the golden file");
  }
  if (v.pass) v.detail = "mechanisms, samples, sweep (" + std::to_string(worker_count()) + " vs 3 workers, golden) and concentration byte-identical";
  return v;
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, double limit_s, const std::function<Verdict()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > limit_s) {
      v.pass = false;
      v.detail += " (took " + fmt(secs) + " s, limit " + fmt(limit_s) + " s)";
    }
    failures += v.pass ? 0 : 1;
    std::printf("criterion %d %s: %s - %s [%.1f s]\n", id, name, v.pass ? "PASS" : "FAIL", v.detail.c_str(), secs);
    std::fflush(stdout);
  };

  report(1, "oracle correctness", 60, oracle_correctness);
  report(2, "myerson optimality", 30, myerson_optimality);
  report(3, "dsic invariants", 600, dsic_invariants);
  std::string sweep_text;
  report(4, "sample gap", 900, [&] {
    auto cfg = golden_sweep_config();
    auto r = run_sweep(cfg, worker_count());
    sweep_text = sweep_csv(r);
    return sweep_gap(r, cfg.instance.grid.epsilon());
  });
  report(5, "nudge", 120, nudge_reduction);
  report(6, "concentration", 300, concentration);
  report(7, "determinism", 900, [&] { return determinism(sweep_text); });
  std::printf("%d of 7 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
