#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <utility>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/instance.hpp"
#include "mechlearn/learner.hpp"
#include "mechlearn/lp_oracle.hpp"
#include "mechlearn/mechanism.hpp"
#include "mechlearn/mechanism_io.hpp"
#include "mechlearn/myerson.hpp"
#include "mechlearn/sampling.hpp"

namespace mechlearn {

/// Worker count from MECHLEARN_WORKERS, else the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv("MECHLEARN_WORKERS")) {
    int w = std::atoi(env);
    if (w >= 1) return w;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, count) on up to `workers` threads. The first
/// exception (lowest index) is rethrown after all workers stop.
inline void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& job) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(count);
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min<int>(workers, static_cast<int>(count)); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          job(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

enum class SweepMode { bic, dsic, single_parameter };

inline SweepMode parse_sweep_mode(const std::string& s) {
  if (s == "bic") return SweepMode::bic;
  if (s == "dsic") return SweepMode::dsic;
  if (s == "single_parameter") return SweepMode::single_parameter;
  throw ConfigError("unknown mode '" + s + "' (expected bic, dsic or single_parameter)");
}

inline const char* to_string(SweepMode m) {
  switch (m) {
    case SweepMode::bic: return "bic";
    case SweepMode::dsic: return "dsic";
    case SweepMode::single_parameter: return "single_parameter";
  }
  return "?";
}

struct SweepConfig {
  Instance instance;
  SweepMode mode = SweepMode::bic;
  std::vector<int> sample_sizes;
  std::vector<std::uint64_t> seeds;
};

/// Instance fields plus "mode", "sample_sizes" and "seeds" (a list, or
/// {"start": a, "count": k}). The true prior is required.
inline SweepConfig parse_sweep_config(const nlohmann::json& j) {
  SweepConfig cfg{parse_instance(j), parse_sweep_mode(j.value("mode", std::string("bic"))), {}, {}};
  if (!cfg.instance.prior) throw ConfigError("sweep config needs a 'prior'");
  cfg.sample_sizes = detail::require<std::vector<int>>(j, "sample_sizes");
  if (cfg.sample_sizes.empty()) throw ConfigError("sample_sizes must be nonempty");
  for (int s : cfg.sample_sizes) {
    if (s < 1) throw ConfigError("sample sizes must be positive");
  }
  const auto& sj = j.contains("seeds") ? j.at("seeds") : throw ConfigError("config is missing 'seeds'");
  if (sj.is_array()) {
    cfg.seeds = sj.get<std::vector<std::uint64_t>>();
  } else if (sj.is_object()) {
    auto start = detail::require<std::uint64_t>(sj, "start");
    auto count = detail::require<std::uint64_t>(sj, "count");
    for (std::uint64_t s = 0; s < count; ++s) cfg.seeds.push_back(start + s);
  } else {
    throw ConfigError("seeds must be a list or {start, count}");
  }
  if (cfg.seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (cfg.mode == SweepMode::single_parameter && cfg.instance.m != 1) throw ConfigError("single_parameter mode needs m = 1");
  return cfg;
}

struct SweepRow {
  int s = 0;
  std::uint64_t seed = 0;
  double learned_revenue = 0.0;
  double benchmark_revenue = 0.0;
  double gap = 0.0;
  double bic_regret = 0.0;
  double dsic_regret = 0.0;
  double ir_slack = 0.0;
  double wall_seconds = 0.0;
};

struct SweepSummary {
  int s = 0;
  std::size_t seeds = 0;
  double mean_gap = 0.0;
  double se_gap = 0.0;
  double fraction_within_eps = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<SweepSummary> summary;
  double benchmark = 0.0;
  std::uint64_t config_hash = 0;
};

/// Exact optimum on a finite grid prior: the rational solver when the
/// instance is small enough for it, the floating-point LP otherwise.
inline double benchmark_revenue(const ProductPrior& prior, const Setting& setting, IcMode mode) {
  OracleProblem p{prior, setting, mode, 0.0};
  if (prior.support_domain().size() <= 16 && setting.space().size() <= 16) return to_double(brute_force_optimal(p));
  return solve_optimal(p).objective;
}

/// One learning run on fresh samples.
inline LearnedMechanism learn_for_mode(const SampleSet& samples, const Setting& setting, SweepMode mode) {
  switch (mode) {
    case SweepMode::bic: return learn_bic(samples, setting).learned;
    case SweepMode::dsic: return learn_dsic(samples, setting).learned;
    case SweepMode::single_parameter:
      return LearnedMechanism{learn_single_parameter(samples, setting.grid(), setting.space()), LearnMode::dsic, std::nullopt};
  }
  throw InternalError("unreachable sweep mode");
}

inline SweepResult run_sweep(const SweepConfig& cfg, int workers = worker_count()) {
  const auto& inst = cfg.instance;
  const auto& truth = *inst.prior;
  if (!is_grid_supported(truth, inst.grid)) {
    throw ConfigError("sweep benchmarks need a true prior supported on the grid; "
                      "use the eval subcommand's Monte-Carlo mode for other priors");
  }
  auto rounded = rounded_prior(truth, inst.grid);
  SweepResult out;
  out.config_hash = inst.config_hash();
  out.benchmark = benchmark_revenue(rounded, inst.setting, cfg.mode == SweepMode::dsic ? IcMode::dsic : IcMode::bic);
  struct Task {
    int s;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (int s : cfg.sample_sizes) {
    for (auto seed : cfg.seeds) tasks.push_back({s, seed});
  }
  std::sort(tasks.begin(), tasks.end(), [](const Task& a, const Task& b) { return std::tie(a.s, a.seed) < std::tie(b.s, b.seed); });
  out.rows.resize(tasks.size());
  parallel_for(tasks.size(), workers, [&](std::size_t i) {
    auto start = std::chrono::steady_clock::now();
    const auto& t = tasks[i];
    auto samples = sample_prior(truth, t.s, t.seed, inst.grid.h());
    auto learned = learn_for_mode(samples, inst.setting, cfg.mode);
    auto rep = regret_report(learned.inner, rounded, inst.setting, RegretScope::grid);
    SweepRow row;
    row.s = t.s;
    row.seed = t.seed;
    row.learned_revenue = to_double(revenue_on_true_prior(learned, inst.setting, truth));
    row.benchmark_revenue = out.benchmark;
    row.gap = out.benchmark - row.learned_revenue;
    row.bic_regret = rep.bic_regret;
    row.dsic_regret = rep.dsic_regret;
    row.ir_slack = rep.ir_slack;
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.rows[i] = row;
  });
  for (int s : cfg.sample_sizes) {
    if (std::any_of(out.summary.begin(), out.summary.end(), [&](const SweepSummary& x) { return x.s == s; })) continue;
    std::vector<double> gaps;
    for (const auto& r : out.rows) {
      if (r.s == s) gaps.push_back(r.gap);
    }
    SweepSummary sum;
    sum.s = s;
    sum.seeds = gaps.size();
    double mean = 0.0;
    for (double g : gaps) mean += g;
    mean /= static_cast<double>(gaps.size());
    double var = 0.0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    sum.mean_gap = mean;
    sum.se_gap = gaps.size() > 1 ? std::sqrt(var / static_cast<double>(gaps.size() - 1) / static_cast<double>(gaps.size())) : 0.0;
    std::size_t within = 0;
    for (double g : gaps) within += g <= inst.grid.epsilon() + 1e-12 ? 1 : 0;
    sum.fraction_within_eps = static_cast<double>(within) / static_cast<double>(gaps.size());
    out.summary.push_back(sum);
  }
  std::sort(out.summary.begin(), out.summary.end(), [](const SweepSummary& a, const SweepSummary& b) { return a.s < b.s; });
  return out;
}

inline void write_header_comment(std::ostream& os, std::uint64_t config_hash, const std::string& extra = {}) {
  os << "# config_hash=" << hex64(config_hash) << " tool_version=" << kToolVersion;
  if (!extra.empty()) os << ' ' << extra;
  os << '\n';
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  write_header_comment(os, r.config_hash);
  os << "S,seed,learned_revenue,benchmark_revenue,gap,bic_regret,dsic_regret,ir_slack\n";
  for (const auto& row : r.rows) {
    os << row.s << ',' << row.seed << ',' << format_double(row.learned_revenue) << ','
       << format_double(row.benchmark_revenue) << ',' << format_double(row.gap) << ',' << format_double(row.bic_regret)
       << ',' << format_double(row.dsic_regret) << ',' << format_double(row.ir_slack) << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, const SweepResult& r) {
  write_header_comment(os, r.config_hash);
  os << "S,seeds,mean_gap,se_gap,fraction_gap_within_eps\n";
  for (const auto& s : r.summary) {
    os << s.s << ',' << s.seeds << ',' << format_double(s.mean_gap) << ',' << format_double(s.se_gap) << ','
       << format_double(s.fraction_within_eps) << '\n';
  }
}

/// Wall times vary between runs, so they live in their own file.
inline void write_timings_csv(std::ostream& os, const SweepResult& r) {
  write_header_comment(os, r.config_hash);
  os << "S,seed,wall_seconds\n";
  for (const auto& row : r.rows) os << row.s << ',' << row.seed << ',' << format_double(row.wall_seconds) << '\n';
}

// ---------------------------------------------------------------------------
// Concentration of empirical product expectations

struct ConcentrationSetting {
  /// Independent coordinates; f sees one grid index per marginal.
  std::vector<DiscreteMarginal> marginals;
  std::function<double(std::span<const int>)> f;
  double f_max = 1.0;
  int samples = 1;
  double epsilon = 0.1;
  int trials = 1;
  std::uint64_t seed = 0;
};

struct ConcentrationResult {
  int trials = 0;
  int violations = 0;
  double frequency = 0.0;
  /// (4 H/eps) exp(-eps^2 S / (8 H^2)) with H = f_max.
  double bound = 0.0;
  /// Binomial standard error at p = min(bound, 1).
  double standard_error = 0.0;
  double max_deviation = 0.0;
};

inline double concentration_bound(double f_max, double eps, int samples) {
  return 4.0 * f_max / eps * std::exp(-eps * eps * samples / (8.0 * f_max * f_max));
}

/// Repeatedly draws S samples per marginal, forms the empirical product and
/// compares E f under it with E f under the true product, both exactly.
inline ConcentrationResult concentration_experiment(const ConcentrationSetting& cfg) {
  if (cfg.marginals.empty()) throw UsageError("concentration experiment needs at least one marginal");
  if (cfg.samples < 1 || cfg.trials < 1 || !(cfg.epsilon > 0.0) || !(cfg.f_max > 0.0)) {
    throw UsageError("concentration experiment needs S, trials, eps and f_max positive");
  }
  const auto K = cfg.marginals.size();
  const auto& grid = cfg.marginals.front().grid();
  std::vector<std::vector<int>> supports;
  for (const auto& mg : cfg.marginals) supports.push_back(mg.support());
  auto domain = ProfileDomain::product(1, static_cast<int>(K), grid.levels(), supports);
  if (domain.size() > 1'000'000) throw CapacityError("concentration support product is too large");
  // f and the true expectation, exactly.
  std::vector<Rational> fvals(domain.size());
  std::vector<std::vector<std::size_t>> positions(domain.size(), std::vector<std::size_t>(K));
  Rational truth = 0;
  std::vector<int> profile(K);
  for (std::size_t p = 0; p < domain.size(); ++p) {
    domain.profile_into(p, profile);
    double f = cfg.f(profile);
    if (!(f >= 0.0 && f <= cfg.f_max)) {
      throw UsageError("f = " + format_double(f) + " at a support profile lies outside [0, " + format_double(cfg.f_max) + "]");
    }
    fvals[p] = exact_rational(f);
    Rational w = 1;
    for (std::size_t c = 0; c < K; ++c) {
      positions[p][c] = *cfg.marginals[c].position(GridValue{profile[c]});
      w *= cfg.marginals[c].mass_at(positions[p][c]);
    }
    truth += w * fvals[p];
  }
  std::vector<std::vector<double>> cdfs;
  for (const auto& mg : cfg.marginals) {
    std::vector<double> cdf;
    Rational acc = 0;
    for (std::size_t k = 0; k < mg.support_size(); ++k) {
      acc += mg.mass_at(k);
      cdf.push_back(to_double(acc));
    }
    cdfs.push_back(std::move(cdf));
  }
  ConcentrationResult res;
  res.trials = cfg.trials;
  const Rational eps = exact_rational(cfg.epsilon);
  const Rational denom(boost::multiprecision::pow(boost::multiprecision::mpz_int(cfg.samples), static_cast<unsigned>(K)));
  std::vector<std::vector<long>> counts(K);
  for (int trial = 0; trial < cfg.trials; ++trial) {
    detail::Rng rng(detail::cell_seed(cfg.seed, static_cast<std::uint64_t>(trial)));
    for (std::size_t c = 0; c < K; ++c) {
      counts[c].assign(cdfs[c].size(), 0);
      for (int s = 0; s < cfg.samples; ++s) {
        double u = rng.uniform();
        auto it = std::upper_bound(cdfs[c].begin(), cdfs[c].end(), u);
        auto k = std::min<std::size_t>(static_cast<std::size_t>(it - cdfs[c].begin()), cdfs[c].size() - 1);
        ++counts[c][k];
      }
    }
    Rational emp = 0;
    for (std::size_t p = 0; p < domain.size(); ++p) {
      bool zero = false;
      boost::multiprecision::mpz_int wz = 1;
      for (std::size_t c = 0; c < K && !zero; ++c) {
        long cnt = counts[c][positions[p][c]];
        if (cnt == 0) zero = true;
        wz *= cnt;
      }
      if (!zero) emp += Rational(wz) * fvals[p];
    }
    emp /= denom;
    Rational dev = emp > truth ? Rational(emp - truth) : Rational(truth - emp);
    res.max_deviation = std::max(res.max_deviation, to_double(dev));
    if (dev > eps) ++res.violations;
  }
  res.frequency = static_cast<double>(res.violations) / cfg.trials;
  res.bound = concentration_bound(cfg.f_max, cfg.epsilon, cfg.samples);
  const double p = std::min(res.bound, 1.0);
  res.standard_error = std::sqrt(p * (1.0 - p) / cfg.trials);
  return res;
}

/// Named test functions on profiles of grid indices, with their natural
/// upper bounds. "second_price" is the revenue of a second-price auction
/// among the coordinates.
inline std::pair<std::function<double(std::span<const int>)>, double> concentration_function(const nlohmann::json& j,
                                                                                           const GridSpec& grid,
                                                                                           std::size_t coords) {
  const std::string kind = j.is_string() ? j.get<std::string>() : detail::require<std::string>(j, "kind");
  const double h = grid.h();
  if (kind == "constant") {
    const double c = detail::require<double>(j, "value");
    return {[c](std::span<const int>) { return c; }, c > 0.0 ? c : 1.0};
  }
  if (kind == "sum") {
    return {[grid](std::span<const int> p) {
              double s = 0.0;
              for (int g : p) s += grid.value(g);
              return s;
            },
            h * static_cast<double>(coords)};
  }
  if (kind == "max") {
    return {[grid](std::span<const int> p) { return grid.value(*std::max_element(p.begin(), p.end())); }, h};
  }
  if (kind == "threshold") {
    const double t = detail::require<double>(j, "t");
    return {[grid, t](std::span<const int> p) { return grid.value(*std::max_element(p.begin(), p.end())) >= t ? 1.0 : 0.0; },
            1.0};
  }
  if (kind == "second_price") {
    if (coords < 2) throw ConfigError("second_price needs at least two marginals");
    return {[grid](std::span<const int> p) {
              std::vector<int> v(p.begin(), p.end());
              std::nth_element(v.begin(), v.begin() + 1, v.end(), std::greater<>());
              return grid.value(v[1]);
            },
            h};
  }
  throw ConfigError("unknown concentration function '" + kind + "'");
}

/// {"grid_epsilon", "H", "marginals": [family...], "f", "f_max"?, "S",
/// "epsilon", "trials"}. Marginals must be supported on the grid.
inline ConcentrationSetting parse_concentration_config(const nlohmann::json& j, std::uint64_t seed) {
  if (!j.is_object()) throw ConfigError("concentration config must be a JSON object");
  std::optional<GridSpec> grid;
  try {
    grid.emplace(detail::require<double>(j, "grid_epsilon"), detail::require<double>(j, "H"));
  } catch (const ConfigError&) {
    throw;
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  if (!j.contains("marginals") || !j.at("marginals").is_array()) throw ConfigError("config needs a 'marginals' array");
  ConcentrationSetting cfg;
  for (const auto& mj : j.at("marginals")) {
    auto family = parse_prior_family(mj, grid->h());
    PriorConfig one{1, 1, {family}};
    if (!is_grid_supported(one, *grid)) throw ConfigError("concentration marginals must be supported on the grid");
    cfg.marginals.push_back(rounded_marginal(family, *grid));
  }
  if (cfg.marginals.empty()) throw ConfigError("'marginals' is empty");
  auto [f, f_max] = concentration_function(j.value("f", nlohmann::json("sum")), *grid, cfg.marginals.size());
  cfg.f = std::move(f);
  cfg.f_max = j.contains("f_max") ? detail::require<double>(j, "f_max") : f_max;
  cfg.samples = detail::require<int>(j, "S");
  cfg.epsilon = detail::require<double>(j, "epsilon");
  cfg.trials = detail::require<int>(j, "trials");
  cfg.seed = seed;
  return cfg;
}

inline void write_concentration_csv(std::ostream& os, const ConcentrationSetting& cfg, const ConcentrationResult& r) {
  os << "S,epsilon,f_max,trials,violations,frequency,bound,standard_error,max_deviation\n";
  os << cfg.samples << ',' << format_double(cfg.epsilon) << ',' << format_double(cfg.f_max) << ',' << r.trials << ','
     << r.violations << ',' << format_double(r.frequency) << ',' << format_double(r.bound) << ','
     << format_double(r.standard_error) << ',' << format_double(r.max_deviation) << '\n';
}

// ---------------------------------------------------------------------------
// Monte-Carlo revenue

struct MonteCarloEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
  std::size_t draws = 0;
};

inline MonteCarloEstimate monte_carlo_revenue(const LearnedMechanism& mech, const Setting& setting,
                                              const PriorConfig& truth, int draws, std::uint64_t seed) {
  auto samples = sample_prior(truth, draws, seed, setting.grid().h());
  const auto cells = static_cast<std::size_t>(truth.n * truth.m);
  std::vector<double> bids(cells);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int t = 0; t < draws; ++t) {
    for (std::size_t c = 0; c < cells; ++c) bids[c] = samples.values[c * static_cast<std::size_t>(draws) + static_cast<std::size_t>(t)];
    auto lottery = evaluate_on_reals(mech, setting, bids);
    double pay = 0.0;
    for (int i = 0; i < truth.n; ++i) pay += expected_payment(lottery, i);
    sum += pay;
    sum_sq += pay * pay;
  }
  MonteCarloEstimate est;
  est.draws = static_cast<std::size_t>(draws);
  est.mean = sum / draws;
  double var = draws > 1 ? (sum_sq - draws * est.mean * est.mean) / (draws - 1) : 0.0;
  est.standard_error = std::sqrt(std::max(0.0, var) / draws);
  return est;
}

}  // namespace mechlearn
