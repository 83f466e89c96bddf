#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/rational.hpp"

namespace mechlearn {

/// Finitely many real points with exact rational weights. Covers point
/// masses, discrete-on-grid priors and mixtures of point masses.
struct PointMasses {
  std::vector<double> points;
  std::vector<Rational> weights;
};

struct UniformInterval {
  double low = 0.0;
  double high = 1.0;
};

/// Exponential with the given rate, conditioned on [low, high].
struct TruncatedExponential {
  double rate = 1.0;
  double low = 0.0;
  double high = 1.0;
};

using PriorFamily = std::variant<PointMasses, UniformInterval, TruncatedExponential>;

/// One ground-truth family per (bidder, parameter) cell, row-major.
struct PriorConfig {
  int n = 0;
  int m = 0;
  std::vector<PriorFamily> cells;

  const PriorFamily& cell(int i, int j) const { return cells.at(static_cast<std::size_t>(i * m + j)); }
};

/// n x m x s draws, values[(i*m + j)*s + t].
struct SampleSet {
  int n = 0;
  int m = 0;
  int s = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;

  std::span<const double> cell(int i, int j) const {
    return std::span<const double>(values).subspan(static_cast<std::size_t>((i * m + j) * s),
                                                   static_cast<std::size_t>(s));
  }

  bool operator==(const SampleSet&) const = default;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// mt19937_64's output sequence is fixed by the standard, and the uniform
/// draw uses 53 bits directly, so draws match on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t cell_seed(std::uint64_t seed, std::uint64_t cell) {
  std::uint64_t state = seed ^ (0xD1B54A32D192ED03ULL * (cell + 1));
  return splitmix64(state);
}

inline std::vector<double> cumulative(const std::vector<Rational>& weights) {
  std::vector<double> cdf;
  cdf.reserve(weights.size());
  Rational acc = 0;
  for (const auto& w : weights) {
    acc += w;
    cdf.push_back(to_double(acc));
  }
  return cdf;
}

}  // namespace detail

inline void validate_family(const PriorFamily& family, double h) {
  std::visit(
      [h](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, PointMasses>) {
          if (f.points.empty() || f.points.size() != f.weights.size()) {
            throw ConfigError("discrete prior needs matching nonempty points and weights");
          }
          Rational total = 0;
          for (std::size_t i = 0; i < f.points.size(); ++i) {
            if (!(f.points[i] >= 0.0 && f.points[i] <= h)) {
              throw ConfigError("discrete prior point " + format_double(f.points[i]) + " lies outside [0, H]");
            }
            if (f.weights[i] < 0) throw ConfigError("discrete prior has a negative weight");
            total += f.weights[i];
          }
          if (total != 1) throw ConfigError("discrete prior weights must sum to 1");
        } else if constexpr (std::is_same_v<T, UniformInterval>) {
          if (!(f.low >= 0.0 && f.low < f.high && f.high <= h)) {
            throw ConfigError("uniform prior needs 0 <= low < high <= H");
          }
        } else {
          if (!(f.rate > 0.0) || !(f.low >= 0.0 && f.low < f.high && f.high <= h)) {
            throw ConfigError("truncated exponential needs rate > 0 and 0 <= low < high <= H");
          }
        }
      },
      family);
}

inline bool is_discrete(const PriorConfig& config) {
  return std::all_of(config.cells.begin(), config.cells.end(),
                     [](const PriorFamily& f) { return std::holds_alternative<PointMasses>(f); });
}

/// True when every cell is a finite distribution whose points are grid points.
inline bool is_grid_supported(const PriorConfig& config, const GridSpec& grid) {
  for (const auto& f : config.cells) {
    const auto* pm = std::get_if<PointMasses>(&f);
    if (pm == nullptr) return false;
    for (double p : pm->points) {
      if (grid.value(grid.round_down(p)) != p) return false;
    }
  }
  return true;
}

/// Draws s i.i.d. values for every cell. Each cell owns a generator derived
/// from (seed, cell), so the draws for a cell do not depend on the others.
inline SampleSet sample_prior(const PriorConfig& config, int s, std::uint64_t seed, double h) {
  if (s < 1) throw UsageError("need at least one sample per cell");
  if (config.n < 1 || config.m < 1 || config.cells.size() != static_cast<std::size_t>(config.n * config.m)) {
    throw ConfigError("prior config needs n*m cells");
  }
  SampleSet out{config.n, config.m, s, seed, {}};
  out.values.reserve(config.cells.size() * static_cast<std::size_t>(s));
  for (std::size_t c = 0; c < config.cells.size(); ++c) {
    validate_family(config.cells[c], h);
    detail::Rng rng(detail::cell_seed(seed, c));
    std::visit(
        [&](const auto& f) {
          using T = std::decay_t<decltype(f)>;
          if constexpr (std::is_same_v<T, PointMasses>) {
            auto cdf = detail::cumulative(f.weights);
            for (int t = 0; t < s; ++t) {
              double u = rng.uniform();
              auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
              std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
              while (f.weights[idx] == 0 && idx > 0) --idx;
              out.values.push_back(f.points[idx]);
            }
          } else if constexpr (std::is_same_v<T, UniformInterval>) {
            for (int t = 0; t < s; ++t) {
              out.values.push_back(std::min(f.high, f.low + (f.high - f.low) * rng.uniform()));
            }
          } else {
            const double mass = -std::expm1(-f.rate * (f.high - f.low));
            for (int t = 0; t < s; ++t) {
              double x = f.low - std::log1p(-rng.uniform() * mass) / f.rate;
              out.values.push_back(std::clamp(x, f.low, f.high));
            }
          }
        },
        config.cells[c]);
  }
  return out;
}

/// Empirical product prior of a sample set: every cell rounded down and
/// weighted uniformly.
inline ProductPrior empirical_prior(const SampleSet& samples, const GridSpec& grid) {
  std::vector<DiscreteMarginal> marginals;
  marginals.reserve(static_cast<std::size_t>(samples.n * samples.m));
  for (int i = 0; i < samples.n; ++i) {
    for (int j = 0; j < samples.m; ++j) marginals.push_back(empirical_marginal(samples.cell(i, j), grid));
  }
  return ProductPrior(samples.n, samples.m, std::move(marginals));
}

/// The distribution of the rounded-down value of a cell. Exact for finite
/// families; real-valued masses for the continuous ones.
inline DiscreteMarginal rounded_marginal(const PriorFamily& family, const GridSpec& grid) {
  validate_family(family, grid.h());
  if (const auto* pm = std::get_if<PointMasses>(&family)) {
    std::map<int, Rational> mass;
    for (std::size_t i = 0; i < pm->points.size(); ++i) mass[grid.round_down(pm->points[i]).index] += pm->weights[i];
    return DiscreteMarginal(grid, mass);
  }
  auto cdf = [&](double x) -> double {
    if (const auto* u = std::get_if<UniformInterval>(&family)) {
      return std::clamp((x - u->low) / (u->high - u->low), 0.0, 1.0);
    }
    const auto& e = std::get<TruncatedExponential>(family);
    if (x <= e.low) return 0.0;
    if (x >= e.high) return 1.0;
    return std::expm1(-e.rate * (x - e.low)) / std::expm1(-e.rate * (e.high - e.low));
  };
  std::map<int, double> mass;
  for (int g = 0; g <= grid.top_index(); ++g) {
    double hi = g == grid.top_index() ? 1.0 : cdf(grid.value(g + 1));
    double p = hi - cdf(grid.value(g));
    if (p > 0.0) mass[g] = p;
  }
  double total = 0.0;
  for (const auto& [g, p] : mass) total += p;
  for (auto& [g, p] : mass) p /= total;
  std::map<int, Rational> exact;
  Rational exact_total = 0;
  for (const auto& [g, p] : mass) {
    exact[g] = exact_rational(p);
    exact_total += exact[g];
  }
  for (auto& [g, p] : exact) p /= exact_total;
  return DiscreteMarginal(grid, exact);
}

inline ProductPrior rounded_prior(const PriorConfig& config, const GridSpec& grid) {
  std::vector<DiscreteMarginal> marginals;
  for (const auto& f : config.cells) marginals.push_back(rounded_marginal(f, grid));
  return ProductPrior(config.n, config.m, std::move(marginals));
}

// ---------------------------------------------------------------------------
// JSON and CSV

namespace detail {

inline Rational json_rational(const nlohmann::json& j) {
  if (j.is_string()) return parse_rational(j.get<std::string>());
  if (j.is_number_integer()) return Rational(j.get<std::int64_t>());
  if (j.is_number()) return parse_rational(format_double(j.get<double>()));
  throw ConfigError("expected a number or a rational string, got " + j.dump());
}

inline double json_double(const nlohmann::json& params, const char* key) {
  if (!params.contains(key) || !params.at(key).is_number()) {
    throw ConfigError(std::string("prior parameter '") + key + "' must be a number");
  }
  return params.at(key).get<double>();
}

}  // namespace detail

/// {"family": "...", "params": {...}}. Weights may be numbers or exact
/// strings such as "1/3"; they are normalized to sum to one.
inline PriorFamily parse_prior_family(const nlohmann::json& j, double h) {
  if (!j.is_object() || !j.contains("family") || !j.at("family").is_string()) {
    throw ConfigError("prior cell must be an object with a 'family' string");
  }
  const std::string family = j.at("family").get<std::string>();
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  if (family == "point_mass") {
    PointMasses pm{{detail::json_double(params, "value")}, {Rational(1)}};
    validate_family(pm, h);
    return pm;
  }
  if (family == "discrete" || family == "mixture") {
    const char* pts_key = params.contains("points") ? "points" : "values";
    if (!params.contains(pts_key) || !params.at(pts_key).is_array() || !params.contains("weights") ||
        !params.at("weights").is_array()) {
      throw ConfigError("discrete prior needs 'points' (or 'values') and 'weights' arrays");
    }
    PointMasses pm;
    for (const auto& p : params.at(pts_key)) {
      if (!p.is_number()) throw ConfigError("discrete prior points must be numbers");
      pm.points.push_back(p.get<double>());
    }
    Rational total = 0;
    for (const auto& w : params.at("weights")) {
      pm.weights.push_back(detail::json_rational(w));
      total += pm.weights.back();
    }
    if (total <= 0) throw ConfigError("discrete prior weights must have a positive sum");
    for (auto& w : pm.weights) w /= total;
    validate_family(pm, h);
    return pm;
  }
  if (family == "uniform") {
    UniformInterval u{detail::json_double(params, "low"), detail::json_double(params, "high")};
    validate_family(u, h);
    return u;
  }
  if (family == "truncated_exponential") {
    TruncatedExponential e{detail::json_double(params, "rate"), params.value("low", 0.0), params.value("high", h)};
    validate_family(e, h);
    return e;
  }
  throw ConfigError("unsupported prior family '" + family + "'");
}

/// Either one cell object (broadcast to every cell), an array of n cells
/// (broadcast across parameters), or an n x m array of arrays.
inline PriorConfig parse_prior_config(const nlohmann::json& j, int n, int m, double h) {
  PriorConfig cfg{n, m, {}};
  if (j.is_object()) {
    auto f = parse_prior_family(j, h);
    cfg.cells.assign(static_cast<std::size_t>(n * m), f);
    return cfg;
  }
  if (!j.is_array() || j.size() != static_cast<std::size_t>(n)) {
    throw ConfigError("prior must be one cell object or an array with one entry per bidder");
  }
  for (const auto& row : j) {
    if (row.is_object()) {
      auto f = parse_prior_family(row, h);
      for (int t = 0; t < m; ++t) cfg.cells.push_back(f);
    } else if (row.is_array() && row.size() == static_cast<std::size_t>(m)) {
      for (const auto& c : row) cfg.cells.push_back(parse_prior_family(c, h));
    } else {
      throw ConfigError("each bidder's prior must be a cell object or an array of m cells");
    }
  }
  return cfg;
}

inline nlohmann::json prior_family_to_json(const PriorFamily& family) {
  return std::visit(
      [](const auto& f) -> nlohmann::json {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, PointMasses>) {
          nlohmann::json w = nlohmann::json::array();
          for (const auto& x : f.weights) w.push_back(format_rational(x));
          return {{"family", "discrete"}, {"params", {{"points", f.points}, {"weights", w}}}};
        } else if constexpr (std::is_same_v<T, UniformInterval>) {
          return {{"family", "uniform"}, {"params", {{"low", f.low}, {"high", f.high}}}};
        } else {
          return {{"family", "truncated_exponential"},
                  {"params", {{"rate", f.rate}, {"low", f.low}, {"high", f.high}}}};
        }
      },
      family);
}

/// Columns: bidder, parameter, sample_index, value.
inline void write_samples_csv(std::ostream& os, const SampleSet& samples) {
  os << "bidder,parameter,sample_index,value\n";
  for (int i = 0; i < samples.n; ++i) {
    for (int j = 0; j < samples.m; ++j) {
      auto cell = samples.cell(i, j);
      for (int t = 0; t < samples.s; ++t) {
        os << i << ',' << j << ',' << t << ',' << format_double(cell[static_cast<std::size_t>(t)]) << '\n';
      }
    }
  }
}

inline SampleSet read_samples_csv(std::istream& is, double h) {
  std::string line;
  if (!std::getline(is, line) || line != "bidder,parameter,sample_index,value") {
    throw ParseError("samples CSV line 1: expected header 'bidder,parameter,sample_index,value'");
  }
  struct Row {
    int i, j, t;
    double v;
  };
  std::vector<Row> rows;
  int n = 0, m = 0, s = 0;
  for (int lineno = 2; std::getline(is, line); ++lineno) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c, d;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',') ||
        !std::getline(ss, d)) {
      throw ParseError("samples CSV line " + std::to_string(lineno) + ": expected 4 fields");
    }
    Row r{};
    try {
      r = Row{std::stoi(a), std::stoi(b), std::stoi(c), parse_double(d)};
    } catch (const std::exception&) {
      throw ParseError("samples CSV line " + std::to_string(lineno) + ": malformed field");
    }
    if (r.i < 0 || r.j < 0 || r.t < 0 || !(r.v >= 0.0 && r.v <= h)) {
      throw ParseError("samples CSV line " + std::to_string(lineno) + ": value or index out of range");
    }
    n = std::max(n, r.i + 1);
    m = std::max(m, r.j + 1);
    s = std::max(s, r.t + 1);
    rows.push_back(r);
  }
  if (rows.size() != static_cast<std::size_t>(n) * m * s || rows.empty()) {
    throw ParseError("samples CSV must hold exactly one value per (bidder, parameter, sample_index)");
  }
  SampleSet out{n, m, s, 0, std::vector<double>(rows.size(), -1.0)};
  for (const auto& r : rows) {
    auto& slot = out.values[static_cast<std::size_t>((r.i * m + r.j) * s + r.t)];
    if (slot >= 0.0) throw ParseError("samples CSV has a duplicate entry");
    slot = r.v;
  }
  return out;
}

}  // namespace mechlearn
