#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mechlearn/errors.hpp"
#include "mechlearn/grid.hpp"
#include "mechlearn/mechanism.hpp"
#include "mechlearn/mechanism_io.hpp"
#include "mechlearn/outcome.hpp"
#include "mechlearn/sampling.hpp"
#include "mechlearn/valuation.hpp"

namespace mechlearn {

/// Everything that describes one auction environment in a config file.
struct Instance {
  int n = 0;
  int m = 0;
  GridSpec grid;
  Setting setting;
  std::optional<PriorConfig> prior;
  nlohmann::json source;

  std::uint64_t config_hash() const { return fnv1a(source.dump()); }
};

namespace detail {

template <class T>
T require(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("config is missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline OutcomeSpace parse_space(const nlohmann::json& j, int n, int m) {
  const std::string kind = j.is_string() ? j.get<std::string>() : detail::require<std::string>(j, "kind");
  if (kind == "multi_item") return enumerate_multi_item(n, j.is_object() ? j.value("items", m) : m);
  if (kind == "single_item") return single_item_space(n);
  if (kind == "single_parameter") {
    return single_parameter_space(n, detail::require<std::vector<std::vector<double>>>(j, "outcomes"));
  }
  if (kind == "custom") {
    const int columns = detail::require<int>(j, "columns");
    auto outcomes = detail::require<std::vector<std::vector<std::vector<double>>>>(j, "outcomes");
    std::vector<std::vector<double>> flat;
    for (const auto& o : outcomes) {
      if (o.size() != static_cast<std::size_t>(n)) throw ConfigError("custom outcomes need one allocation row per bidder");
      std::vector<double> row;
      for (const auto& r : o) row.insert(row.end(), r.begin(), r.end());
      flat.push_back(std::move(row));
    }
    try {
      return OutcomeSpace(OutcomeKind::custom, n, columns, std::move(flat));
    } catch (const UsageError& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("unknown outcome space kind '" + kind + "'");
}

inline ValuationModel parse_model(const nlohmann::json& j, int m, const GridSpec& grid) {
  const std::string tag = j.is_string() ? j.get<std::string>() : detail::require<std::string>(j, "model");
  if (tag == "additive") return ValuationModel::additive(m);
  if (tag == "unit_demand") return ValuationModel::unit_demand(m);
  if (tag == "additive_up_to_k") return ValuationModel::additive_up_to_k(m, detail::require<int>(j, "k"));
  if (tag == "paired_complements") return ValuationModel::paired_complements(m);
  if (tag == "custom") {
    try {
      return ValuationModel::custom_table(grid, m, detail::require<double>(j, "lipschitz"),
                                          detail::require<std::vector<std::vector<std::vector<double>>>>(j, "values"));
    } catch (const ConfigError&) {
      throw;
    } catch (const UsageError& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("unknown valuation model '" + tag + "'");
}

/// {"n", "m", "epsilon", "H", "space", "model", "prior"?}. space defaults
/// to multi_item and model to additive.
inline Instance parse_instance(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  const int n = detail::require<int>(j, "n");
  const int m = detail::require<int>(j, "m");
  if (n < 1 || m < 1) throw ConfigError("n and m must be positive");
  const double eps = detail::require<double>(j, "epsilon");
  const double h = detail::require<double>(j, "H");
  std::optional<GridSpec> grid;
  try {
    grid.emplace(eps, h);
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  auto space = parse_space(j.value("space", nlohmann::json("multi_item")), n, m);
  auto model = parse_model(j.value("model", nlohmann::json("additive")), m, *grid);
  try {
    model.check_space(space);
  } catch (const UsageError& e) {
    throw ConfigError(e.what());
  }
  Instance inst{n, m, *grid, Setting(std::move(space), std::move(model), *grid), std::nullopt, j};
  if (j.contains("prior")) inst.prior = parse_prior_config(j.at("prior"), n, m, h);
  return inst;
}

inline nlohmann::json read_json_file(std::istream& is, const std::string& what) {
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + " is not valid JSON: " + e.what());
  }
}

}  // namespace mechlearn
