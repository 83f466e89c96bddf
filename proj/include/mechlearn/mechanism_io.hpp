#pragma once

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "mechlearn/errors.hpp"
#include "mechlearn/learner.hpp"
#include "mechlearn/mechanism.hpp"
#include "mechlearn/rational.hpp"

namespace mechlearn {

inline constexpr const char* kToolVersion = "mechlearn 1.0.0";

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// FNV-1a of a string, used for config hashes.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// A mechanism file: the table plus everything needed to interpret it.
struct MechanismFile {
  MechanismTable table;
  std::string mode = "table";
  std::uint64_t space_hash = 0;
  std::optional<Menu> menu;
  /// Free-form provenance (config hash, seed, declared bounds...).
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json lottery_to_json(const Lottery& lottery) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : lottery) {
    nlohmann::json pays = nlohmann::json::array();
    for (double p : e.payments) pays.push_back(format_double(p));
    out.push_back({{"p", format_double(e.probability)}, {"outcome", e.outcome}, {"payments", pays}});
  }
  return out;
}

inline Lottery lottery_from_json(const nlohmann::json& j, std::size_t n, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": lottery must be an array");
  Lottery out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("p") || !e.contains("outcome") || !e.contains("payments")) {
      throw ParseError(where + ": lottery entries need p, outcome and payments");
    }
    LotteryEntry le;
    try {
      le.probability = parse_double(e.at("p").get<std::string>());
      le.outcome = e.at("outcome").get<int>();
      for (const auto& p : e.at("payments")) le.payments.push_back(parse_double(p.get<std::string>()));
    } catch (const nlohmann::json::exception&) {
      throw ParseError(where + ": malformed lottery entry");
    } catch (const ParseError& err) {
      throw ParseError(where + ": " + err.what());
    }
    if (le.payments.size() != n) throw ParseError(where + ": payment vector has the wrong length");
    out.push_back(std::move(le));
  }
  return out;
}

}  // namespace detail

inline nlohmann::json mechanism_to_json(const MechanismFile& file) {
  const auto& t = file.table;
  const auto& d = t.domain();
  nlohmann::json domain;
  if (d.is_full() && !d.empty()) {
    domain = {{"full", true}};
  } else {
    nlohmann::json allowed = nlohmann::json::array();
    for (std::size_t c = 0; c < d.coordinates(); ++c) allowed.push_back(d.allowed(c));
    domain = {{"full", false}, {"allowed", allowed}};
  }
  nlohmann::json rows = nlohmann::json::array();
  std::vector<int> profile(d.coordinates());
  for (std::size_t r = 0; r < t.rows().size(); ++r) {
    d.profile_into(r, profile);
    rows.push_back({{"profile", profile}, {"lottery", detail::lottery_to_json(t.row(r))}});
  }
  nlohmann::json j = {
      {"format", "mechlearn-mechanism"},
      {"tool_version", kToolVersion},
      {"n", t.bidders()},
      {"m", t.params()},
      {"epsilon", format_double(t.grid().epsilon())},
      {"H", format_double(t.grid().h())},
      {"outcome_count", t.outcome_count()},
      {"outcome_space_hash", hex64(file.space_hash)},
      {"mode", file.mode},
      {"domain", domain},
      {"metadata", file.metadata},
      {"rows", rows},
  };
  if (file.menu) {
    nlohmann::json menu = nlohmann::json::array();
    for (const auto& l : file.menu->entries) menu.push_back(detail::lottery_to_json(l));
    j["menu"] = menu;
  }
  return j;
}

inline void write_mechanism(std::ostream& os, const MechanismFile& file) { os << mechanism_to_json(file).dump(1) << '\n'; }

inline MechanismFile mechanism_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", "") != "mechlearn-mechanism") {
      throw ParseError("not a mechanism file (missing format tag)");
    }
    const int n = j.at("n").get<int>();
    const int m = j.at("m").get<int>();
    GridSpec grid(parse_double(j.at("epsilon").get<std::string>()), parse_double(j.at("H").get<std::string>()));
    const auto outcomes = j.at("outcome_count").get<std::size_t>();
    const auto& dj = j.at("domain");
    ProfileDomain domain;
    if (dj.at("full").get<bool>()) {
      domain = ProfileDomain::full(n, m, grid.levels());
    } else {
      domain = ProfileDomain::product(n, m, grid.levels(), dj.at("allowed").get<std::vector<std::vector<int>>>());
    }
    const auto& rj = j.at("rows");
    if (!rj.is_array() || rj.size() != domain.size()) {
      throw ParseError("mechanism file has " + std::to_string(rj.size()) + " rows, domain needs " +
                       std::to_string(domain.size()));
    }
    std::vector<Lottery> rows;
    rows.reserve(rj.size());
    for (std::size_t r = 0; r < rj.size(); ++r) {
      const std::string where = "row " + std::to_string(r);
      auto profile = rj[r].at("profile").get<std::vector<int>>();
      if (profile != domain.profile_at(r)) throw ParseError(where + ": profile is out of order or outside the domain");
      rows.push_back(detail::lottery_from_json(rj[r].at("lottery"), static_cast<std::size_t>(n), where));
    }
    MechanismFile file{MechanismTable(grid, std::move(domain), outcomes, std::move(rows)), "table", 0, std::nullopt};
    file.mode = j.value("mode", "table");
    file.space_hash = std::stoull(j.at("outcome_space_hash").get<std::string>(), nullptr, 16);
    file.metadata = j.value("metadata", nlohmann::json::object());
    if (j.contains("menu")) {
      Menu menu;
      for (std::size_t e = 0; e < j.at("menu").size(); ++e) {
        menu.entries.push_back(detail::lottery_from_json(j.at("menu")[e], 1, "menu entry " + std::to_string(e)));
      }
      file.menu = std::move(menu);
    }
    return file;
  } catch (const ParseError&) {
    throw;
  } catch (const UsageError& e) {
    throw ParseError(std::string("invalid mechanism file: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed mechanism file: ") + e.what());
  } catch (const std::invalid_argument&) {
    throw ParseError("malformed mechanism file: bad outcome_space_hash");
  }
}

inline MechanismFile read_mechanism(std::istream& is) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("mechanism file is not valid JSON: ") + e.what());
  }
  return mechanism_from_json(j);
}

}  // namespace mechlearn
