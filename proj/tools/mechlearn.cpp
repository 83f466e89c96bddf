#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "mechlearn/errors.hpp"
#include "mechlearn/experiments.hpp"
#include "mechlearn/instance.hpp"
#include "mechlearn/learner.hpp"
#include "mechlearn/lp_oracle.hpp"
#include "mechlearn/mechanism_io.hpp"
#include "mechlearn/myerson.hpp"

using namespace mechlearn;
using nlohmann::json;

namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open '" + path + "' for reading");
  return is;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open '" + path + "' for writing");
  return os;
}

Instance load_instance(const std::string& path) {
  auto is = open_in(path);
  return parse_instance(read_json_file(is, path));
}

const PriorConfig& require_prior(const Instance& inst, const std::string& path) {
  if (!inst.prior) throw ConfigError(path + " has no 'prior'");
  return *inst.prior;
}

MechanismFile load_mechanism(const std::string& path, const Instance& inst) {
  auto is = open_in(path);
  auto file = read_mechanism(is);
  if (file.space_hash != inst.setting.space().hash()) throw ConfigError(path + " was built for a different outcome space");
  if (!(file.table.grid() == inst.grid)) throw ConfigError(path + " was built for a different grid");
  return file;
}

LearnedMechanism as_learned(const MechanismFile& file) {
  LearnMode mode = file.mode == "single_bidder_ic" ? LearnMode::single_bidder_ic
                   : file.mode == "bic"            ? LearnMode::bic
                                                   : LearnMode::dsic;
  return LearnedMechanism{file.table, mode, file.menu};
}

double eps_slack(const Instance& inst, double factor) {
  return factor * inst.m * inst.setting.model().lipschitz() * inst.grid.epsilon();
}

/// Samples come from a CSV file or are drawn from the config prior.
struct SampleSource {
  std::string file;
  int count = 0;
  std::optional<std::uint64_t> seed;
  std::string samples_out;

  void add(CLI::App* app) {
    app->add_option("--samples", file, "sample CSV (bidder,parameter,sample_index,value)");
    app->add_option("-S,--sample-count", count, "draw this many samples per cell from the config prior");
    app->add_option("--seed", seed, "RNG seed (required when drawing samples)");
    app->add_option("--samples-out", samples_out, "write the samples used to this CSV");
  }

  SampleSet get(const Instance& inst, const std::string& config_path, json& meta) const {
    SampleSet samples;
    if (!file.empty()) {
      if (count > 0) throw ConfigError("give either --samples or --sample-count, not both");
      auto is = open_in(file);
      samples = read_samples_csv(is, inst.grid.h());
      meta["samples_file"] = std::filesystem::path(file).filename().string();
    } else {
      if (count < 1) throw ConfigError("need --samples or a positive --sample-count");
      if (!seed) throw ConfigError("--seed is required when drawing samples");
      samples = sample_prior(require_prior(inst, config_path), count, *seed, inst.grid.h());
      meta["seed"] = *seed;
    }
    meta["S"] = samples.s;
    if (!samples_out.empty()) {
      auto os = open_out(samples_out);
      write_samples_csv(os, samples);
    }
    return samples;
  }
};

void write_file(const std::string& path, const MechanismFile& file) {
  if (path.empty() || path == "-") {
    write_mechanism(std::cout, file);
  } else {
    auto os = open_out(path);
    write_mechanism(os, file);
  }
}

json report_to_json(const RegretReport& r) {
  auto w = [](const RegretWitness& x) {
    return json{{"bidder", x.bidder}, {"truth", x.truth}, {"report", x.report}, {"value", format_double(x.value)}};
  };
  return json{{"bic_regret", format_double(r.bic_regret)},
              {"dsic_regret", format_double(r.dsic_regret)},
              {"ir_slack", format_double(r.ir_slack)},
              {"bic_witness", w(r.bic_witness)},
              {"dsic_witness", w(r.dsic_witness)},
              {"ir_witness", w(r.ir_witness)}};
}

json declared(double bic_max, double dsic_max, double ir_min, const char* scope) {
  json d = {{"scope", scope}};
  if (bic_max < std::numeric_limits<double>::infinity()) d["bic_regret_max"] = format_double(bic_max);
  if (dsic_max < std::numeric_limits<double>::infinity()) d["dsic_regret_max"] = format_double(dsic_max);
  if (ir_min > -std::numeric_limits<double>::infinity()) d["ir_slack_min"] = format_double(ir_min);
  return d;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Learn approximately revenue-optimal auctions from samples."};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // learn-bic / learn-dsic / learn-single
  std::string config, out, lp_dump;
  SampleSource src;
  std::optional<double> nudge_eps;
  auto* learn_bic_cmd = app.add_subcommand("learn-bic", "learn a BIC mechanism from samples");
  auto* learn_dsic_cmd = app.add_subcommand("learn-dsic", "learn a DSIC mechanism from samples");
  auto* learn_single_cmd = app.add_subcommand("learn-single", "learn an exactly IC single-bidder menu from samples");
  for (auto* c : {learn_bic_cmd, learn_dsic_cmd, learn_single_cmd}) {
    c->add_option("--config", config, "instance JSON")->required();
    c->add_option("--out", out, "mechanism JSON (default stdout)");
    src.add(c);
  }
  learn_single_cmd->add_option("--nudge-eps", nudge_eps, "nudge slack (default m L eps)");

  // oracle
  std::string mode = "bic";
  double eta = 0.0;
  bool extend = false;
  auto* oracle_cmd = app.add_subcommand("oracle", "optimal mechanism for the rounded config prior");
  oracle_cmd->add_option("--config", config, "instance JSON with a prior")->required();
  oracle_cmd->add_option("--mode", mode, "bic or dsic")->check(CLI::IsMember({"bic", "dsic"}));
  oracle_cmd->add_option("--eta", eta, "DSIC slack");
  oracle_cmd->add_flag("--extend", extend, "extend the support mechanism to the full grid");
  oracle_cmd->add_option("--out", out, "mechanism JSON (default stdout)");
  for (auto* c : {learn_bic_cmd, learn_dsic_cmd, learn_single_cmd, oracle_cmd}) {
    c->add_option("--lp-dump", lp_dump, "write the LP in CPLEX LP format");
  }

  // myerson
  std::string virtuals_out;
  bool withhold = false;
  bool exact_prior = false;
  auto* myerson_cmd = app.add_subcommand("myerson", "Myerson auction for a single-parameter space");
  myerson_cmd->add_option("--config", config, "instance JSON")->required();
  myerson_cmd->add_option("--out", out, "mechanism JSON (default stdout)");
  myerson_cmd->add_option("--virtuals-out", virtuals_out, "ironed virtual values CSV (bidder 0)");
  myerson_cmd->add_flag("--withhold-on-ties", withhold, "break virtual-welfare ties toward allocating less");
  myerson_cmd->add_flag("--exact-prior", exact_prior, "use the rounded config prior instead of samples");
  src.add(myerson_cmd);

  // nudge
  std::string mech_path;
  double eps = 0.0;
  auto* nudge_cmd = app.add_subcommand("nudge", "scale a single-bidder menu's payments by 1 - sqrt(eps)");
  nudge_cmd->add_option("--config", config, "instance JSON")->required();
  nudge_cmd->add_option("--mech", mech_path, "single-bidder full-grid mechanism")->required();
  nudge_cmd->add_option("--eps", eps, "incentive slack of the input")->required();
  nudge_cmd->add_option("--out", out, "mechanism JSON (default stdout)");

  // sweep
  std::string out_dir = ".";
  auto* sweep_cmd = app.add_subcommand("sweep", "sample-size sweep against the exact benchmark");
  sweep_cmd->add_option("--config", config, "sweep JSON")->required();
  sweep_cmd->add_option("--out-dir", out_dir, "directory for sweep.csv, summary.csv and timings.csv");

  // concentrate
  std::optional<std::uint64_t> seed;
  auto* conc_cmd = app.add_subcommand("concentrate", "empirical-product concentration experiment");
  conc_cmd->add_option("--config", config, "concentration JSON")->required();
  conc_cmd->add_option("--seed", seed, "RNG seed")->required();
  conc_cmd->add_option("--out", out, "result CSV (default stdout)");

  // eval
  int mc_draws = 0;
  auto* eval_cmd = app.add_subcommand("eval", "revenue of a mechanism on the config prior");
  eval_cmd->add_option("--config", config, "instance JSON with a prior")->required();
  eval_cmd->add_option("--mech", mech_path, "mechanism JSON")->required();
  eval_cmd->add_option("--mc-draws", mc_draws, "also estimate by Monte Carlo with this many draws");
  eval_cmd->add_option("--seed", seed, "RNG seed for Monte Carlo");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "regret report; fails if a declared invariant is violated");
  verify_cmd->add_option("--mech", mech_path, "mechanism JSON")->required();
  verify_cmd->add_option("--prior,--config", config, "instance JSON with a prior")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  auto dump_stream = [&]() -> std::unique_ptr<std::ofstream> {
    if (lp_dump.empty()) return nullptr;
    return std::make_unique<std::ofstream>(open_out(lp_dump));
  };

  if (learn_bic_cmd->parsed() || learn_dsic_cmd->parsed() || learn_single_cmd->parsed()) {
    auto inst = load_instance(config);
    json meta = {{"config_hash", hex64(inst.config_hash())}};
    auto samples = src.get(inst, config, meta);
    auto dump = dump_stream();
    if (dump) {
      // The learners solve on the empirical prior; dump that LP separately.
      auto prior = empirical_prior(samples, inst.grid);
      const bool d = learn_dsic_cmd->parsed();
      solve_optimal({prior, inst.setting, d ? IcMode::dsic : IcMode::bic, d ? dsic_oracle_slack(inst.setting) : 0.0}, dump.get());
    }
    const char* tag = learn_bic_cmd->parsed() ? "bic" : learn_dsic_cmd->parsed() ? "dsic" : "single_bidder_ic";
    auto run = learn_bic_cmd->parsed()    ? learn_bic(samples, inst.setting)
               : learn_dsic_cmd->parsed() ? learn_dsic(samples, inst.setting)
                                          : learn_single_bidder_ic(samples, inst.setting, nudge_eps);
    MechanismFile file{run.learned.inner, tag, inst.setting.space().hash(), run.learned.menu, meta};
    if (learn_bic_cmd->parsed()) {
      // The true-prior BIC bound only holds with high probability: soft.
      file.metadata["declared"] = declared(kInf, kInf, -kInf, "grid");
      file.metadata["soft"] = {{"bic_regret_max", format_double(eps_slack(inst, 2.0))}};
    } else if (learn_dsic_cmd->parsed()) {
      file.metadata["declared"] = declared(kInf, eps_slack(inst, 4.0) + 1e-8, -1e-8, "grid");
    } else {
      file.metadata["nudge_eps"] = format_double(nudge_eps.value_or(single_bidder_real_slack(inst.setting)));
      file.metadata["declared"] = declared(1e-9, 1e-9, -1e-9, "grid");
    }
    write_file(out, file);
    return 0;
  }

  if (oracle_cmd->parsed()) {
    auto inst = load_instance(config);
    auto prior = rounded_prior(require_prior(inst, config), inst.grid);
    const IcMode m = mode == "dsic" ? IcMode::dsic : IcMode::bic;
    auto dump = dump_stream();
    auto sol = solve_optimal({prior, inst.setting, m, eta}, dump.get());
    json meta = {{"config_hash", hex64(inst.config_hash())}, {"objective", format_double(sol.objective)}};
    MechanismFile file{sol.mechanism, std::string("oracle_") + to_string(m), inst.setting.space().hash(), std::nullopt, meta};
    const double bic_max = m == IcMode::bic ? 1e-8 : kInf;
    const double dsic_max = m == IcMode::dsic ? eta + 1e-8 : kInf;
    file.metadata["declared"] = declared(bic_max, dsic_max, -1e-8, "support");
    if (extend) {
      if (m == IcMode::bic) {
        file.table = extend_bic(sol.mechanism, prior, inst.setting);
      } else {
        file.table = extend_dsic(sol.mechanism, inst.setting,
                                 check_weakly_downward_closed(inst.setting.space(), inst.setting.model(), inst.grid));
      }
    }
    std::cerr << "objective " << format_double(sol.objective) << '\n';
    write_file(out, file);
    return 0;
  }

  if (myerson_cmd->parsed()) {
    auto inst = load_instance(config);
    if (inst.m != 1) throw ConfigError("myerson needs m = 1");
    json meta = {{"config_hash", hex64(inst.config_hash())}};
    auto prior = [&] {
      if (exact_prior) return rounded_prior(require_prior(inst, config), inst.grid);
      return empirical_prior(src.get(inst, config, meta), inst.grid);
    }();
    auto auction = myerson_auction(prior, inst.setting.space(), !withhold);
    if (!virtuals_out.empty()) {
      auto os = open_out(virtuals_out);
      write_virtuals_csv(os, auction.virtuals().front());
    }
    MechanismFile file{myerson_table(auction, inst.grid, true), "myerson", inst.setting.space().hash(), std::nullopt, meta};
    file.metadata["declared"] = declared(kInf, 1e-9, -1e-9, "grid");
    write_file(out, file);
    return 0;
  }

  if (nudge_cmd->parsed()) {
    auto inst = load_instance(config);
    auto file = load_mechanism(mech_path, inst);
    auto menu = nudge_to_ic(file.menu ? *file.menu : mechanism_to_menu(file.table, inst.setting), eps);
    file.table = menu_table(menu, inst.setting);
    file.menu = menu;
    file.mode = "single_bidder_ic";
    file.metadata["nudge_eps"] = format_double(eps);
    file.metadata["declared"] = declared(1e-9, 1e-9, -1e-9, "grid");
    write_file(out, file);
    return 0;
  }

  if (sweep_cmd->parsed()) {
    auto is = open_in(config);
    auto cfg = parse_sweep_config(read_json_file(is, config));
    auto result = run_sweep(cfg);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    auto rows = open_out((dir / "sweep.csv").string());
    write_sweep_csv(rows, result);
    auto summary = open_out((dir / "summary.csv").string());
    write_summary_csv(summary, result);
    auto timings = open_out((dir / "timings.csv").string());
    write_timings_csv(timings, result);
    write_summary_csv(std::cout, result);
    return 0;
  }

  if (conc_cmd->parsed()) {
    auto is = open_in(config);
    auto j = read_json_file(is, config);
    auto cfg = parse_concentration_config(j, *seed);
    auto res = concentration_experiment(cfg);
    std::ostringstream os;
    write_header_comment(os, fnv1a(j.dump()), "seed=" + std::to_string(*seed));
    write_concentration_csv(os, cfg, res);
    if (out.empty() || out == "-") {
      std::cout << os.str();
    } else {
      auto f = open_out(out);
      f << os.str();
    }
    return 0;
  }

  if (eval_cmd->parsed()) {
    auto inst = load_instance(config);
    const auto& truth = require_prior(inst, config);
    auto file = load_mechanism(mech_path, inst);
    auto learned = as_learned(file);
    std::cout << "# config_hash=" << hex64(inst.config_hash()) << " tool_version=" << kToolVersion << '\n';
    if (is_discrete(truth)) {
      auto rev = revenue_on_true_prior(learned, inst.setting, truth);
      std::cout << "exact_revenue," << format_double(to_double(rev)) << '\n';
      std::cout << "exact_revenue_rational," << format_rational(rev) << '\n';
    } else if (mc_draws < 1) {
      throw ConfigError("the prior is continuous; exact revenue is unavailable, pass --mc-draws and --seed");
    }
    if (mc_draws > 0) {
      if (!seed) throw ConfigError("--seed is required with --mc-draws");
      auto est = monte_carlo_revenue(learned, inst.setting, truth, mc_draws, *seed);
      std::cout << "mc_revenue," << format_double(est.mean) << '\n';
      std::cout << "mc_standard_error," << format_double(est.standard_error) << '\n';
      std::cout << "mc_draws," << est.draws << '\n';
      std::cout << "seed," << *seed << '\n';
    }
    return 0;
  }

  if (verify_cmd->parsed()) {
    auto inst = load_instance(config);
    auto prior = rounded_prior(require_prior(inst, config), inst.grid);
    auto file = load_mechanism(mech_path, inst);
    const auto scope = file.table.domain().is_full() ? RegretScope::grid : RegretScope::support;
    auto report = regret_report(file.table, prior, inst.setting, scope);
    json out_j = report_to_json(report);
    out_j["scope"] = scope == RegretScope::grid ? "grid" : "support";
    std::cout << out_j.dump(1) << '\n';
    const auto& meta = file.metadata;
    bool ok = true;
    auto limit = [&](const json& obj, const char* key) -> std::optional<double> {
      if (!obj.is_object() || !obj.contains(key)) return std::nullopt;
      return parse_double(obj.at(key).get<std::string>());
    };
    const json decl = meta.value("declared", json::object());
    if (auto v = limit(decl, "bic_regret_max"); v && report.bic_regret > *v) {
      std::cerr << "violated: bic_regret " << format_double(report.bic_regret) << " > " << format_double(*v) << '\n';
      ok = false;
    }
    if (auto v = limit(decl, "dsic_regret_max"); v && report.dsic_regret > *v) {
      std::cerr << "violated: dsic_regret " << format_double(report.dsic_regret) << " > " << format_double(*v) << '\n';
      ok = false;
    }
    if (auto v = limit(decl, "ir_slack_min"); v && report.ir_slack < *v) {
      std::cerr << "violated: ir_slack " << format_double(report.ir_slack) << " < " << format_double(*v) << '\n';
      ok = false;
    }
    if (auto v = limit(meta.value("soft", json::object()), "bic_regret_max"); v && report.bic_regret > *v) {
      std::cerr << "warning: bic_regret " << format_double(report.bic_regret) << " exceeds the high-probability bound "
                << format_double(*v) << '\n';
    }
    return ok ? 0 : 3;
  }
  return 1;
}

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const CapacityError& e) {
    std::cerr << "capacity error: " << e.what() << '\n';
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 3;
  }
}
