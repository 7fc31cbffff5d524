#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "mgdr/casegen.hpp"
#include "mgdr/drjcc.hpp"
#include "mgdr/evolution.hpp"
#include "mgdr/harness.hpp"
#include "mgdr/io.hpp"

/// Command-line front end: flag parsing, file plumbing and experiment
/// orchestration.  All numerics live in the library headers; commands here
/// just wire flat files to library calls.
///
/// Exit codes: 0 ok, 1 usage/configuration, 2 infeasible, 3 data integrity.
namespace mgdr::cli {

namespace fs = std::filesystem;

constexpr int exit_ok = 0;
constexpr int exit_usage = 1;
constexpr int exit_infeasible = 2;
constexpr int exit_data = 3;

struct RunConfig {
  /// directory holding the conventional case bundle; fills any empty path below
  std::string case_dir;
  std::string topology;  // from,to,resistance_ohm CSV
  std::string assets;    // asset placement CSV
  std::string horizon;   // forecast CSV
  std::string params;    // case parameter JSON (weights, batteries, limits)
  std::string samples;   // fitting error samples CSV
  std::string heldout;   // held-out error samples CSV
  std::string moments;   // fitted moments JSON (alternative to `samples`)
  std::string schedule_file;
  std::string realized;  // realized error CSV for the rolling run
  std::string out_dir = ".";

  std::string method = "bonferroni";
  std::string set = "symmetric";
  double eps_joint = 0.05;
  double correlation = 0.0;
  /// "START:HOURS" measured in hours from the start of the horizon;
  /// "none" clears a window inherited from the case bundle
  std::string blackout;
  std::uint64_t seed = 2024;
  int threads = 1;
  evo::EvoConfig evo;
  conic::SolveOptions solve;

  // gen-case shape knobs
  int households = 10;
  int intervals = 96;
  double sigma_rel = 0.08;
  int fit_samples = 200;
  int heldout_days = 30;

  void resolve_paths() {
    auto fill = [&](std::string& p, const char* name) {
      if (p.empty() && !case_dir.empty()) p = case_dir + "/" + name;
    };
    fill(topology, "topology.csv");
    fill(assets, "assets.csv");
    fill(horizon, "horizon.csv");
    fill(params, "case.json");
    fill(samples, "fit_samples.csv");
    fill(heldout, "heldout.csv");
  }
};

namespace detail {

/// A required input path: named, present, readable.
inline void need(const std::string& path, const std::string& what) {
  if (path.empty())
    throw config_error("missing required input: " + what + " (pass --case or the explicit flag)");
  if (!fs::exists(path)) throw config_error(what + " not found: " + path);
}

inline std::optional<std::pair<int, int>> parse_blackout(const std::string& s, double dt_hours,
                                                         int intervals) {
  double start = 0, hours = 0;
  if (std::sscanf(s.c_str(), "%lf:%lf", &start, &hours) != 2)
    throw config_error("blackout must be START:HOURS, e.g. 4:14");
  const int lo = static_cast<int>(std::lround(start / dt_hours));
  const int hi = lo + static_cast<int>(std::lround(hours / dt_hours));
  if (lo < 0 || hi <= lo || hi > intervals)
    throw config_error("blackout window [" + std::to_string(lo) + ", " + std::to_string(hi) +
                       ") falls outside the " + std::to_string(intervals) + "-interval horizon");
  return std::make_pair(lo, hi);
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw config_error("cannot create output directory " + dir + ": " + ec.message());
}

inline std::string cell_file(const std::string& dir, const std::string& method,
                             const std::string& set, double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", eps);
  return dir + "/report_" + method + "_" + set + "_" + buf + ".json";
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Config file: JSON object whose keys mirror the long flags.  Parsed after
// the command line, so config values override flags.
// ---------------------------------------------------------------------------

inline void apply_config(RunConfig& c, const io::json& j) {
  if (!j.is_object()) throw config_error("config file must hold a JSON object");
  static const std::set<std::string> known{
      "case",    "topology", "assets",  "horizon",  "params",      "samples",
      "heldout", "moments",  "schedule", "realized", "out",        "method",
      "set",     "eps_joint", "correlation", "blackout", "seed",   "threads",
      "households", "intervals", "sigma_rel", "fit_samples", "heldout_days",
      "evo",     "solve"};
  for (const auto& [key, val] : j.items()) {
    (void)val;
    if (!known.count(key)) throw config_error("unknown config key '" + key + "'");
  }
  auto str = [&](const char* k, std::string& dst) {
    if (j.contains(k)) dst = j.at(k).get<std::string>();
  };
  auto num = [&](const char* k, double& dst) {
    if (j.contains(k)) dst = j.at(k).get<double>();
  };
  auto integer = [&](const auto& o, const char* k, int& dst) {
    if (o.contains(k)) dst = o.at(k).template get<int>();
  };
  str("case", c.case_dir);
  str("topology", c.topology);
  str("assets", c.assets);
  str("horizon", c.horizon);
  str("params", c.params);
  str("samples", c.samples);
  str("heldout", c.heldout);
  str("moments", c.moments);
  str("schedule", c.schedule_file);
  str("realized", c.realized);
  str("out", c.out_dir);
  str("method", c.method);
  str("set", c.set);
  num("eps_joint", c.eps_joint);
  num("correlation", c.correlation);
  str("blackout", c.blackout);
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  integer(j, "threads", c.threads);
  integer(j, "households", c.households);
  integer(j, "intervals", c.intervals);
  num("sigma_rel", c.sigma_rel);
  integer(j, "fit_samples", c.fit_samples);
  integer(j, "heldout_days", c.heldout_days);
  if (j.contains("evo")) {
    const auto& e = j.at("evo");
    integer(e, "population", c.evo.population);
    integer(e, "iterations", c.evo.max_iterations);
    if (e.contains("sigma")) c.evo.mutation_sigma = e.at("sigma").get<double>();
    if (e.contains("convergence")) c.evo.convergence_ratio = e.at("convergence").get<double>();
    if (e.contains("floor")) c.evo.eps_floor = e.at("floor").get<double>();
    if (e.contains("cap")) c.evo.eps_cap = e.at("cap").get<double>();
    integer(e, "restarts", c.evo.restarts);
    if (e.contains("inject_baseline")) c.evo.inject_baseline = e.at("inject_baseline").get<bool>();
  }
  if (j.contains("solve")) {
    const auto& s = j.at("solve");
    integer(s, "max_iterations", c.solve.max_iterations);
    if (s.contains("feas_tol")) c.solve.feas_tol = s.at("feas_tol").get<double>();
    if (s.contains("rel_gap_tol")) c.solve.rel_gap_tol = s.at("rel_gap_tol").get<double>();
  }
}

// ---------------------------------------------------------------------------
// Case assembly from a bundle on disk
// ---------------------------------------------------------------------------

struct LoadedCase {
  opf::CaseDef casedef;
  opf::HorizonData horizon;
};

inline LoadedCase load_case(const RunConfig& cfg) {
  detail::need(cfg.topology, "topology file");
  detail::need(cfg.assets, "asset placement file");
  detail::need(cfg.params, "case parameter file");
  detail::need(cfg.horizon, "horizon file");

  const auto topo = io::read_topology(cfg.topology);
  auto assets = io::read_assets(cfg.assets);
  const auto j = io::load_json(cfg.params);
  io::detail::check_version(j, "case");
  if (io::detail::req(j, "kind").get<std::string>() != "case")
    throw data_error(cfg.params + ": not a case parameter file");

  const double dt = io::detail::req(j, "dt_hours").get<double>();
  if (!(dt > 0)) throw data_error(cfg.params + ": dt_hours must be positive");
  const double v_base = io::detail::req(j, "v_base_volts").get<double>();

  int n_bus = topo.n_bus;
  for (const auto* v : {&assets.grid_bus, &assets.storage_bus, &assets.pv_bus, &assets.load_bus})
    for (int b : *v) n_bus = std::max(n_bus, b + 1);
  if (assets.grid_bus.size() != 1) throw data_error("expected exactly one grid connection");

  std::vector<opf::BatteryParams> batteries;
  for (const auto& b : io::detail::req(j, "batteries")) batteries.push_back(io::battery_from_json(b));

  const auto& pmax = io::detail::req(j, "p_grid_max_kw");
  opf::CaseDef c{net::Network(n_bus, assets.grid_bus.front(), topo.lines, v_base),
                 std::move(assets),
                 std::move(batteries),
                 io::weights_from_json(io::detail::req(j, "weights")),
                 io::detail::req(j, "v_min").get<double>(),
                 io::detail::req(j, "v_max").get<double>(),
                 pmax.is_null() ? std::numeric_limits<double>::infinity() : pmax.get<double>()};
  c.validate();

  opf::HorizonData h = io::read_horizon(cfg.horizon, c.assets, dt);
  const auto& bw = io::detail::req(j, "blackout");
  if (!bw.is_null()) {
    if (!bw.is_array() || bw.size() != 2) throw data_error(cfg.params + ": blackout must be [lo, hi]");
    h.blackout = std::make_pair(bw[0].get<int>(), bw[1].get<int>());
  }
  if (cfg.blackout == "none")
    h.blackout.reset();
  else if (!cfg.blackout.empty())
    h.blackout = detail::parse_blackout(cfg.blackout, dt, h.intervals());
  return {std::move(c), std::move(h)};
}

inline io::json case_params_json(const opf::CaseDef& c, double dt_hours,
                                 const std::optional<std::pair<int, int>>& blackout) {
  io::json batteries = io::json::array();
  for (const auto& b : c.batteries) batteries.push_back(io::battery_to_json(b));
  return {{"schema_version", io::schema_version},
          {"kind", "case"},
          {"dt_hours", dt_hours},
          {"v_base_volts", c.network.v_base()},
          {"v_min", c.v_min},
          {"v_max", c.v_max},
          {"p_grid_max_kw", std::isfinite(c.p_grid_max_kw) ? io::json(c.p_grid_max_kw)
                                                           : io::json(nullptr)},
          {"weights", io::weights_to_json(c.weights)},
          {"batteries", std::move(batteries)},
          {"blackout", blackout ? io::json{blackout->first, blackout->second} : io::json(nullptr)}};
}

// ---------------------------------------------------------------------------
// Rate allocation shared by schedule / rolling
// ---------------------------------------------------------------------------

struct RatePlan {
  drjcc::RateVector rates;
  std::optional<evo::EvoResult> evolution;
};

inline RatePlan make_rates(drjcc::Method m, const RunConfig& cfg, const opf::CaseDef& c,
                           const opf::HorizonData& h, const unc::ErrorMoments& moments,
                           unc::AmbiguitySet set) {
  const double sup = unc::domain_sup(set);
  if (!(cfg.eps_joint > 0) || cfg.eps_joint >= sup)
    throw config_error("eps_joint must lie in (0, " + std::to_string(sup) + ") for set '" +
                       std::string(unc::to_string(set)) + "'");
  switch (m) {
    case drjcc::Method::scc:
      return {drjcc::scc_rates(cfg.eps_joint, cfg.evo.eps_floor), std::nullopt};
    case drjcc::Method::bonferroni:
      return {drjcc::bonferroni_rates(cfg.eps_joint, cfg.evo.eps_floor), std::nullopt};
    case drjcc::Method::evolutionary: {
      evo::EvoConfig ec = cfg.evo;
      ec.seed = cfg.seed;
      ec.threads = cfg.threads;
      auto res = evo::optimize_rates(c, h, moments, set, cfg.eps_joint, ec, {}, cfg.solve);
      return {drjcc::custom_rates(res.best_rates, cfg.eps_joint, ec.eps_floor), std::move(res)};
    }
    default:
      throw config_error("method '" + cfg.method + "' does not allocate violation budgets");
  }
}

inline unc::ErrorMoments load_moments(const RunConfig& cfg, const opf::CaseDef& c) {
  if (!cfg.moments.empty()) {
    detail::need(cfg.moments, "moments file");
    return io::read_moments(cfg.moments);
  }
  detail::need(cfg.samples, "fitting sample file (or pass --moments)");
  const auto sf = io::read_samples(cfg.samples, &c.assets.pv_bus);
  return unc::estimate_moments(sf.samples, cfg.correlation);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_gen_case(const RunConfig& cfg) {
  casegen::GenConfig g;
  g.n_households = cfg.households;
  g.intervals = cfg.intervals;
  g.sigma_rel = cfg.sigma_rel;
  g.fit_samples = cfg.fit_samples;
  g.heldout_days = cfg.heldout_days;
  g.seed = cfg.seed;
  if (!cfg.blackout.empty() && cfg.blackout != "none")
    g.blackout = detail::parse_blackout(cfg.blackout, casegen::GenConfig::dt_hours, g.intervals);

  const auto gc = casegen::generate(g);
  detail::ensure_dir(cfg.out_dir);
  io::write_topology(cfg.out_dir + "/topology.csv", gc.lines);
  io::write_assets(cfg.out_dir + "/assets.csv", gc.casedef.assets);
  io::write_horizon(cfg.out_dir + "/horizon.csv", gc.casedef.assets, gc.horizon);
  io::write_samples(cfg.out_dir + "/fit_samples.csv", casegen::fit_samples(gc, g),
                    gc.casedef.assets.pv_bus);
  io::write_samples(cfg.out_dir + "/heldout.csv", casegen::heldout_days(gc, g),
                    gc.casedef.assets.pv_bus);
  io::save_json(cfg.out_dir + "/case.json",
                case_params_json(gc.casedef, casegen::GenConfig::dt_hours, gc.horizon.blackout));
  std::cout << "case bundle written to " << cfg.out_dir << ": " << g.n_households
            << " households, " << gc.casedef.network.n_bus() << " buses, " << g.intervals
            << " intervals\n";
  return exit_ok;
}

inline int cmd_fit(const RunConfig& cfg) {
  detail::need(cfg.samples, "sample file");
  const auto sf = io::read_samples(cfg.samples);
  const auto moments = unc::estimate_moments(sf.samples, cfg.correlation);
  detail::ensure_dir(cfg.out_dir);
  io::write_moments(cfg.out_dir + "/moments.json", moments);
  std::cout << "fitted " << moments.n_intervals() << " intervals x " << moments.n_units
            << " units -> " << cfg.out_dir << "/moments.json\n";
  return exit_ok;
}

inline int cmd_schedule(const RunConfig& cfg) {
  const auto m = drjcc::parse_method(cfg.method);
  auto [c, h] = load_case(cfg);
  detail::ensure_dir(cfg.out_dir);

  opf::Schedule sched;
  if (m == drjcc::Method::deterministic) {
    try {
      sched = opf::solve_deterministic(c, h, {}, cfg.solve);
    } catch (const opf::infeasible_error& e) {
      io::save_json(cfg.out_dir + "/infeasible.json",
                    {{"schema_version", io::schema_version},
                     {"kind", "infeasibility"},
                     {"message", e.what()},
                     {"implicated", e.implicated_rows()}});
      std::cerr << "infeasible: " << e.what() << '\n';
      return exit_infeasible;
    }
  } else {
    const auto set = unc::parse_ambiguity_set(cfg.set);
    const auto moments = load_moments(cfg, c);
    const auto plan = make_rates(m, cfg, c, h, moments, set);
    if (plan.evolution) {
      std::ofstream hist(cfg.out_dir + "/evo_history.csv");
      evo::write_history_csv(hist, plan.evolution->history);
      std::cout << "evolutionary search: baseline " << plan.evolution->baseline_cost << " -> best "
                << plan.evolution->best_cost << " over " << plan.evolution->restarts.size()
                << " restarts\n";
    }
    const auto sol = drjcc::solve_robust(c, h, moments, set, plan.rates, {}, cfg.solve);
    if (!sol.feasible()) {
      io::save_json(cfg.out_dir + "/infeasible.json",
                    {{"schema_version", io::schema_version},
                     {"kind", "infeasibility"},
                     {"message", "robust schedule infeasible"},
                     {"implicated", sol.implicated}});
      std::cerr << "infeasible: see " << cfg.out_dir << "/infeasible.json\n";
      return exit_infeasible;
    }
    io::save_json(cfg.out_dir + "/rates.json", io::rates_to_json(plan.rates));
    sched = sol.schedule;
  }
  io::save_json(cfg.out_dir + "/schedule.json", io::schedule_to_json(sched));
  std::cout << "objective " << sched.objective << ", duality gap " << sched.gap_rel << " -> "
            << cfg.out_dir << "/schedule.json\n";
  return exit_ok;
}

inline int cmd_simulate(const RunConfig& cfg) {
  auto [c, h] = load_case(cfg);
  detail::need(cfg.schedule_file, "schedule file");
  detail::need(cfg.heldout, "held-out sample file");
  const auto sched = io::schedule_from_json(io::load_json(cfg.schedule_file));
  const auto held = io::read_samples(cfg.heldout, &c.assets.pv_bus);
  if (!cfg.samples.empty() && fs::exists(cfg.samples)) {
    const auto fit = io::read_samples(cfg.samples, &c.assets.pv_bus);
    harness::check_disjoint(fit.samples, held.samples);
  }
  auto rep = harness::evaluate_schedule(c, sched.grid, held.samples, h.dt_hours);
  rep.method = cfg.method;
  rep.ambiguity = cfg.set;
  rep.eps_joint = cfg.eps_joint;
  detail::ensure_dir(cfg.out_dir);
  io::write_report(cfg.out_dir + "/report.json", rep);
  io::write_boxplot_csv(cfg.out_dir + "/report.csv", {rep});
  std::cout << "mean daily reliability " << rep.mean_reliability << "% over "
            << rep.daily_reliability.size() << " days -> " << cfg.out_dir << "/report.json\n";
  return exit_ok;
}

inline int cmd_benchmark(const RunConfig& cfg) {
  auto [c, h] = load_case(cfg);
  detail::need(cfg.samples, "fitting sample file");
  detail::need(cfg.heldout, "held-out sample file");
  const auto fit = io::read_samples(cfg.samples, &c.assets.pv_bus);
  const auto held = io::read_samples(cfg.heldout, &c.assets.pv_bus);

  harness::GridConfig grid;
  grid.correlation = cfg.correlation;
  grid.evo = cfg.evo;
  grid.evo.seed = cfg.seed;
  grid.evo.threads = 1;
  grid.solve = cfg.solve;
  grid.threads = cfg.threads;

  std::vector<std::string> status;
  const auto reports = harness::run_grid(c, h, fit.samples, held.samples, grid, &status);

  detail::ensure_dir(cfg.out_dir);
  std::vector<harness::ReliabilityReport> ok;
  int failed = 0;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (status[i] == "ok") {
      io::write_report(detail::cell_file(cfg.out_dir, reports[i].method, reports[i].ambiguity,
                                         reports[i].eps_joint),
                       reports[i]);
      ok.push_back(reports[i]);
    } else {
      ++failed;
    }
  }
  io::write_summary_csv(cfg.out_dir + "/summary.csv", reports, &status);
  io::write_boxplot_csv(cfg.out_dir + "/boxplot.csv", ok);
  std::cout << (reports.size() - static_cast<std::size_t>(failed)) << "/" << reports.size()
            << " cells ok -> " << cfg.out_dir << "/summary.csv\n";
  if (failed)
    for (std::size_t i = 0; i < status.size(); ++i)
      if (status[i] != "ok")
        std::cerr << "cell " << reports[i].method << "/" << reports[i].ambiguity << "/"
                  << reports[i].eps_joint << " failed: " << status[i] << '\n';
  return exit_ok;
}

inline int cmd_rolling(const RunConfig& cfg) {
  const auto m = drjcc::parse_method(cfg.method);
  auto [c, h] = load_case(cfg);

  harness::RollingConfig rc;
  rc.solve = cfg.solve;
  unc::ErrorMoments moments;
  if (m != drjcc::Method::deterministic) {
    rc.set = unc::parse_ambiguity_set(cfg.set);
    moments = load_moments(cfg, c);
    rc.rates = make_rates(m, cfg, c, h, moments, rc.set).rates;
    rc.moments = &moments;
  }
  if (!cfg.realized.empty()) {
    detail::need(cfg.realized, "realized error file");
    const auto rf = io::read_samples(cfg.realized, &c.assets.pv_bus);
    if (rf.samples.n_intervals() < h.intervals())
      throw data_error("realized error file covers fewer intervals than the horizon");
    Eigen::MatrixXd zeta(h.intervals(), rf.samples.n_units);
    for (int t = 0; t < h.intervals(); ++t)
      zeta.row(t) = rf.samples.by_interval[static_cast<std::size_t>(t)].front().transpose();
    rc.realized_error_kw = std::move(zeta);
  }

  const auto trace = harness::rolling_horizon_run(c, h, rc);
  detail::ensure_dir(cfg.out_dir);
  std::ofstream out(cfg.out_dir + "/rolling.csv");
  if (!out) throw data_error("cannot write " + cfg.out_dir + "/rolling.csv");
  const int n_sto = static_cast<int>(c.batteries.size());
  out << "t,resolved,p_grid_kw,objective";
  for (int s = 0; s < n_sto; ++s)
    out << ",p_discharge_" << s << ",p_charge_" << s << ",soc_after_kwh_" << s;
  out << '\n';
  for (const auto& st : trace.steps) {
    out << st.t << ',' << (st.resolved ? 1 : 0) << ',' << io::detail::fmt(st.p_grid) << ','
        << io::detail::fmt(st.objective);
    for (int s = 0; s < n_sto; ++s)
      out << ',' << io::detail::fmt(st.p_discharge[s]) << ',' << io::detail::fmt(st.p_charge[s])
          << ',' << io::detail::fmt(st.soc_after_kwh[s]);
    out << '\n';
  }
  std::cout << trace.steps.size() << " steps, " << trace.infeasible_steps
            << " infeasible re-solves -> " << cfg.out_dir << "/rolling.csv\n";
  return exit_ok;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv) {
  CLI::App app{"robust energy scheduling for a DC microgrid"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string config_path;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config; values override flags");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "root RNG seed");
  };
  auto add_case = [&](CLI::App* sub) {
    sub->add_option("--case", cfg.case_dir, "case bundle directory");
    sub->add_option("--topology", cfg.topology, "topology CSV");
    sub->add_option("--assets", cfg.assets, "asset placement CSV");
    sub->add_option("--horizon", cfg.horizon, "forecast CSV");
    sub->add_option("--params", cfg.params, "case parameter JSON");
    sub->add_option("--blackout", cfg.blackout,
                    "islanding window START:HOURS from horizon start, or 'none'");
  };
  auto add_robust = [&](CLI::App* sub) {
    sub->add_option("--method", cfg.method, "deterministic|scc|bonferroni|evolutionary");
    sub->add_option("--set", cfg.set, "symmetric|unimodal|unimodal_symmetric");
    sub->add_option("--eps-joint", cfg.eps_joint, "joint violation budget");
    sub->add_option("--samples", cfg.samples, "fitting sample CSV");
    sub->add_option("--moments", cfg.moments, "fitted moments JSON");
    sub->add_option("--correlation", cfg.correlation, "assumed cross-unit error correlation");
    sub->add_option("--threads", cfg.threads, "worker threads");
    sub->add_option("--restarts", cfg.evo.restarts, "evolutionary restarts");
    sub->add_option("--population", cfg.evo.population, "evolutionary population size");
    sub->add_option("--generations", cfg.evo.max_iterations, "evolutionary iteration cap");
    sub->add_option("--mutation-sigma", cfg.evo.mutation_sigma, "mutation bump deviation");
  };

  auto* gen = app.add_subcommand("gen-case", "generate a synthetic case bundle");
  add_common(gen);
  gen->add_option("--households", cfg.households, "number of households");
  gen->add_option("--intervals", cfg.intervals, "horizon length (quarter hours)");
  gen->add_option("--sigma-rel", cfg.sigma_rel, "forecast error st.dev. relative to forecast");
  gen->add_option("--fit-samples", cfg.fit_samples, "fitting samples to draw");
  gen->add_option("--heldout-days", cfg.heldout_days, "held-out days to draw");
  gen->add_option("--blackout", cfg.blackout, "islanding window START:HOURS, or 'none'");

  auto* fit = app.add_subcommand("fit", "estimate per-interval error moments");
  add_common(fit);
  fit->add_option("--samples", cfg.samples, "sample CSV");
  fit->add_option("--correlation", cfg.correlation, "assumed cross-unit error correlation");

  auto* sch = app.add_subcommand("schedule", "solve the day-ahead schedule");
  add_common(sch);
  add_case(sch);
  add_robust(sch);

  auto* sim = app.add_subcommand("simulate", "replay a schedule on held-out days");
  add_common(sim);
  add_case(sim);
  sim->add_option("--schedule", cfg.schedule_file, "schedule JSON to replay");
  sim->add_option("--heldout", cfg.heldout, "held-out sample CSV");
  sim->add_option("--samples", cfg.samples, "fitting sample CSV (overlap check)");
  sim->add_option("--method", cfg.method, "label recorded in the report");
  sim->add_option("--set", cfg.set, "label recorded in the report");
  sim->add_option("--eps-joint", cfg.eps_joint, "label recorded in the report");

  auto* bench = app.add_subcommand("benchmark", "full method x set x eps factorial grid");
  add_common(bench);
  add_case(bench);
  add_robust(bench);
  bench->add_option("--heldout", cfg.heldout, "held-out sample CSV");

  auto* roll = app.add_subcommand("rolling", "receding-horizon run with realized errors");
  add_common(roll);
  add_case(roll);
  add_robust(roll);
  roll->add_option("--realized", cfg.realized, "realized error CSV (first sample is used)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_usage;
  }

  try {
    if (!config_path.empty()) apply_config(cfg, io::load_json(config_path));
    cfg.resolve_paths();
    if (gen->parsed()) return cmd_gen_case(cfg);
    if (fit->parsed()) return cmd_fit(cfg);
    if (sch->parsed()) return cmd_schedule(cfg);
    if (sim->parsed()) return cmd_simulate(cfg);
    if (bench->parsed()) return cmd_benchmark(cfg);
    if (roll->parsed()) return cmd_rolling(cfg);
    return exit_usage;
  } catch (const opf::infeasible_error& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return exit_infeasible;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return exit_data;
  } catch (const config_error& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return exit_usage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_usage;
  }
}

}  // namespace mgdr::cli
