#pragma once

/// Out-of-sample robustness testing.
///
/// A schedule is frozen, realized forecast errors are pushed through the
/// droop-response and linearized power-flow model, and each of the six
/// protected constraint families is checked in its realized form.  The same
/// machinery drives the factorial method/set/budget experiment grid and the
/// receding-horizon runs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mgdr/drjcc.hpp"
#include "mgdr/evolution.hpp"
#include "mgdr/network.hpp"
#include "mgdr/opf.hpp"
#include "mgdr/uncertainty.hpp"
#include "mgdr/util.hpp"

namespace mgdr {
namespace harness {

/// Realized check of the six families at one interval.
struct ReplayResult {
  std::array<bool, drjcc::n_families> ok{};
  Eigen::VectorXd voltage;      // realized per-unit bus voltages
  double response_total = 0.0;  // fleet droop response, kW

  bool all_ok() const {
    for (bool b : ok)
      if (!b) return false;
    return true;
  }
};

/// Replay one interval of a fixed schedule under realized PV errors `zeta`
/// (kW, one entry per PV unit; positive = generation shortfall).  Storage
/// responds with its scheduled droop share of a positive total error;
/// surplus errors are curtailed at the PV units and draw no response.
inline ReplayResult replay_interval(const opf::CaseDef& c, const opf::ScenarioSchedule& s, int t,
                                    const Eigen::VectorXd& zeta, double dt, double tol = 1e-6) {
  const int n_sto = static_cast<int>(c.assets.storage_bus.size());
  if (zeta.size() != static_cast<Eigen::Index>(c.assets.pv_bus.size()))
    throw data_error("replay: error vector size does not match the PV fleet");
  if (t < 0 || t >= s.pv_kw.rows()) throw data_error("replay: interval outside the schedule");

  ReplayResult r;
  r.ok.fill(true);
  const double shortfall = std::max(zeta.sum(), 0.0);
  for (int k = 0; k < n_sto; ++k) {
    const auto& b = c.batteries[static_cast<std::size_t>(k)];
    const double resp = s.dcoef(t, k) * shortfall;
    r.response_total += resp;
    // response must fit inside the procured reserve ...
    if (resp > s.reserve(t, k) + tol) r.ok[0] = false;
    // ... and inside the converter ratings on top of the scheduled dispatch
    if (s.p_discharge(t, k) + resp > b.p_discharge_max + tol) r.ok[1] = false;
    if (resp > b.p_charge_max + tol) r.ok[2] = false;
    // the stored energy must cover the realized draw above the floor
    if (s.soc_kwh(t, k) - dt * resp < b.soc_min * b.capacity_kwh - tol) r.ok[3] = false;
  }

  const Eigen::VectorXd inj = net::injected_power(
      c.assets, c.network.n_bus(), s.p_grid.row(t).transpose(), s.p_discharge.row(t).transpose(),
      s.p_charge.row(t).transpose(), s.dcoef.row(t).transpose(), s.pv_kw.row(t).transpose(), zeta,
      s.load_kw.row(t).transpose());
  r.voltage = c.network.voltages(inj);
  for (Eigen::Index b = 0; b < r.voltage.size(); ++b) {
    if (r.voltage[b] > c.v_max + tol) r.ok[4] = false;
    if (r.voltage[b] < c.v_min - tol) r.ok[5] = false;
  }
  return r;
}

/// Per-day percentage of intervals where every family held.  Rows of
/// `interval_ok` are simulated days, columns are intervals.
inline std::vector<double> daily_reliability(const Eigen::MatrixXi& interval_ok) {
  if (interval_ok.size() == 0) throw data_error("reliability asked of an empty flag table");
  std::vector<double> out(static_cast<std::size_t>(interval_ok.rows()));
  for (Eigen::Index d = 0; d < interval_ok.rows(); ++d) {
    double good = 0.0;
    for (Eigen::Index t = 0; t < interval_ok.cols(); ++t) good += interval_ok(d, t) != 0;
    out[static_cast<std::size_t>(d)] = 100.0 * good / static_cast<double>(interval_ok.cols());
  }
  return out;
}

/// Wilson score half-width for a binomial proportion estimate.
inline double wilson_halfwidth(double phat, double n, double z = 1.96) {
  if (n <= 0) throw config_error("sample count must be positive");
  const double z2 = z * z;
  return z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / (1.0 + z2 / n);
}

struct ReliabilityReport {
  std::string method;     // rate-allocation policy label
  std::string ambiguity;  // ambiguity-set label
  double eps_joint = 0.0;
  Eigen::MatrixXi interval_ok;             // days x T, 1 = all families held
  std::vector<double> daily_reliability;   // %
  double mean_reliability = 0.0;           // %
  std::array<long, drjcc::n_families> family_violations{};
};

/// Replay a grid-scenario schedule against held-out error days.
inline ReliabilityReport evaluate_schedule(const opf::CaseDef& c, const opf::ScenarioSchedule& s,
                                           const unc::ErrorSampleSet& heldout, double dt,
                                           double tol = 1e-6) {
  const int T = heldout.n_intervals();
  if (T == 0 || heldout.by_interval.empty())
    throw data_error("held-out sample set is empty");
  const std::size_t days = heldout.by_interval.front().size();
  for (const auto& iv : heldout.by_interval)
    if (iv.size() != days) throw data_error("held-out days differ across intervals");
  if (s.pv_kw.rows() < T) throw data_error("schedule shorter than the held-out horizon");

  ReliabilityReport rep;
  rep.interval_ok.resize(static_cast<Eigen::Index>(days), T);
  for (int t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < days; ++d) {
      const auto res = replay_interval(c, s, t, heldout.by_interval[static_cast<std::size_t>(t)][d],
                                       dt, tol);
      rep.interval_ok(static_cast<Eigen::Index>(d), t) = res.all_ok() ? 1 : 0;
      for (int f = 0; f < drjcc::n_families; ++f)
        if (!res.ok[static_cast<std::size_t>(f)]) ++rep.family_violations[static_cast<std::size_t>(f)];
    }
  }
  rep.daily_reliability = daily_reliability(rep.interval_ok);
  double m = 0.0;
  for (double v : rep.daily_reliability) m += v;
  rep.mean_reliability = m / static_cast<double>(rep.daily_reliability.size());
  return rep;
}

/// Reject held-out data containing any sample identical to a fitting sample.
inline void check_disjoint(const unc::ErrorSampleSet& fit, const unc::ErrorSampleSet& heldout) {
  if (fit.n_units != heldout.n_units) return;  // different fleets cannot overlap
  const int T = std::min(fit.n_intervals(), heldout.n_intervals());
  auto key = [](const Eigen::VectorXd& v) {
    return std::string(reinterpret_cast<const char*>(v.data()),
                       static_cast<std::size_t>(v.size()) * sizeof(double));
  };
  for (int t = 0; t < T; ++t) {
    std::set<std::string> seen;
    for (const auto& v : fit.by_interval[static_cast<std::size_t>(t)]) seen.insert(key(v));
    for (const auto& v : heldout.by_interval[static_cast<std::size_t>(t)]) {
      if (seen.count(key(v))) {
        std::ostringstream os;
        os << "held-out sample at interval " << t << " repeats a fitting sample";
        throw data_error(os.str());
      }
    }
  }
}

struct GridConfig {
  std::vector<drjcc::Method> methods{drjcc::Method::scc, drjcc::Method::bonferroni,
                                     drjcc::Method::evolutionary};
  std::vector<unc::AmbiguitySet> sets{unc::AmbiguitySet::symmetric, unc::AmbiguitySet::unimodal,
                                      unc::AmbiguitySet::unimodal_symmetric};
  std::vector<double> eps_list{0.05, 0.02, 0.01};
  double correlation = 0.0;     // cross-unit correlation assumed when fitting moments
  evo::EvoConfig evo;           // drives Method::evolutionary
  conic::SolveOptions solve;
  double replay_tol = 1e-6;
  int threads = 1;
};

/// Budgets for one cell of the factorial grid.
inline drjcc::RateVector rates_for_cell(drjcc::Method m, double eps_joint,
                                        const opf::CaseDef& c, const opf::HorizonData& h,
                                        const unc::ErrorMoments& moments, unc::AmbiguitySet set,
                                        const GridConfig& cfg) {
  switch (m) {
    case drjcc::Method::scc:
      return drjcc::scc_rates(eps_joint, cfg.evo.eps_floor);
    case drjcc::Method::bonferroni:
      return drjcc::bonferroni_rates(eps_joint, cfg.evo.eps_floor);
    case drjcc::Method::evolutionary: {
      auto r = evo::optimize_rates(c, h, moments, set, eps_joint, cfg.evo, {}, cfg.solve);
      return drjcc::custom_rates(r.best_rates, eps_joint, cfg.evo.eps_floor);
    }
    default:
      throw config_error("the deterministic method has no violation budgets");
  }
}

/// Full factorial experiment: fit moments on `fit`, schedule every
/// (method, set, eps) cell, replay each schedule on `heldout`.  With
/// `cell_status` supplied, a failing cell is recorded there ("ok" otherwise)
/// and the remaining cells still run; without it the first failure rethrows.
inline std::vector<ReliabilityReport> run_grid(const opf::CaseDef& c, const opf::HorizonData& h,
                                               const unc::ErrorSampleSet& fit,
                                               const unc::ErrorSampleSet& heldout,
                                               const GridConfig& cfg = {},
                                               std::vector<std::string>* cell_status = nullptr) {
  check_disjoint(fit, heldout);
  const unc::ErrorMoments moments = unc::estimate_moments(fit, cfg.correlation);

  struct Cell {
    drjcc::Method method;
    unc::AmbiguitySet set;
    double eps;
  };
  std::vector<Cell> cells;
  for (auto m : cfg.methods)
    for (auto s : cfg.sets)
      for (double e : cfg.eps_list) cells.push_back({m, s, e});

  std::vector<ReliabilityReport> reports(cells.size());
  std::vector<std::exception_ptr> errs(cells.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& cell = cells[i];
      try {
        const auto rates = rates_for_cell(cell.method, cell.eps, c, h, moments, cell.set, cfg);
        auto sol = drjcc::solve_robust(c, h, moments, cell.set, rates, {}, cfg.solve);
        if (!sol.feasible()) {
          std::ostringstream os;
          os << "cell " << drjcc::to_string(cell.method) << "/" << unc::to_string(cell.set)
             << "/" << cell.eps << " is infeasible";
          throw data_error(os.str());
        }
        auto rep = evaluate_schedule(c, sol.schedule.grid, heldout, h.dt_hours, cfg.replay_tol);
        rep.method = drjcc::to_string(cell.method);
        rep.ambiguity = unc::to_string(cell.set);
        rep.eps_joint = cell.eps;
        reports[i] = std::move(rep);
      } catch (...) {
        errs[i] = std::current_exception();
        reports[i].method = drjcc::to_string(cell.method);
        reports[i].ambiguity = unc::to_string(cell.set);
        reports[i].eps_joint = cell.eps;
      }
    }
  };
  const int nt = std::min<int>(cfg.threads, static_cast<int>(cells.size()));
  if (nt <= 1) {
    work(0, cells.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (cells.size() + static_cast<std::size_t>(nt) - 1) /
                              static_cast<std::size_t>(nt);
    for (int t = 0; t < nt; ++t) {
      const std::size_t b = static_cast<std::size_t>(t) * chunk;
      const std::size_t e = std::min(cells.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  if (cell_status) {
    cell_status->assign(cells.size(), "ok");
    for (std::size_t i = 0; i < errs.size(); ++i) {
      if (!errs[i]) continue;
      try {
        std::rethrow_exception(errs[i]);
      } catch (const std::exception& e) {
        (*cell_status)[i] = e.what();
      }
    }
  } else {
    for (auto& e : errs)
      if (e) std::rethrow_exception(e);
  }
  return reports;
}

/// One executed step of a receding-horizon run (grid-connected scenario).
struct RollingStep {
  int t = 0;
  bool resolved = false;  // fresh solve succeeded at this step
  double p_grid = 0.0;
  Eigen::VectorXd p_discharge, p_charge, reserve, dcoef;
  Eigen::VectorXd soc_after_kwh;
  double objective = 0.0;  // objective of the most recent successful solve
};

struct RollingTrace {
  std::vector<RollingStep> steps;
  Eigen::MatrixXd soc_kwh;  // (T+1) x n_sto realized trajectory
  int infeasible_steps = 0;
};

struct RollingConfig {
  const unc::ErrorMoments* moments = nullptr;  // enables the robust build
  unc::AmbiguitySet set = unc::AmbiguitySet::symmetric;
  drjcc::RateVector rates;
  Eigen::MatrixXd realized_error_kw;  // T x n_pv, defaults to zero
  conic::SolveOptions solve;
};

namespace detail {

/// Suffix [k, T) of a horizon; the blackout window is shifted and clipped.
inline opf::HorizonData slice_horizon(const opf::HorizonData& h, int k) {
  const int T = h.intervals();
  opf::HorizonData out;
  out.dt_hours = h.dt_hours;
  out.load_kw = h.load_kw.bottomRows(T - k);
  out.critical_kw = h.critical_kw.bottomRows(T - k);
  out.pv_kw = h.pv_kw.bottomRows(T - k);
  if (h.blackout) {
    const int lo = std::max(h.blackout->first - k, 0);
    const int hi = std::min(h.blackout->second - k, T - k);
    if (lo < hi) out.blackout = std::make_pair(lo, hi);
  }
  return out;
}

inline unc::ErrorMoments slice_moments(const unc::ErrorMoments& m, int k) {
  unc::ErrorMoments out;
  out.n_units = m.n_units;
  out.interval.assign(m.interval.begin() + k, m.interval.end());
  return out;
}

}  // namespace detail

/// Re-solve the schedule every interval with the realized state of charge
/// carried forward; execute each step's first interval.  An infeasible
/// re-solve is recorded and the previous schedule keeps steering until a
/// later solve succeeds again.
inline RollingTrace rolling_horizon_run(const opf::CaseDef& c, const opf::HorizonData& h,
                                        const RollingConfig& cfg = {}) {
  const int T = h.intervals();
  const int n_sto = static_cast<int>(c.assets.storage_bus.size());
  const int n_pv = static_cast<int>(c.assets.pv_bus.size());
  Eigen::MatrixXd zeta = cfg.realized_error_kw;
  if (zeta.size() == 0) zeta = Eigen::MatrixXd::Zero(T, n_pv);
  if (zeta.rows() != T || zeta.cols() != n_pv)
    throw data_error("realized error matrix must be intervals x PV units");
  if (cfg.moments && cfg.moments->n_intervals() < T)
    throw data_error("rolling run needs moments for every interval");

  RollingTrace trace;
  trace.soc_kwh.resize(T + 1, n_sto);
  for (int s = 0; s < n_sto; ++s)
    trace.soc_kwh(0, s) =
        c.batteries[static_cast<std::size_t>(s)].soc_init *
        c.batteries[static_cast<std::size_t>(s)].capacity_kwh;

  opf::CaseDef step_case = c;
  opf::Schedule current;
  int solved_at = -1;  // step index of the schedule in `current`

  for (int k = 0; k < T; ++k) {
    // restart the plan from the realized stored energy
    for (int s = 0; s < n_sto; ++s) {
      auto& b = step_case.batteries[static_cast<std::size_t>(s)];
      const double frac = trace.soc_kwh(k, s) / b.capacity_kwh;
      b.soc_init = std::min(std::max(frac, b.soc_min), b.soc_max);
    }
    const auto hk = detail::slice_horizon(h, k);
    bool fresh = false;
    try {
      if (cfg.moments) {
        const auto mk = detail::slice_moments(*cfg.moments, k);
        auto sol = drjcc::solve_robust(step_case, hk, mk, cfg.set, cfg.rates, {}, cfg.solve);
        if (!sol.feasible()) throw opf::infeasible_error("robust re-solve infeasible", sol.implicated);
        current = std::move(sol.schedule);
      } else {
        current = opf::solve_deterministic(step_case, hk, {}, cfg.solve);
      }
      solved_at = k;
      fresh = true;
    } catch (const opf::infeasible_error&) {
      ++trace.infeasible_steps;
      if (solved_at < 0) throw;  // nothing to fall back on
    }

    const int row = k - solved_at;  // this step inside the active schedule
    RollingStep st;
    st.t = k;
    st.resolved = fresh;
    st.p_grid = current.grid.p_grid[row];
    st.p_discharge = current.grid.p_discharge.row(row).transpose();
    st.p_charge = current.grid.p_charge.row(row).transpose();
    st.reserve = current.grid.reserve.row(row).transpose();
    st.dcoef = current.grid.dcoef.row(row).transpose();
    st.objective = current.objective;

    const double shortfall = std::max(zeta.row(k).sum(), 0.0);
    st.soc_after_kwh.resize(n_sto);
    for (int s = 0; s < n_sto; ++s) {
      const auto& b = c.batteries[static_cast<std::size_t>(s)];
      const double resp = st.dcoef[s] * shortfall;
      const double next = trace.soc_kwh(k, s) +
                          h.dt_hours * b.eta_charge * st.p_charge[s] -
                          h.dt_hours * (st.p_discharge[s] + resp) / b.eta_discharge;
      trace.soc_kwh(k + 1, s) = next;
      st.soc_after_kwh[s] = next;
    }
    trace.steps.push_back(std::move(st));
  }
  return trace;
}

}  // namespace harness
}  // namespace mgdr
