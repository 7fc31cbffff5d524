#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mgdr/conic/program.hpp"
#include "mgdr/conic/solver.hpp"
#include "mgdr/network.hpp"
#include "mgdr/uncertainty.hpp"
#include "mgdr/util.hpp"

namespace mgdr::opf {

/// Cost weights of the five objective terms ($ per (kWh)^2 for the quadratic
/// ones, $ per kWh for degradation).
struct CostWeights {
  double m_grid = 0.023;
  double m_reserve = 0.23;
  double m_solar_curtail = 1.0;
  double m_load_curtail = 1.0;
  double m_degradation = 0.27;

  void validate() const {
    if (m_grid < 0 || m_reserve < 0 || m_solar_curtail < 0 || m_load_curtail < 0 ||
        m_degradation < 0)
      throw config_error("cost weights must be nonnegative");
  }
};

struct BatteryParams {
  double capacity_kwh = 0.06;
  double p_charge_max = 0.02;
  double p_discharge_max = 0.02;
  double soc_min = 0.2;
  double soc_max = 1.0;
  double eta_charge = 0.95;
  double eta_discharge = 0.95;
  double soc_init = 0.5;

  void validate() const {
    if (!(capacity_kwh > 0)) throw config_error("battery capacity must be positive");
    if (!(p_charge_max > 0) || !(p_discharge_max > 0))
      throw config_error("battery power limits must be positive");
    if (!(soc_min >= 0 && soc_min < soc_max && soc_max <= 1.0))
      throw config_error("battery state-of-charge window invalid");
    if (!(eta_charge > 0 && eta_charge <= 1) || !(eta_discharge > 0 && eta_discharge <= 1))
      throw config_error("battery efficiencies must lie in (0, 1]");
    if (soc_init < soc_min || soc_init > soc_max)
      throw config_error("initial state of charge outside its window");
  }
};

/// A microgrid case: electrical network, asset placement, storage fleet and
/// prices. Batteries align with assets.storage_bus.
struct CaseDef {
  net::Network network;
  net::AssetMap assets;
  std::vector<BatteryParams> batteries;
  CostWeights weights;
  double v_min = 0.95;
  double v_max = 1.05;
  /// import rating of the utility feeder; infinite = unconstrained
  double p_grid_max_kw = std::numeric_limits<double>::infinity();

  void validate() const {
    weights.validate();
    if (!(p_grid_max_kw > 0)) throw config_error("grid import rating must be positive");
    if (assets.grid_bus.size() != 1)
      throw data_error("expected exactly one grid connection");
    if (batteries.size() != assets.storage_bus.size())
      throw data_error("battery parameter list does not match storage placement");
    for (const auto& b : batteries) b.validate();
    auto in_range = [&](const std::vector<int>& v) {
      for (int b : v)
        if (b < 0 || b >= network.n_bus()) throw data_error("asset bus out of range");
    };
    in_range(assets.grid_bus);
    in_range(assets.storage_bus);
    in_range(assets.pv_bus);
    in_range(assets.load_bus);
    if (!(v_min > 0 && v_min < v_max)) throw data_error("voltage band invalid");
  }
};

/// Forecast data over the scheduling horizon. Matrices are interval-major:
/// rows = intervals, cols = assets of the respective kind.
struct HorizonData {
  double dt_hours = 0.25;
  Eigen::MatrixXd load_kw;
  Eigen::MatrixXd critical_kw;
  Eigen::MatrixXd pv_kw;
  std::optional<std::pair<int, int>> blackout;  // [start, end), interval indices

  int intervals() const { return static_cast<int>(load_kw.rows()); }

  bool in_blackout(int t) const {
    return blackout && t >= blackout->first && t < blackout->second;
  }

  void validate(const CaseDef& c) const {
    const int T = intervals();
    if (T < 1) throw data_error("horizon is empty");
    if (!(dt_hours > 0)) throw data_error("interval length must be positive");
    if (critical_kw.rows() != T || pv_kw.rows() != T)
      throw data_error("horizon matrices disagree on the interval count");
    if (load_kw.cols() != static_cast<Eigen::Index>(c.assets.load_bus.size()) ||
        critical_kw.cols() != load_kw.cols() ||
        pv_kw.cols() != static_cast<Eigen::Index>(c.assets.pv_bus.size()))
      throw data_error("horizon matrices disagree with the asset placement");
    if ((critical_kw.array() < -1e-12).any() || (pv_kw.array() < -1e-12).any())
      throw data_error("negative forecast entries");
    if (((load_kw - critical_kw).array() < -1e-9).any())
      throw data_error("critical load exceeds total load");
    if (blackout) {
      if (blackout->first < 0 || blackout->second > T || blackout->first >= blackout->second)
        throw data_error("blackout window outside the horizon");
    }
  }
};

/// Robust tightening of the six constraint families; built by the risk layer.
/// lambda[k] follows the family order: storage reserve adequacy, discharge
/// headroom, charge headroom, state-of-charge depletion, voltage upper bound,
/// voltage lower bound.
struct RobustTightening {
  std::array<double, 6> lambda{};
  const unc::ErrorMoments* moments = nullptr;
};

struct OpfOptions {
  bool force_island_build = false;  // keep the island copy even without a blackout
  bool terminal_soc_hold = false;   // require E_T >= E_0
  Eigen::VectorXd fixed_error_total_kw;  // deterministic per-interval total error
};

class infeasible_error : public std::runtime_error {
 public:
  infeasible_error(const std::string& msg, std::vector<std::string> rows)
      : std::runtime_error(msg), rows_(std::move(rows)) {}
  const std::vector<std::string>& implicated_rows() const { return rows_; }

 private:
  std::vector<std::string> rows_;
};

struct ScenarioSchedule {
  Eigen::VectorXd p_grid;                              // T
  Eigen::MatrixXd p_discharge, p_charge, reserve, dcoef;  // T x n_sto
  Eigen::MatrixXd soc_kwh;                             // (T+1) x n_sto
  Eigen::MatrixXd pv_kw, load_kw;                      // T x n_pv, T x n_load
  Eigen::MatrixXd voltage;                             // T x n_bus
};

struct Schedule {
  ScenarioSchedule grid, island;
  bool island_built = false;
  double objective = 0.0;  // reported cost, $
  double cost_grid_power = 0, cost_reserve = 0, cost_solar_curtail = 0, cost_load_curtail = 0,
         cost_degradation = 0, cost_island_shed = 0;
  int iterations = 0;
  double gap_rel = 0.0;
};

/// The assembled conic model plus everything needed to interpret a solution.
struct OpfModel {
  conic::Program program;
  const CaseDef* casedef = nullptr;
  HorizonData horizon;
  OpfOptions options;
  bool robust = false;
  std::array<double, 6> lambda{};
  const unc::ErrorMoments* moments = nullptr;

  int T = 0, n_sto = 0, n_pv = 0, n_load = 0, n_red = 0;
  int scenarios = 1;  // 1 = grid only, 2 = grid + island

  // variable ids
  std::vector<int> v_pg;    // [sc*T + t]
  std::vector<int> v_pd, v_pc, v_rup, v_d;  // [(sc*T + t)*n_sto + s]
  std::vector<int> v_soc;   // [(sc*(T+1) + t)*n_sto + s]
  std::vector<int> v_ppv;   // [(sc*T + t)*n_pv + p]
  std::vector<int> v_pl;    // [(sc*T + t)*n_load + l]

  // structural bookkeeping: rows before these counts are method-independent
  int shared_eq_rows = 0;
  int shared_ineq_rows = 0;
  std::array<std::vector<int>, 6> family_ineq;  // inequality row ids per family
  std::array<std::vector<int>, 6> family_soc;   // cone ids per family

  int pg(int sc, int t) const { return v_pg[static_cast<std::size_t>(sc * T + t)]; }
  int pd(int sc, int t, int s) const {
    return v_pd[static_cast<std::size_t>((sc * T + t) * n_sto + s)];
  }
  int pc(int sc, int t, int s) const {
    return v_pc[static_cast<std::size_t>((sc * T + t) * n_sto + s)];
  }
  int rup(int sc, int t, int s) const {
    return v_rup[static_cast<std::size_t>((sc * T + t) * n_sto + s)];
  }
  int dsh(int sc, int t, int s) const {
    return v_d[static_cast<std::size_t>((sc * T + t) * n_sto + s)];
  }
  int soc(int sc, int t, int s) const {
    return v_soc[static_cast<std::size_t>((sc * (T + 1) + t) * n_sto + s)];
  }
  int ppv(int sc, int t, int p) const {
    return v_ppv[static_cast<std::size_t>((sc * T + t) * n_pv + p)];
  }
  int pl(int sc, int t, int l) const {
    return v_pl[static_cast<std::size_t>((sc * T + t) * n_load + l)];
  }

  /// Linearized per-unit voltage of a non-slack bus (reduced index r).
  conic::LinExpr voltage_expr(int sc, int t, int r) const {
    const auto& nw = casedef->network;
    const auto& sens = nw.voltage_sensitivity();
    const double sbase = nw.s_base_kw();
    conic::LinExpr e(1.0);
    auto add = [&](int bus, const conic::LinExpr& p) {
      const int k = nw.reduced_index(bus);
      if (k < 0) return;  // injections at the slack do not move other buses
      const double c = sens(r, k) / sbase;
      if (c != 0.0) e += c * p;
    };
    add(casedef->assets.grid_bus[0], conic::LinExpr(conic::Var{pg(sc, t)}));
    for (int s = 0; s < n_sto; ++s)
      add(casedef->assets.storage_bus[static_cast<std::size_t>(s)],
          conic::Var{pd(sc, t, s)} - conic::Var{pc(sc, t, s)});
    for (int p = 0; p < n_pv; ++p)
      add(casedef->assets.pv_bus[static_cast<std::size_t>(p)],
          conic::LinExpr(conic::Var{ppv(sc, t, p)}));
    for (int l = 0; l < n_load; ++l)
      add(casedef->assets.load_bus[static_cast<std::size_t>(l)],
          -conic::LinExpr(conic::Var{pl(sc, t, l)}));
    return e;
  }
};

namespace detail {

inline void pin_or_bound(conic::Program& p, conic::Var v, double lo, double hi,
                         const std::string& label) {
  if (hi - lo <= 1e-12)
    p.add_eq(conic::LinExpr(v), lo, label);
  else
    p.set_bounds(v, lo, hi);
}

}  // namespace detail

/// Assemble the scheduling program. With `robust == nullptr` the six
/// uncertainty-touching families take their deterministic form (optionally
/// against a fixed total error); otherwise they are tightened with the given
/// safety factors and moments. All method-independent rows are emitted before
/// any family row, so two models over the same data differ only in the
/// trailing family rows.
inline OpfModel build_opf(const CaseDef& c, const HorizonData& h, const OpfOptions& opt = {},
                          const RobustTightening* robust = nullptr) {
  c.validate();
  h.validate(c);

  OpfModel m;
  m.casedef = &c;
  m.horizon = h;
  m.options = opt;
  m.T = h.intervals();
  m.n_sto = static_cast<int>(c.assets.storage_bus.size());
  m.n_pv = static_cast<int>(c.assets.pv_bus.size());
  m.n_load = static_cast<int>(c.assets.load_bus.size());
  m.n_red = c.network.n_bus() - 1;
  const bool island = h.blackout.has_value() || opt.force_island_build;
  m.scenarios = island ? 2 : 1;
  if (robust) {
    m.robust = true;
    m.lambda = robust->lambda;
    m.moments = robust->moments;
    if (!m.moments || m.moments->n_intervals() < m.T)
      throw data_error("robust build needs moments for every interval");
    if (m.moments->n_units != m.n_pv)
      throw data_error("moment dimension does not match the PV fleet");
  }
  Eigen::VectorXd det_err = opt.fixed_error_total_kw;
  if (det_err.size() == 0) det_err = Eigen::VectorXd::Zero(m.T);
  if (det_err.size() != m.T) throw data_error("fixed error vector length mismatch");

  auto& P = m.program;
  const int T = m.T;
  const double dt = h.dt_hours;

  // ---- variables ----
  for (int sc = 0; sc < m.scenarios; ++sc) {
    for (int t = 0; t < T; ++t) {
      auto v = P.add_var("pg" + std::to_string(sc) + "_" + std::to_string(t));
      if (std::isfinite(c.p_grid_max_kw))
        P.set_bounds(v, 0.0, c.p_grid_max_kw);
      else
        P.set_lower(v, 0.0);
      m.v_pg.push_back(v.id);
    }
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        auto v = P.add_var("pd");
        P.set_bounds(v, 0.0, c.batteries[static_cast<std::size_t>(s)].p_discharge_max);
        m.v_pd.push_back(v.id);
      }
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        auto v = P.add_var("pc");
        P.set_bounds(v, 0.0, c.batteries[static_cast<std::size_t>(s)].p_charge_max);
        m.v_pc.push_back(v.id);
      }
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        // deliverable reserve can never exceed the discharge rating
        auto v = P.add_var("rup");
        P.set_bounds(v, 0.0, c.batteries[static_cast<std::size_t>(s)].p_discharge_max);
        m.v_rup.push_back(v.id);
      }
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        auto v = P.add_var("d");
        P.set_lower(v, 0.0);  // d <= 1 is implied by the unit-sum split
        m.v_d.push_back(v.id);
      }
    for (int t = 0; t <= T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        const auto& b = c.batteries[static_cast<std::size_t>(s)];
        auto v = P.add_var("soc");
        P.set_bounds(v, b.soc_min * b.capacity_kwh, b.soc_max * b.capacity_kwh);
        m.v_soc.push_back(v.id);
      }
    for (int t = 0; t < T; ++t)
      for (int p = 0; p < m.n_pv; ++p) {
        auto v = P.add_var("ppv");
        m.v_ppv.push_back(v.id);
      }
    for (int t = 0; t < T; ++t)
      for (int l = 0; l < m.n_load; ++l) {
        auto v = P.add_var("pl");
        P.set_lower(v, 0.0);
        m.v_pl.push_back(v.id);
      }
  }

  // PV output between zero and forecast (pin when the forecast is zero)
  for (int sc = 0; sc < m.scenarios; ++sc)
    for (int t = 0; t < T; ++t)
      for (int p = 0; p < m.n_pv; ++p)
        detail::pin_or_bound(P, conic::Var{m.ppv(sc, t, p)}, 0.0, h.pv_kw(t, p), "pv pin");

  // ---- shared equality rows ----
  for (int sc = 0; sc < m.scenarios; ++sc) {
    const bool isl = sc == 1;
    for (int s = 0; s < m.n_sto; ++s) {
      const auto& b = c.batteries[static_cast<std::size_t>(s)];
      P.add_eq(conic::LinExpr(conic::Var{m.soc(sc, 0, s)}), b.soc_init * b.capacity_kwh,
               "soc init");
    }
    for (int t = 0; t < T; ++t) {
      for (int s = 0; s < m.n_sto; ++s) {
        const auto& b = c.batteries[static_cast<std::size_t>(s)];
        conic::LinExpr rec = conic::Var{m.soc(sc, t + 1, s)} - conic::Var{m.soc(sc, t, s)};
        rec -= dt * b.eta_charge * conic::Var{m.pc(sc, t, s)};
        rec += (dt / b.eta_discharge) * conic::Var{m.pd(sc, t, s)};
        P.add_eq(rec, 0.0, "soc recursion");
      }
      conic::LinExpr simplex;
      for (int s = 0; s < m.n_sto; ++s) simplex += conic::Var{m.dsh(sc, t, s)};
      P.add_eq(simplex, 1.0, "response split");

      conic::LinExpr bal(conic::Var{m.pg(sc, t)});
      for (int s = 0; s < m.n_sto; ++s)
        bal += conic::Var{m.pd(sc, t, s)} - conic::Var{m.pc(sc, t, s)};
      for (int p = 0; p < m.n_pv; ++p) bal += conic::Var{m.ppv(sc, t, p)};
      for (int l = 0; l < m.n_load; ++l) bal -= conic::Var{m.pl(sc, t, l)};
      P.add_eq(bal, 0.0, "balance");

      // load pinning / shedding window
      for (int l = 0; l < m.n_load; ++l) {
        if (isl && h.in_blackout(t))
          detail::pin_or_bound(P, conic::Var{m.pl(sc, t, l)}, h.critical_kw(t, l),
                               h.load_kw(t, l), "island shedding");
        else
          P.add_eq(conic::LinExpr(conic::Var{m.pl(sc, t, l)}), h.load_kw(t, l), "load pin");
      }
      if (isl && h.in_blackout(t))
        P.add_eq(conic::LinExpr(conic::Var{m.pg(sc, t)}), 0.0, "island grid cut");
    }
  }
  if (m.scenarios == 2) {
    // identical stored energy in both scenarios until the blackout begins
    // (t = 0 is already pinned by the initial-state rows)
    if (h.blackout)
      for (int t = 1; t <= h.blackout->first; ++t)
        for (int s = 0; s < m.n_sto; ++s)
          P.add_eq(conic::Var{m.soc(0, t, s)} - conic::Var{m.soc(1, t, s)}, 0.0, "soc coupling");
    if (!h.blackout) {
      // no window: keep the island an exact mirror
      for (int t = 0; t < T; ++t) {
        P.add_eq(conic::Var{m.pg(0, t)} - conic::Var{m.pg(1, t)}, 0.0, "mirror");
        for (int s = 0; s < m.n_sto; ++s) {
          P.add_eq(conic::Var{m.pd(0, t, s)} - conic::Var{m.pd(1, t, s)}, 0.0, "mirror");
          P.add_eq(conic::Var{m.pc(0, t, s)} - conic::Var{m.pc(1, t, s)}, 0.0, "mirror");
          P.add_eq(conic::Var{m.rup(0, t, s)} - conic::Var{m.rup(1, t, s)}, 0.0, "mirror");
          P.add_eq(conic::Var{m.dsh(0, t, s)} - conic::Var{m.dsh(1, t, s)}, 0.0, "mirror");
        }
        for (int p = 0; p < m.n_pv; ++p)
          P.add_eq(conic::Var{m.ppv(0, t, p)} - conic::Var{m.ppv(1, t, p)}, 0.0, "mirror");
        for (int l = 0; l < m.n_load; ++l)
          P.add_eq(conic::Var{m.pl(0, t, l)} - conic::Var{m.pl(1, t, l)}, 0.0, "mirror");
      }
    }
  }

  // ---- shared inequality rows ----
  if (opt.terminal_soc_hold)
    for (int sc = 0; sc < m.scenarios; ++sc)
      for (int s = 0; s < m.n_sto; ++s)
        P.add_ge(conic::Var{m.soc(sc, T, s)} - conic::Var{m.soc(sc, 0, s)}, 0.0,
                 "terminal soc hold");

  m.shared_eq_rows = static_cast<int>(P.equalities().size());
  m.shared_ineq_rows = static_cast<int>(P.inequalities().size());

  // ---- objective ----
  // Normal-operation cost is priced on the grid scenario only; the island
  // scenario contributes just its shedding penalty inside the blackout window
  // (outside the window its load is pinned, so the term would be zero anyway).
  for (int sc = 0; sc < m.scenarios; ++sc) {
    for (int t = 0; t < T; ++t) {
      const int group = sc * T + t;
      const auto& w = c.weights;
      if (sc == 1) {
        if (!h.in_blackout(t)) continue;
        for (int l = 0; l < m.n_load; ++l) {
          const double f = h.load_kw(t, l);
          if (w.m_load_curtail > 0) {
            P.add_obj_quad(conic::Var{m.pl(sc, t, l)}, w.m_load_curtail * dt, group);
            P.add_obj_linear(conic::Var{m.pl(sc, t, l)}, -2.0 * w.m_load_curtail * dt * f);
            P.add_obj_constant(w.m_load_curtail * dt * f * f);
          }
        }
        continue;
      }
      if (w.m_grid > 0) P.add_obj_quad(conic::Var{m.pg(sc, t)}, w.m_grid * dt, group);
      for (int s = 0; s < m.n_sto; ++s) {
        if (w.m_reserve > 0) P.add_obj_quad(conic::Var{m.rup(sc, t, s)}, w.m_reserve * dt, group);
        P.add_obj_linear(conic::Var{m.pd(sc, t, s)}, w.m_degradation * dt);
        P.add_obj_linear(conic::Var{m.pc(sc, t, s)}, w.m_degradation * dt);
      }
      for (int p = 0; p < m.n_pv; ++p) {
        // m_s (forecast - ppv)^2 expanded around the decision variable
        const double f = h.pv_kw(t, p);
        if (w.m_solar_curtail > 0) {
          P.add_obj_quad(conic::Var{m.ppv(sc, t, p)}, w.m_solar_curtail * dt, group);
          P.add_obj_linear(conic::Var{m.ppv(sc, t, p)}, -2.0 * w.m_solar_curtail * dt * f);
          P.add_obj_constant(w.m_solar_curtail * dt * f * f);
        }
      }
      for (int l = 0; l < m.n_load; ++l) {
        const double f = h.load_kw(t, l);
        if (w.m_load_curtail > 0) {
          P.add_obj_quad(conic::Var{m.pl(sc, t, l)}, w.m_load_curtail * dt, group);
          P.add_obj_linear(conic::Var{m.pl(sc, t, l)}, -2.0 * w.m_load_curtail * dt * f);
          P.add_obj_constant(w.m_load_curtail * dt * f * f);
        }
      }
    }
  }

  // ---- the six uncertainty-touching constraint families (always last) ----
  auto tag = [](const char* base, int sc, int t, int k) {
    return std::string(base) + (sc ? " isl t" : " t") + std::to_string(t) + " #" +
           std::to_string(k);
  };

  // family 0: reserve covers the allocated share of the total error
  for (int sc = 0; sc < m.scenarios; ++sc)
    for (int t = 0; t < T; ++t) {
      const double need = m.robust
                              ? m.lambda[0] * m.moments->interval[static_cast<std::size_t>(t)]
                                                  .sigma_total +
                                    m.moments->interval[static_cast<std::size_t>(t)].mean_total
                              : det_err[t];
      for (int s = 0; s < m.n_sto; ++s) {
        m.family_ineq[0].push_back(P.add_le(
            need * conic::Var{m.dsh(sc, t, s)} - conic::Var{m.rup(sc, t, s)}, 0.0,
            tag("reserve adequacy", sc, t, s)));
      }
    }
  // family 1: discharge headroom for the reserve
  for (int sc = 0; sc < m.scenarios; ++sc)
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        const auto& b = c.batteries[static_cast<std::size_t>(s)];
        conic::LinExpr e(conic::Var{m.pd(sc, t, s)});
        if (m.robust) {
          const auto& iv = m.moments->interval[static_cast<std::size_t>(t)];
          e += (m.lambda[1] * iv.sigma_total + iv.mean_total) * conic::Var{m.dsh(sc, t, s)};
        } else {
          e += conic::Var{m.rup(sc, t, s)};
        }
        m.family_ineq[1].push_back(
            P.add_le(e, b.p_discharge_max, tag("discharge headroom", sc, t, s)));
      }
  // family 2: charge headroom
  for (int sc = 0; sc < m.scenarios; ++sc)
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        const auto& b = c.batteries[static_cast<std::size_t>(s)];
        conic::LinExpr e;
        if (m.robust) {
          const auto& iv = m.moments->interval[static_cast<std::size_t>(t)];
          e = (m.lambda[2] * iv.sigma_total + iv.mean_total) * conic::Var{m.dsh(sc, t, s)};
        } else {
          e = conic::Var{m.rup(sc, t, s)} - conic::Var{m.pc(sc, t, s)};
        }
        m.family_ineq[2].push_back(P.add_le(e, m.robust ? b.p_charge_max : 0.0,
                                            tag("charge headroom", sc, t, s)));
      }
  // family 3: stored energy covers the reserve draw
  for (int sc = 0; sc < m.scenarios; ++sc)
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < m.n_sto; ++s) {
        const auto& b = c.batteries[static_cast<std::size_t>(s)];
        conic::LinExpr e;
        if (m.robust) {
          const auto& iv = m.moments->interval[static_cast<std::size_t>(t)];
          e = (m.lambda[3] * iv.sigma_total - iv.mean_total) * dt * conic::Var{m.dsh(sc, t, s)};
        } else {
          e = dt * conic::Var{m.rup(sc, t, s)};
        }
        e -= conic::Var{m.soc(sc, t, s)};
        m.family_ineq[3].push_back(
            P.add_le(e, -b.soc_min * b.capacity_kwh, tag("soc depletion", sc, t, s)));
      }
  // families 4 and 5: voltage band under the realized error
  const auto& nw = c.network;
  const double sbase = nw.s_base_kw();
  for (int fam = 4; fam <= 5; ++fam) {
    const bool upper = fam == 4;
    for (int sc = 0; sc < m.scenarios; ++sc)
      for (int t = 0; t < T; ++t)
        for (int r = 0; r < m.n_red; ++r) {
          conic::LinExpr v = m.voltage_expr(sc, t, r);
          const char* base = upper ? "voltage upper" : "voltage lower";
          if (!m.robust) {
            m.family_ineq[static_cast<std::size_t>(fam)].push_back(
                upper ? P.add_le(v, c.v_max, tag(base, sc, t, r))
                      : P.add_ge(v, c.v_min, tag(base, sc, t, r)));
            continue;
          }
          const auto& iv = m.moments->interval[static_cast<std::size_t>(t)];
          // error-to-voltage row: a = p_r - (q_r' d) 1 over PV units
          std::vector<conic::LinExpr> arg(static_cast<std::size_t>(m.n_pv));
          conic::LinExpr qd;  // q_r' d, the storage response seen at bus r
          for (int s = 0; s < m.n_sto; ++s) {
            const int k = nw.reduced_index(c.assets.storage_bus[static_cast<std::size_t>(s)]);
            if (k < 0) continue;
            const double q = nw.voltage_sensitivity()(r, k) / sbase;
            if (q != 0.0) qd += q * conic::Var{m.dsh(sc, t, s)};
          }
          Eigen::VectorXd pvec(m.n_pv);
          for (int p = 0; p < m.n_pv; ++p) {
            const int k = nw.reduced_index(c.assets.pv_bus[static_cast<std::size_t>(p)]);
            pvec[p] = k < 0 ? 0.0 : nw.voltage_sensitivity()(r, k) / sbase;
          }
          // mean correction: v_realized = v - a' zeta, E[v_realized] = v - a' mu
          conic::LinExpr amu;
          {
            const double pmu = pvec.dot(iv.mean);
            amu = conic::LinExpr(pmu) - iv.mean.sum() * qd;
          }
          const double lam = m.lambda[static_cast<std::size_t>(fam)];
          if (iv.is_degenerate()) {
            conic::LinExpr vmean = v - amu;
            m.family_ineq[static_cast<std::size_t>(fam)].push_back(
                upper ? P.add_le(vmean, c.v_max, tag(base, sc, t, r))
                      : P.add_ge(vmean, c.v_min, tag(base, sc, t, r)));
            continue;
          }
          Eigen::MatrixXd S = lam * iv.cov_sqrt;
          for (int row = 0; row < m.n_pv; ++row) {
            conic::LinExpr a;
            double cst = 0.0;
            for (int p = 0; p < m.n_pv; ++p) {
              cst += S(row, p) * pvec[p];
            }
            a = conic::LinExpr(cst) - S.row(row).sum() * qd;
            arg[static_cast<std::size_t>(row)] = a;
          }
          conic::LinExpr bound = upper ? (c.v_max - v + amu) : (v - amu - c.v_min);
          m.family_soc[static_cast<std::size_t>(fam)].push_back(
              P.add_soc(arg, bound, tag(base, sc, t, r)));
        }
  }
  return m;
}

/// Solve the model and unpack both scenarios. Throws infeasible_error with
/// the implicated row labels when the program has no feasible point.
inline Schedule extract_schedule(const OpfModel& m, const conic::SolveResult& r);

inline Schedule solve_schedule(const OpfModel& m, const conic::SolveOptions& so = {}) {
  auto r = conic::solve(m.program, so);
  if (r.status == conic::SolveStatus::infeasible) {
    // rank constraint rows by their weight in the infeasibility certificate
    const auto L = conic::lower(m.program);
    std::vector<std::pair<double, std::string>> blame;
    for (int i = 0; i < L.l && i < r.z_std.size(); ++i) {
      const auto& src = L.lp_src[static_cast<std::size_t>(i)];
      if (src.kind == conic::Lowered::RowSrc::ineq && src.index >= 0) {
        const auto& lbl = m.program.inequalities()[static_cast<std::size_t>(src.index)].label;
        if (!lbl.empty()) blame.push_back({std::abs(r.z_std[i]), lbl});
      }
    }
    for (std::size_t i = 0; i < m.program.equalities().size(); ++i)
      if (static_cast<Eigen::Index>(i) < r.y_std.size() &&
          !m.program.equalities()[i].label.empty())
        blame.push_back({std::abs(r.y_std[static_cast<Eigen::Index>(i)]),
                         m.program.equalities()[i].label});
    std::stable_sort(blame.begin(), blame.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> rows;
    for (std::size_t i = 0; i < blame.size() && rows.size() < 5; ++i)
      if (blame[i].first > 1e-9) rows.push_back(blame[i].second);
    std::string msg = "schedule infeasible";
    for (const auto& s : rows) msg += "; " + s;
    throw infeasible_error(msg, rows);
  }
  if (r.status != conic::SolveStatus::optimal)
    throw data_error(std::string("solver failed: ") + conic::to_string(r.status));
  return extract_schedule(m, r);
}

inline Schedule extract_schedule(const OpfModel& m, const conic::SolveResult& r) {
  Schedule out;
  const auto& x = r.x;
  const int T = m.T;
  out.iterations = r.iterations;
  out.gap_rel = r.gap_rel;
  out.island_built = m.scenarios == 2;

  auto fill = [&](int sc, ScenarioSchedule& s) {
    s.p_grid.resize(T);
    s.p_discharge.resize(T, m.n_sto);
    s.p_charge.resize(T, m.n_sto);
    s.reserve.resize(T, m.n_sto);
    s.dcoef.resize(T, m.n_sto);
    s.soc_kwh.resize(T + 1, m.n_sto);
    s.pv_kw.resize(T, m.n_pv);
    s.load_kw.resize(T, m.n_load);
    const auto& c = *m.casedef;
    s.voltage.resize(T, c.network.n_bus());
    for (int t = 0; t < T; ++t) {
      s.p_grid[t] = x[m.pg(sc, t)];
      for (int st = 0; st < m.n_sto; ++st) {
        s.p_discharge(t, st) = x[m.pd(sc, t, st)];
        s.p_charge(t, st) = x[m.pc(sc, t, st)];
        s.reserve(t, st) = x[m.rup(sc, t, st)];
        s.dcoef(t, st) = x[m.dsh(sc, t, st)];
      }
      for (int p = 0; p < m.n_pv; ++p) s.pv_kw(t, p) = x[m.ppv(sc, t, p)];
      for (int l = 0; l < m.n_load; ++l) s.load_kw(t, l) = x[m.pl(sc, t, l)];
      Eigen::VectorXd pgv(1);
      pgv << s.p_grid[t];
      Eigen::VectorXd inj = net::injected_power(
          c.assets, c.network.n_bus(), pgv, s.p_discharge.row(t).transpose(),
          s.p_charge.row(t).transpose(), Eigen::VectorXd::Zero(m.n_sto),
          s.pv_kw.row(t).transpose(), Eigen::VectorXd::Zero(m.n_pv),
          s.load_kw.row(t).transpose());
      s.voltage.row(t) = c.network.voltages(inj);
    }
    for (int t = 0; t <= T; ++t)
      for (int st = 0; st < m.n_sto; ++st) s.soc_kwh(t, st) = x[m.soc(sc, t, st)];
  };
  fill(0, out.grid);
  if (m.scenarios == 2)
    fill(1, out.island);
  else
    out.island = out.grid;

  // reported cost: grid scenario plus island shedding inside the window
  const auto& w = m.casedef->weights;
  const double dt = m.horizon.dt_hours;
  for (int t = 0; t < T; ++t) {
    out.cost_grid_power += w.m_grid * dt * out.grid.p_grid[t] * out.grid.p_grid[t];
    for (int s = 0; s < m.n_sto; ++s) {
      out.cost_reserve += w.m_reserve * dt * out.grid.reserve(t, s) * out.grid.reserve(t, s);
      out.cost_degradation +=
          w.m_degradation * dt * (out.grid.p_discharge(t, s) + out.grid.p_charge(t, s));
    }
    for (int p = 0; p < m.n_pv; ++p) {
      const double cut = m.horizon.pv_kw(t, p) - out.grid.pv_kw(t, p);
      out.cost_solar_curtail += w.m_solar_curtail * dt * cut * cut;
    }
    for (int l = 0; l < m.n_load; ++l) {
      const double shed = m.horizon.load_kw(t, l) - out.grid.load_kw(t, l);
      out.cost_load_curtail += w.m_load_curtail * dt * shed * shed;
    }
    if (m.scenarios == 2 && m.horizon.in_blackout(t)) {
      for (int l = 0; l < m.n_load; ++l) {
        const double shed = m.horizon.load_kw(t, l) - out.island.load_kw(t, l);
        out.cost_island_shed += w.m_load_curtail * dt * shed * shed;
      }
    }
  }
  out.objective = out.cost_grid_power + out.cost_reserve + out.cost_solar_curtail +
                  out.cost_load_curtail + out.cost_degradation + out.cost_island_shed;
  return out;
}

/// Deterministic multi-period schedule.
inline Schedule solve_deterministic(const CaseDef& c, const HorizonData& h,
                                    const OpfOptions& opt = {},
                                    const conic::SolveOptions& so = {}) {
  return solve_schedule(build_opf(c, h, opt, nullptr), so);
}

}  // namespace mgdr::opf
