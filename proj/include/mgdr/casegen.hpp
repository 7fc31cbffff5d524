#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "mgdr/network.hpp"
#include "mgdr/opf.hpp"
#include "mgdr/uncertainty.hpp"
#include "mgdr/util.hpp"

/// Synthetic benchmark case: a low-voltage DC feeder with N households hanging
/// off a main busbar, each with rooftop PV, a small home battery and a
/// midday-heavy productive load.  All randomness flows from a single seed in a
/// fixed draw order, so a seed pins the case bit for bit.
namespace mgdr::casegen {

struct GenConfig {
  int n_households = 10;
  /// quarter-hour intervals; shorter horizons are centered on noon so the
  /// solar window stays inside
  int intervals = 96;
  double pv_cap_min_kw = 0.020;
  double pv_cap_max_kw = 0.040;
  double line_km_min = 0.050;
  double line_km_max = 0.200;
  double ohm_per_km = 8.0;
  double batt_capacity_kwh = 0.060;
  double batt_power_kw = 0.020;
  double batt_soc_init = 0.90;
  /// forecast-error standard deviation relative to the PV forecast
  double sigma_rel = 0.08;
  double night_load_w = 3.0;
  /// daytime productive load (pumping, milling, refrigeration) that follows
  /// the solar window, keeping midday generation and consumption in balance
  double daylight_load_w = 28.0;
  /// noon demand spike on top of the daylight base; rides on the feeder in
  /// normal operation and on the battery fleet when islanded
  double day_peak_w = 11.5;
  double morning_peak_w = 4.0;
  double evening_peak_w = 2.0;
  double critical_frac = 0.25;
  /// household-to-household load scale ~ U(1-spread, 1+spread)
  double load_scale_spread = 0.15;
  int fit_samples = 200;
  int heldout_days = 30;
  std::uint64_t seed = 2024;
  std::optional<std::pair<int, int>> blackout;

  static constexpr double dt_hours = 0.25;

  double start_hour() const { return std::max(0.0, 12.0 - 0.125 * intervals); }

  void validate() const {
    if (n_households < 1) throw config_error("need at least one household");
    if (intervals < 1 || intervals > 96) throw config_error("intervals must lie in [1, 96]");
    if (!(pv_cap_min_kw > 0) || pv_cap_max_kw < pv_cap_min_kw)
      throw config_error("pv capacity range invalid");
    if (!(line_km_min > 0) || line_km_max < line_km_min)
      throw config_error("line length range invalid");
    if (!(ohm_per_km > 0)) throw config_error("line resistivity must be positive");
    if (!(batt_capacity_kwh > 0) || !(batt_power_kw > 0))
      throw config_error("battery ratings must be positive");
    if (sigma_rel < 0) throw config_error("sigma_rel must be nonnegative");
    if (night_load_w < 0 || daylight_load_w < 0 || day_peak_w < 0 || morning_peak_w < 0 ||
        evening_peak_w < 0)
      throw config_error("load shape amplitudes must be nonnegative");
    if (!(critical_frac >= 0 && critical_frac <= 1))
      throw config_error("critical_frac must lie in [0, 1]");
    if (!(load_scale_spread >= 0 && load_scale_spread < 1))
      throw config_error("load_scale_spread must lie in [0, 1)");
    if (fit_samples < 2) throw config_error("need at least two fitting samples");
    if (heldout_days < 1) throw config_error("need at least one held-out day");
    if (blackout && (blackout->first < 0 || blackout->second > intervals ||
                     blackout->first >= blackout->second))
      throw config_error("blackout window outside the horizon");
  }
};

struct GeneratedCase {
  opf::CaseDef casedef;
  std::vector<net::Line> lines;
  opf::HorizonData horizon;
  Eigen::MatrixXd sigma_envelope;  // T x n_households, forecast-error std dev (kW)
};

namespace detail {

inline double bump(double h, double center, double width) {
  const double z = (h - center) / width;
  return std::exp(-0.5 * z * z);
}

inline double pv_shape(double h) {
  if (h <= 6.0 || h >= 18.0) return 0.0;
  const double s = std::sin(M_PI * (h - 6.0) / 12.0);
  return s * s;
}

inline double load_watts(const GenConfig& g, double h) {
  return g.night_load_w + g.daylight_load_w * pv_shape(h) + g.day_peak_w * bump(h, 12.5, 1.2) +
         g.morning_peak_w * bump(h, 7.5, 1.2) + g.evening_peak_w * bump(h, 19.5, 1.5);
}

}  // namespace detail

inline GeneratedCase generate(const GenConfig& cfg = {}) {
  cfg.validate();
  const int n = cfg.n_households;
  const int T = cfg.intervals;

  // one seeded stream, consumed in a documented order: PV capacity, line
  // length, then load scale, household by household
  std::uint64_t state = cfg.seed;
  std::vector<double> pv_cap(static_cast<std::size_t>(n));
  std::vector<double> line_km(static_cast<std::size_t>(n));
  std::vector<double> load_scale(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    pv_cap[static_cast<std::size_t>(i)] =
        cfg.pv_cap_min_kw + (cfg.pv_cap_max_kw - cfg.pv_cap_min_kw) * mgdr::detail::uniform01(state);
    line_km[static_cast<std::size_t>(i)] =
        cfg.line_km_min + (cfg.line_km_max - cfg.line_km_min) * mgdr::detail::uniform01(state);
    load_scale[static_cast<std::size_t>(i)] =
        1.0 + cfg.load_scale_spread * (2.0 * mgdr::detail::uniform01(state) - 1.0);
  }

  std::vector<net::Line> lines;
  lines.reserve(static_cast<std::size_t>(n));
  net::AssetMap assets;
  assets.grid_bus = {0};
  for (int i = 0; i < n; ++i) {
    const int bus = i + 1;
    lines.push_back(net::Line{0, bus, cfg.ohm_per_km * line_km[static_cast<std::size_t>(i)]});
    assets.storage_bus.push_back(bus);
    assets.pv_bus.push_back(bus);
    assets.load_bus.push_back(bus);
  }

  opf::BatteryParams batt;
  batt.capacity_kwh = cfg.batt_capacity_kwh;
  batt.p_charge_max = cfg.batt_power_kw;
  batt.p_discharge_max = cfg.batt_power_kw;
  batt.soc_init = cfg.batt_soc_init;

  opf::HorizonData horizon;
  Eigen::MatrixXd envelope(T, n);
  horizon.dt_hours = GenConfig::dt_hours;
  horizon.load_kw.resize(T, n);
  horizon.critical_kw.resize(T, n);
  horizon.pv_kw.resize(T, n);
  const double h0 = cfg.start_hour();
  for (int t = 0; t < T; ++t) {
    const double h = h0 + (t + 0.5) * GenConfig::dt_hours;
    const double base_w = detail::load_watts(cfg, h);
    const double shape = detail::pv_shape(h);
    for (int i = 0; i < n; ++i) {
      const double load = 1e-3 * base_w * load_scale[static_cast<std::size_t>(i)];
      const double pv = pv_cap[static_cast<std::size_t>(i)] * shape;
      horizon.load_kw(t, i) = load;
      horizon.critical_kw(t, i) = cfg.critical_frac * load;
      horizon.pv_kw(t, i) = pv;
      envelope(t, i) = cfg.sigma_rel * pv;
    }
  }
  horizon.blackout = cfg.blackout;

  GeneratedCase out{opf::CaseDef{net::Network(n + 1, 0, lines), std::move(assets),
                                 std::vector<opf::BatteryParams>(static_cast<std::size_t>(n), batt),
                                 opf::CostWeights{}},
                    std::move(lines), std::move(horizon), std::move(envelope)};
  out.casedef.validate();
  out.horizon.validate(out.casedef);
  return out;
}

/// Seeded forecast-error days for moment fitting; stream 1 of the case seed.
inline unc::ErrorSampleSet fit_samples(const GeneratedCase& c, const GenConfig& cfg) {
  return unc::generate_synthetic_errors(c.sigma_envelope, unc::NoiseFamily::gaussian,
                                        child_seed(cfg.seed, 1), cfg.fit_samples);
}

/// Held-out evaluation days; stream 2, disjoint from the fitting stream.
inline unc::ErrorSampleSet heldout_days(const GeneratedCase& c, const GenConfig& cfg) {
  return unc::generate_synthetic_errors(c.sigma_envelope, unc::NoiseFamily::gaussian,
                                        child_seed(cfg.seed, 2), cfg.heldout_days);
}

}  // namespace mgdr::casegen
