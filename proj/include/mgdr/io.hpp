#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mgdr/harness.hpp"
#include "mgdr/opf.hpp"
#include "mgdr/uncertainty.hpp"
#include "mgdr/util.hpp"

/// Flat-file formats: CSV for tabular inputs/outputs, versioned JSON for
/// structured ones. Readers validate aggressively and cite line numbers.
namespace mgdr::io {

using json = nlohmann::json;

constexpr int schema_version = 1;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvReader {
  std::string path;
  std::ifstream in;
  int lineno = 0;

  explicit CsvReader(const std::string& p) : path(p), in(p) {
    if (!in) throw data_error("cannot open " + p);
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw data_error(path + ":" + std::to_string(lineno) + ": " + msg);
  }

  /// Next non-blank row split on commas; false at end of file.
  bool next(std::vector<std::string>& cells) {
    std::string line;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      cells = split(line);
      return true;
    }
    return false;
  }

  void expect_header(const std::string& header) {
    std::vector<std::string> cells;
    if (!next(cells)) fail("missing header row");
    if (cells != split(header)) fail("expected header '" + header + "'");
  }

  double num(const std::string& cell) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      return v;
    } catch (const std::exception&) {
      fail("not a number: '" + cell + "'");
    }
  }

  int integer(const std::string& cell) const {
    try {
      std::size_t used = 0;
      const int v = std::stoi(cell, &used);
      if (used != cell.size()) throw std::invalid_argument(cell);
      return v;
    } catch (const std::exception&) {
      fail("not an integer: '" + cell + "'");
    }
  }

  void want(const std::vector<std::string>& cells, std::size_t n) const {
    if (cells.size() != n)
      fail("expected " + std::to_string(n) + " fields, got " + std::to_string(cells.size()));
  }
};

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path);
  return out;
}

inline json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const json& req(const json& j, const std::string& key) {
  auto it = j.find(key);
  if (it == j.end()) throw data_error("missing key '" + key + "'");
  return *it;
}

inline Eigen::VectorXd vec_from(const json& a, const std::string& what) {
  if (!a.is_array()) throw data_error(what + " must be an array");
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw data_error(what + " must hold numbers");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd mat_from(const json& a, const std::string& what) {
  if (!a.is_array() || a.empty()) throw data_error(what + " must be a non-empty array of rows");
  const auto cols = a[0].size();
  Eigen::MatrixXd m(a.size(), cols);
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (!a[r].is_array() || a[r].size() != cols) throw data_error(what + " rows are ragged");
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a[r][c].get<double>();
  }
  return m;
}

inline void check_version(const json& j, const std::string& what) {
  if (req(j, "schema_version").get<int>() != schema_version)
    throw data_error(what + ": unsupported schema_version");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON files
// ---------------------------------------------------------------------------

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw data_error(path + ": " + e.what());
  }
}

inline void save_json(const std::string& path, const json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Network topology: from,to,resistance_ohm
// ---------------------------------------------------------------------------

struct TopologyFile {
  int n_bus = 0;
  std::vector<net::Line> lines;
};

inline TopologyFile read_topology(const std::string& path) {
  detail::CsvReader r(path);
  r.expect_header("from,to,resistance_ohm");
  TopologyFile out;
  std::vector<std::string> c;
  while (r.next(c)) {
    r.want(c, 3);
    net::Line ln{r.integer(c[0]), r.integer(c[1]), r.num(c[2])};
    if (ln.from < 0 || ln.to < 0) r.fail("bus indices must be nonnegative");
    if (ln.from == ln.to) r.fail("line endpoints coincide");
    if (!(ln.resistance_ohm > 0)) r.fail("line resistance must be positive");
    out.n_bus = std::max({out.n_bus, ln.from + 1, ln.to + 1});
    out.lines.push_back(ln);
  }
  if (out.lines.empty()) r.fail("topology has no lines");
  return out;
}

inline void write_topology(const std::string& path, const std::vector<net::Line>& lines) {
  auto out = detail::open_out(path);
  out << "from,to,resistance_ohm\n";
  for (const auto& ln : lines)
    out << ln.from << ',' << ln.to << ',' << detail::fmt(ln.resistance_ohm) << '\n';
}

// ---------------------------------------------------------------------------
// Asset placement: asset_id,kind,bus  (kind in {grid,storage,pv,load})
// ---------------------------------------------------------------------------

inline net::AssetMap read_assets(const std::string& path) {
  detail::CsvReader r(path);
  r.expect_header("asset_id,kind,bus");
  net::AssetMap a;
  std::set<std::string> seen;
  std::vector<std::string> c;
  while (r.next(c)) {
    r.want(c, 3);
    if (!seen.insert(c[0]).second) r.fail("duplicate asset_id '" + c[0] + "'");
    const int bus = r.integer(c[2]);
    if (bus < 0) r.fail("bus must be nonnegative");
    if (c[1] == "grid")
      a.grid_bus.push_back(bus);
    else if (c[1] == "storage")
      a.storage_bus.push_back(bus);
    else if (c[1] == "pv")
      a.pv_bus.push_back(bus);
    else if (c[1] == "load")
      a.load_bus.push_back(bus);
    else
      r.fail("unknown asset kind '" + c[1] + "'");
  }
  if (a.grid_bus.empty()) r.fail("no grid connection listed");
  return a;
}

inline void write_assets(const std::string& path, const net::AssetMap& a) {
  auto out = detail::open_out(path);
  out << "asset_id,kind,bus\n";
  auto emit = [&](const char* kind, const std::vector<int>& buses) {
    for (std::size_t k = 0; k < buses.size(); ++k)
      out << kind << k << ',' << kind << ',' << buses[k] << '\n';
  };
  emit("grid", a.grid_bus);
  emit("storage", a.storage_bus);
  emit("pv", a.pv_bus);
  emit("load", a.load_bus);
}

// ---------------------------------------------------------------------------
// Horizon forecasts: interval,bus,load_kw,critical_kw,pv_kw
// One row per interval and per bus hosting a load or PV unit.
// ---------------------------------------------------------------------------

inline opf::HorizonData read_horizon(const std::string& path, const net::AssetMap& assets,
                                     double dt_hours) {
  std::map<int, int> load_at, pv_at;
  for (std::size_t k = 0; k < assets.load_bus.size(); ++k)
    if (!load_at.emplace(assets.load_bus[k], static_cast<int>(k)).second)
      throw data_error("two load units share bus " + std::to_string(assets.load_bus[k]) +
                       "; the horizon format cannot address them");
  for (std::size_t k = 0; k < assets.pv_bus.size(); ++k)
    if (!pv_at.emplace(assets.pv_bus[k], static_cast<int>(k)).second)
      throw data_error("two pv units share bus " + std::to_string(assets.pv_bus[k]) +
                       "; the horizon format cannot address them");

  detail::CsvReader r(path);
  r.expect_header("interval,bus,load_kw,critical_kw,pv_kw");
  struct Row {
    int t, bus;
    double load, critical, pv;
  };
  std::vector<Row> rows;
  int T = 0;
  std::vector<std::string> c;
  while (r.next(c)) {
    r.want(c, 5);
    Row row{r.integer(c[0]), r.integer(c[1]), r.num(c[2]), r.num(c[3]), r.num(c[4])};
    if (row.t < 0) r.fail("interval must be nonnegative");
    if (!load_at.count(row.bus) && !pv_at.count(row.bus))
      r.fail("bus " + std::to_string(row.bus) + " hosts no load or pv unit");
    T = std::max(T, row.t + 1);
    rows.push_back(row);
  }
  if (rows.empty()) r.fail("horizon file has no data rows");

  opf::HorizonData h;
  h.dt_hours = dt_hours;
  const auto nl = static_cast<Eigen::Index>(assets.load_bus.size());
  const auto np = static_cast<Eigen::Index>(assets.pv_bus.size());
  h.load_kw = Eigen::MatrixXd::Constant(T, nl, std::nan(""));
  h.critical_kw = Eigen::MatrixXd::Constant(T, nl, std::nan(""));
  h.pv_kw = Eigen::MatrixXd::Constant(T, np, std::nan(""));
  for (const auto& row : rows) {
    if (auto it = load_at.find(row.bus); it != load_at.end()) {
      if (!std::isnan(h.load_kw(row.t, it->second)))
        throw data_error(path + ": duplicate row for interval " + std::to_string(row.t) +
                         ", bus " + std::to_string(row.bus));
      h.load_kw(row.t, it->second) = row.load;
      h.critical_kw(row.t, it->second) = row.critical;
    }
    if (auto it = pv_at.find(row.bus); it != pv_at.end()) h.pv_kw(row.t, it->second) = row.pv;
  }
  if (h.load_kw.hasNaN() || h.pv_kw.hasNaN())
    throw data_error(path + ": missing rows; every (interval, unit bus) pair must appear");
  return h;
}

inline void write_horizon(const std::string& path, const net::AssetMap& assets,
                          const opf::HorizonData& h) {
  std::map<int, int> load_at, pv_at;
  for (std::size_t k = 0; k < assets.load_bus.size(); ++k)
    load_at[assets.load_bus[k]] = static_cast<int>(k);
  for (std::size_t k = 0; k < assets.pv_bus.size(); ++k)
    pv_at[assets.pv_bus[k]] = static_cast<int>(k);
  std::set<int> buses;
  for (auto& [b, k] : load_at) buses.insert(b);
  for (auto& [b, k] : pv_at) buses.insert(b);

  auto out = detail::open_out(path);
  out << "interval,bus,load_kw,critical_kw,pv_kw\n";
  for (int t = 0; t < h.intervals(); ++t)
    for (int b : buses) {
      const auto l = load_at.find(b);
      const auto p = pv_at.find(b);
      out << t << ',' << b << ',' << detail::fmt(l == load_at.end() ? 0.0 : h.load_kw(t, l->second))
          << ',' << detail::fmt(l == load_at.end() ? 0.0 : h.critical_kw(t, l->second)) << ','
          << detail::fmt(p == pv_at.end() ? 0.0 : h.pv_kw(t, p->second)) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Forecast-error samples: interval,bus,error_kw
// Day-major blocks: sample 0 intervals 0..T-1 (units in placement order per
// interval), then sample 1, and so on.
// ---------------------------------------------------------------------------

struct SampleFile {
  unc::ErrorSampleSet samples;
  std::vector<int> buses;  // unit order, as listed in the first interval
};

inline SampleFile read_samples(const std::string& path,
                               const std::vector<int>* expected_buses = nullptr) {
  detail::CsvReader r(path);
  r.expect_header("interval,bus,error_kw");
  struct Row {
    int t, bus;
    double err;
  };
  std::vector<Row> rows;
  std::vector<std::string> c;
  int T = 0;
  while (r.next(c)) {
    r.want(c, 3);
    Row row{r.integer(c[0]), r.integer(c[1]), r.num(c[2])};
    if (row.t < 0) r.fail("interval must be nonnegative");
    T = std::max(T, row.t + 1);
    rows.push_back(row);
  }
  if (rows.empty()) r.fail("sample file has no data rows");

  std::vector<int> buses;
  if (expected_buses) {
    buses = *expected_buses;
  } else {
    for (const auto& row : rows) {
      if (row.t != 0) break;
      buses.push_back(row.bus);
    }
    if (T == 1)
      throw data_error(path +
                       ": single-interval sample files need the unit order supplied externally");
  }
  const auto n = static_cast<int>(buses.size());
  if (n == 0 || rows.size() % static_cast<std::size_t>(n * T) != 0)
    throw data_error(path + ": row count is not a whole number of samples (" +
                     std::to_string(rows.size()) + " rows, " + std::to_string(n) + " units, " +
                     std::to_string(T) + " intervals)");
  const auto n_samples = rows.size() / static_cast<std::size_t>(n * T);

  SampleFile out;
  out.buses = buses;
  out.samples.n_units = n;
  out.samples.by_interval.assign(static_cast<std::size_t>(T), {});
  for (auto& iv : out.samples.by_interval)
    iv.assign(n_samples, Eigen::VectorXd::Zero(n));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto s = i / static_cast<std::size_t>(n * T);
    const int t = static_cast<int>(i / static_cast<std::size_t>(n)) % T;
    const int k = static_cast<int>(i % static_cast<std::size_t>(n));
    if (rows[i].t != t || rows[i].bus != buses[static_cast<std::size_t>(k)])
      throw data_error(path + ": row " + std::to_string(i + 2) +
                       " breaks the day-major (interval, bus) ordering");
    out.samples.by_interval[static_cast<std::size_t>(t)][s][k] = rows[i].err;
  }
  return out;
}

inline void write_samples(const std::string& path, const unc::ErrorSampleSet& samples,
                          const std::vector<int>& buses) {
  if (static_cast<int>(buses.size()) != samples.n_units)
    throw data_error("bus list does not match the sample dimension");
  if (samples.by_interval.empty()) throw data_error("no samples to write");
  const auto n_samples = samples.by_interval.front().size();
  auto out = detail::open_out(path);
  out << "interval,bus,error_kw\n";
  for (std::size_t s = 0; s < n_samples; ++s)
    for (std::size_t t = 0; t < samples.by_interval.size(); ++t) {
      if (samples.by_interval[t].size() != n_samples)
        throw data_error("ragged sample set; intervals disagree on the sample count");
      for (int k = 0; k < samples.n_units; ++k)
        out << t << ',' << buses[static_cast<std::size_t>(k)] << ','
            << detail::fmt(samples.by_interval[t][s][k]) << '\n';
    }
}

// ---------------------------------------------------------------------------
// Moments JSON
// ---------------------------------------------------------------------------

inline json moments_to_json(const unc::ErrorMoments& m) {
  json intervals = json::array();
  for (const auto& iv : m.interval)
    intervals.push_back(
        {{"mean", detail::vec_json(iv.mean)}, {"covariance", detail::mat_json(iv.covariance)}});
  return {{"schema_version", schema_version},
          {"kind", "moments"},
          {"n_units", m.n_units},
          {"intervals", std::move(intervals)}};
}

inline unc::ErrorMoments moments_from_json(const json& j) {
  detail::check_version(j, "moments");
  unc::ErrorMoments m;
  m.n_units = detail::req(j, "n_units").get<int>();
  if (m.n_units < 1) throw data_error("moments: n_units must be positive");
  const auto& ivs = detail::req(j, "intervals");
  if (!ivs.is_array() || ivs.empty()) throw data_error("moments: intervals must be non-empty");
  for (const auto& e : ivs) {
    unc::IntervalMoments iv;
    iv.mean = detail::vec_from(detail::req(e, "mean"), "moments mean");
    Eigen::MatrixXd cov = detail::mat_from(detail::req(e, "covariance"), "moments covariance");
    if (iv.mean.size() != m.n_units || cov.rows() != m.n_units || cov.cols() != m.n_units)
      throw data_error("moments: interval dimensions disagree with n_units");
    if (!cov.isApprox(cov.transpose(), 1e-9)) throw data_error("moments: covariance asymmetric");
    iv.covariance = unc::detail::psd_repair(cov, &iv.cov_sqrt);
    iv.stddev = iv.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    iv.mean_total = iv.mean.sum();
    iv.sigma_total = std::sqrt(std::max(0.0, iv.covariance.sum()));
    m.interval.push_back(std::move(iv));
  }
  return m;
}

inline void write_moments(const std::string& path, const unc::ErrorMoments& m) {
  save_json(path, moments_to_json(m));
}

inline unc::ErrorMoments read_moments(const std::string& path) {
  return moments_from_json(load_json(path));
}

// ---------------------------------------------------------------------------
// Case parameters (weights, batteries, limits) as JSON fragments
// ---------------------------------------------------------------------------

inline json weights_to_json(const opf::CostWeights& w) {
  return {{"m_grid", w.m_grid},
          {"m_reserve", w.m_reserve},
          {"m_solar_curtail", w.m_solar_curtail},
          {"m_load_curtail", w.m_load_curtail},
          {"m_degradation", w.m_degradation}};
}

inline opf::CostWeights weights_from_json(const json& j) {
  opf::CostWeights w;
  w.m_grid = detail::req(j, "m_grid").get<double>();
  w.m_reserve = detail::req(j, "m_reserve").get<double>();
  w.m_solar_curtail = detail::req(j, "m_solar_curtail").get<double>();
  w.m_load_curtail = detail::req(j, "m_load_curtail").get<double>();
  w.m_degradation = detail::req(j, "m_degradation").get<double>();
  return w;
}

inline json battery_to_json(const opf::BatteryParams& b) {
  return {{"capacity_kwh", b.capacity_kwh}, {"p_charge_max", b.p_charge_max},
          {"p_discharge_max", b.p_discharge_max}, {"soc_min", b.soc_min},
          {"soc_max", b.soc_max}, {"eta_charge", b.eta_charge},
          {"eta_discharge", b.eta_discharge}, {"soc_init", b.soc_init}};
}

inline opf::BatteryParams battery_from_json(const json& j) {
  opf::BatteryParams b;
  b.capacity_kwh = detail::req(j, "capacity_kwh").get<double>();
  b.p_charge_max = detail::req(j, "p_charge_max").get<double>();
  b.p_discharge_max = detail::req(j, "p_discharge_max").get<double>();
  b.soc_min = detail::req(j, "soc_min").get<double>();
  b.soc_max = detail::req(j, "soc_max").get<double>();
  b.eta_charge = detail::req(j, "eta_charge").get<double>();
  b.eta_discharge = detail::req(j, "eta_discharge").get<double>();
  b.soc_init = detail::req(j, "soc_init").get<double>();
  return b;
}

// ---------------------------------------------------------------------------
// Result emission
// ---------------------------------------------------------------------------

inline json rates_to_json(const drjcc::RateVector& r) {
  return {{"eps", std::vector<double>(r.eps.begin(), r.eps.end())},
          {"eps_joint", r.eps_joint},
          {"joint", r.joint}};
}

inline json schedule_scenario_to_json(const opf::ScenarioSchedule& s) {
  return {{"p_grid", detail::vec_json(s.p_grid)},
          {"p_discharge", detail::mat_json(s.p_discharge)},
          {"p_charge", detail::mat_json(s.p_charge)},
          {"reserve", detail::mat_json(s.reserve)},
          {"response_share", detail::mat_json(s.dcoef)},
          {"soc_kwh", detail::mat_json(s.soc_kwh)},
          {"pv_kw", detail::mat_json(s.pv_kw)},
          {"load_kw", detail::mat_json(s.load_kw)},
          {"voltage", detail::mat_json(s.voltage)}};
}

inline json schedule_to_json(const opf::Schedule& s) {
  json j{{"schema_version", schema_version},
         {"kind", "schedule"},
         {"objective", s.objective},
         {"cost_breakdown",
          {{"grid_power", s.cost_grid_power},
           {"reserve", s.cost_reserve},
           {"solar_curtailment", s.cost_solar_curtail},
           {"load_curtailment", s.cost_load_curtail},
           {"storage_degradation", s.cost_degradation},
           {"island_shed", s.cost_island_shed}}},
         {"iterations", s.iterations},
         {"duality_gap", s.gap_rel},
         {"island_built", s.island_built},
         {"grid", schedule_scenario_to_json(s.grid)}};
  j["island"] = s.island_built ? schedule_scenario_to_json(s.island) : json(nullptr);
  return j;
}

inline opf::ScenarioSchedule schedule_scenario_from_json(const json& j) {
  opf::ScenarioSchedule s;
  s.p_grid = detail::vec_from(detail::req(j, "p_grid"), "schedule p_grid");
  s.p_discharge = detail::mat_from(detail::req(j, "p_discharge"), "schedule p_discharge");
  s.p_charge = detail::mat_from(detail::req(j, "p_charge"), "schedule p_charge");
  s.reserve = detail::mat_from(detail::req(j, "reserve"), "schedule reserve");
  s.dcoef = detail::mat_from(detail::req(j, "response_share"), "schedule response_share");
  s.soc_kwh = detail::mat_from(detail::req(j, "soc_kwh"), "schedule soc_kwh");
  s.pv_kw = detail::mat_from(detail::req(j, "pv_kw"), "schedule pv_kw");
  s.load_kw = detail::mat_from(detail::req(j, "load_kw"), "schedule load_kw");
  s.voltage = detail::mat_from(detail::req(j, "voltage"), "schedule voltage");
  const auto T = s.p_grid.size();
  if (s.p_discharge.rows() != T || s.p_charge.rows() != T || s.reserve.rows() != T ||
      s.dcoef.rows() != T || s.soc_kwh.rows() != T + 1 || s.pv_kw.rows() != T ||
      s.load_kw.rows() != T || s.voltage.rows() != T)
    throw data_error("schedule arrays disagree on the horizon length");
  return s;
}

inline opf::Schedule schedule_from_json(const json& j) {
  detail::check_version(j, "schedule");
  opf::Schedule s;
  s.objective = detail::req(j, "objective").get<double>();
  const auto& cb = detail::req(j, "cost_breakdown");
  s.cost_grid_power = detail::req(cb, "grid_power").get<double>();
  s.cost_reserve = detail::req(cb, "reserve").get<double>();
  s.cost_solar_curtail = detail::req(cb, "solar_curtailment").get<double>();
  s.cost_load_curtail = detail::req(cb, "load_curtailment").get<double>();
  s.cost_degradation = detail::req(cb, "storage_degradation").get<double>();
  s.cost_island_shed = detail::req(cb, "island_shed").get<double>();
  s.iterations = detail::req(j, "iterations").get<int>();
  s.gap_rel = detail::req(j, "duality_gap").get<double>();
  s.island_built = detail::req(j, "island_built").get<bool>();
  s.grid = schedule_scenario_from_json(detail::req(j, "grid"));
  if (s.island_built) s.island = schedule_scenario_from_json(detail::req(j, "island"));
  return s;
}

inline json report_to_json(const harness::ReliabilityReport& r) {
  json families = json::object();
  for (int k = 0; k < drjcc::n_families; ++k)
    families[drjcc::family_name(k)] = r.family_violations[static_cast<std::size_t>(k)];
  return {{"schema_version", schema_version},
          {"kind", "reliability_report"},
          {"method", r.method},
          {"set", r.ambiguity},
          {"eps_joint", r.eps_joint},
          {"daily_reliability", r.daily_reliability},
          {"mean", r.mean_reliability},
          {"per_family_counts", std::move(families)}};
}

inline void write_report(const std::string& path, const harness::ReliabilityReport& r) {
  save_json(path, report_to_json(r));
}

/// One row per simulated day per cell; ready for a grouped box plot.
inline void write_boxplot_csv(const std::string& path,
                              const std::vector<harness::ReliabilityReport>& reports) {
  auto out = detail::open_out(path);
  out << "method,set,eps_joint,day,reliability_pct\n";
  for (const auto& r : reports)
    for (std::size_t d = 0; d < r.daily_reliability.size(); ++d)
      out << r.method << ',' << r.ambiguity << ',' << detail::fmt(r.eps_joint) << ',' << d << ','
          << detail::fmt(r.daily_reliability[d]) << '\n';
}

/// Mean daily reliability per cell. Failed cells may be included with an
/// explicit status marker so a partial benchmark is still a complete table.
inline void write_summary_csv(const std::string& path,
                              const std::vector<harness::ReliabilityReport>& reports,
                              const std::vector<std::string>* status = nullptr) {
  auto out = detail::open_out(path);
  out << "method,set,eps_joint,mean_reliability,status\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const std::string st = status && i < status->size() ? (*status)[i] : "ok";
    out << r.method << ',' << r.ambiguity << ',' << detail::fmt(r.eps_joint) << ','
        << (st == "ok" ? detail::fmt(r.mean_reliability) : "") << ',' << st << '\n';
  }
}

}  // namespace mgdr::io
