#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mgdr/opf.hpp"

using namespace mgdr;
using namespace mgdr::opf;

namespace {

BatteryParams test_battery(double cap = 2.0, double pmax = 2.0) {
  BatteryParams b;
  b.capacity_kwh = cap;
  b.p_charge_max = pmax;
  b.p_discharge_max = pmax;
  b.soc_min = 0.2;
  b.soc_max = 1.0;
  b.eta_charge = 0.95;
  b.eta_discharge = 0.95;
  b.soc_init = 0.5;
  return b;
}

/// One feeder bus hanging off the slack busbar with load, PV and a battery.
CaseDef two_bus_case(CostWeights w, BatteryParams b = test_battery()) {
  CaseDef c{net::Network(2, 0, {{0, 1, 0.02}}),
            net::AssetMap{{0}, {1}, {1}, {1}},
            {b},
            w,
            0.95,
            1.05};
  return c;
}

HorizonData uniform_horizon(int T, double load, double pv, double critical_frac = 0.25) {
  HorizonData h;
  h.dt_hours = 0.25;
  h.load_kw = Eigen::MatrixXd::Constant(T, 1, load);
  h.critical_kw = Eigen::MatrixXd::Constant(T, 1, critical_frac * load);
  h.pv_kw = Eigen::MatrixXd::Constant(T, 1, pv);
  return h;
}

}  // namespace

TEST_CASE("zero demand zero cost") {
  CostWeights w;
  auto c = two_bus_case(w);
  auto h = uniform_horizon(3, 0.0, 0.0);
  auto s = solve_deterministic(c, h);
  CHECK(s.objective == Catch::Approx(0.0).margin(1e-6));
  CHECK(s.grid.p_grid.lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(s.grid.p_discharge.lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(s.grid.voltage.minCoeff() == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("grid import cost arithmetic") {
  // 2 kW load served from the grid for one 15-minute interval
  CostWeights w;
  w.m_grid = 0.023;
  w.m_reserve = 0.0;
  w.m_solar_curtail = 0.0;
  w.m_load_curtail = 0.0;
  w.m_degradation = 0.27;  // keeps the battery idle
  auto c = two_bus_case(w);
  auto h = uniform_horizon(1, 2.0, 0.0);
  auto s = solve_deterministic(c, h);
  CHECK(s.grid.p_grid[0] == Catch::Approx(2.0).margin(1e-5));
  CHECK(s.objective == Catch::Approx(0.25 * 0.023 * 4.0).margin(1e-5));
  CHECK(s.cost_grid_power == Catch::Approx(0.023).margin(1e-5));
}

TEST_CASE("degradation cost arithmetic") {
  // expensive grid power makes the battery serve a 1 kW load
  CostWeights w;
  w.m_grid = 1000.0;
  w.m_reserve = 0.0;
  w.m_solar_curtail = 0.0;
  w.m_load_curtail = 0.0;
  w.m_degradation = 0.27;
  auto c = two_bus_case(w);
  auto h = uniform_horizon(1, 1.0, 0.0);
  auto s = solve_deterministic(c, h);
  CHECK(s.grid.p_discharge(0, 0) == Catch::Approx(1.0).margin(1e-3));
  CHECK(s.objective == Catch::Approx(0.25 * 0.27 * 1.0).margin(1e-3));
}

TEST_CASE("pv matching load keeps the grid idle") {
  CostWeights w;
  auto c = two_bus_case(w);
  auto h = uniform_horizon(4, 3.0, 3.0);
  auto s = solve_deterministic(c, h);
  CHECK(s.grid.p_grid.lpNorm<Eigen::Infinity>() < 1e-4);
  CHECK(s.grid.pv_kw.minCoeff() == Catch::Approx(3.0).margin(1e-4));
  CHECK(s.objective == Catch::Approx(0.0).margin(1e-4));
}

TEST_CASE("dispatch agrees with an exhaustive discretized search") {
  CostWeights w;
  w.m_grid = 0.5;
  w.m_reserve = 0.0;
  w.m_solar_curtail = 0.0;
  w.m_load_curtail = 0.0;
  w.m_degradation = 0.02;
  auto b = test_battery(2.0, 1.5);
  auto c = two_bus_case(w, b);
  HorizonData h;
  h.dt_hours = 0.25;
  h.load_kw.resize(2, 1);
  h.load_kw << 1.8, 0.2;
  h.critical_kw = Eigen::MatrixXd::Zero(2, 1);
  h.pv_kw = Eigen::MatrixXd::Zero(2, 1);

  auto s = solve_deterministic(c, h);

  // independent reference: grid over net battery power per interval
  double best = 1e300;
  const int K = 400;
  for (int i = 0; i <= K; ++i)
    for (int j = 0; j <= K; ++j) {
      // net battery output in [-1.5, 1.5] per interval
      const double n0 = -1.5 + 3.0 * i / K;
      const double n1 = -1.5 + 3.0 * j / K;
      double cost = 0.0, e = 0.5 * 2.0;
      bool ok = true;
      for (int t = 0; t < 2; ++t) {
        const double net = t == 0 ? n0 : n1;
        const double pd = std::max(net, 0.0), pc = std::max(-net, 0.0);
        const double pg = h.load_kw(t, 0) - net;
        if (pg < -1e-12) {
          ok = false;
          break;
        }
        e += 0.25 * (0.95 * pc - pd / 0.95);
        if (e < 0.2 * 2.0 - 1e-9 || e > 2.0 + 1e-9) {
          ok = false;
          break;
        }
        cost += 0.25 * (w.m_grid * pg * pg + w.m_degradation * (pd + pc));
      }
      if (ok) best = std::min(best, cost);
    }
  CHECK(s.objective == Catch::Approx(best).margin(2e-3));
}

TEST_CASE("state of charge telescopes") {
  CostWeights w;
  auto c = two_bus_case(w);
  HorizonData h;
  h.dt_hours = 0.25;
  h.load_kw.resize(6, 1);
  h.load_kw << 0.5, 2.0, 0.1, 1.5, 0.7, 1.2;
  h.critical_kw = Eigen::MatrixXd::Zero(6, 1);
  h.pv_kw.resize(6, 1);
  h.pv_kw << 0.0, 0.5, 2.5, 0.0, 1.0, 0.0;
  auto s = solve_deterministic(c, h);
  double sum = 0.0;
  for (int t = 0; t < 6; ++t)
    sum += 0.25 * (0.95 * s.grid.p_charge(t, 0) - s.grid.p_discharge(t, 0) / 0.95);
  CHECK(s.grid.soc_kwh(6, 0) - s.grid.soc_kwh(0, 0) == Catch::Approx(sum).margin(1e-6));
  CHECK(s.grid.soc_kwh(0, 0) == Catch::Approx(0.5 * 2.0).margin(1e-7));
  // power balance residual per interval
  for (int t = 0; t < 6; ++t) {
    const double res = s.grid.p_grid[t] + s.grid.p_discharge(t, 0) - s.grid.p_charge(t, 0) +
                       s.grid.pv_kw(t, 0) - s.grid.load_kw(t, 0);
    CHECK(std::abs(res) < 1e-6);
  }
  // grid scenario never sheds load
  CHECK((s.grid.load_kw - h.load_kw).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("island mirror without a blackout window") {
  CostWeights w;
  auto c = two_bus_case(w);
  auto h = uniform_horizon(4, 1.0, 0.5);
  OpfOptions opt;
  opt.force_island_build = true;
  auto forced = solve_deterministic(c, h, opt);
  auto lean = solve_deterministic(c, h);
  CHECK(forced.island_built);
  CHECK_FALSE(lean.island_built);
  CHECK((forced.island.p_grid - forced.grid.p_grid).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((forced.island.soc_kwh - forced.grid.soc_kwh).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK(forced.objective == Catch::Approx(lean.objective).margin(1e-5));
}

TEST_CASE("blackout window cuts the grid and supplies critical load") {
  CostWeights w;
  auto c = two_bus_case(w, test_battery(4.0, 3.0));
  HorizonData h = uniform_horizon(4, 1.0, 0.0, 0.5);
  h.blackout = {{1, 3}};
  auto s = solve_deterministic(c, h);
  REQUIRE(s.island_built);
  CHECK(s.island.p_grid[0] > -1e-7);
  CHECK(std::abs(s.island.p_grid[1]) < 1e-6);
  CHECK(std::abs(s.island.p_grid[2]) < 1e-6);
  for (int t = 1; t < 3; ++t) {
    CHECK(s.island.load_kw(t, 0) >= 0.5 - 1e-6);          // critical supplied
    CHECK(s.island.load_kw(t, 0) <= 1.0 + 1e-6);
  }
  // stored energy identical across scenarios until the window opens
  for (int t = 0; t <= 1; ++t)
    CHECK(s.grid.soc_kwh(t, 0) == Catch::Approx(s.island.soc_kwh(t, 0)).margin(1e-6));
  // outside the window the island serves the full load
  CHECK(s.island.load_kw(0, 0) == Catch::Approx(1.0).margin(1e-7));
  CHECK(s.island.load_kw(3, 0) == Catch::Approx(1.0).margin(1e-7));
  CHECK(s.cost_island_shed >= -1e-12);
}

TEST_CASE("an impossible island is reported with its binding rows") {
  CostWeights w;
  auto c = two_bus_case(w, test_battery(0.05, 0.02));  // tiny battery
  HorizonData h = uniform_horizon(4, 5.0, 0.0, 1.0);   // all load critical
  h.blackout = {{1, 3}};
  try {
    solve_deterministic(c, h);
    FAIL("expected infeasibility");
  } catch (const infeasible_error& e) {
    CHECK_FALSE(e.implicated_rows().empty());
  }
}

TEST_CASE("grid cost weight scales the objective") {
  CostWeights w;
  w.m_grid = 0.023;
  auto c = two_bus_case(w);
  auto h = uniform_horizon(3, 2.0, 0.0);
  auto s1 = solve_deterministic(c, h);
  CostWeights w2 = w;
  w2.m_grid *= 2.0;
  auto c2 = two_bus_case(w2);
  auto s2 = solve_deterministic(c2, h);
  CHECK(s2.objective > s1.objective + 1e-6);
}

TEST_CASE("raising the curtailment weight reduces curtailed energy") {
  auto curtailed = [](double ms) {
    CostWeights w;
    w.m_grid = 0.023;
    w.m_reserve = 0.0;
    w.m_solar_curtail = ms;
    w.m_load_curtail = 0.0;
    w.m_degradation = 0.27;
    auto c = two_bus_case(w, test_battery(2.0, 2.0));
    auto h = uniform_horizon(1, 1.0, 5.0);
    auto s = solve_deterministic(c, h);
    return 5.0 - s.grid.pv_kw(0, 0);
  };
  const double lo = curtailed(0.01), mid = curtailed(0.04), hi = curtailed(0.08);
  CHECK(lo >= mid - 1e-6);
  CHECK(mid >= hi - 1e-6);
  CHECK(lo > hi + 1e-3);  // strictly less curtailment at the higher weight
}

TEST_CASE("fixed total error forces reserve procurement") {
  CostWeights w;
  auto c = two_bus_case(w);
  auto h = uniform_horizon(2, 1.0, 0.5);
  OpfOptions opt;
  opt.fixed_error_total_kw = Eigen::VectorXd::Constant(2, 0.4);
  auto s = solve_deterministic(c, h, opt);
  for (int t = 0; t < 2; ++t) {
    CHECK(s.grid.dcoef(t, 0) == Catch::Approx(1.0).margin(1e-6));  // single storage
    CHECK(s.grid.reserve(t, 0) >= 0.4 - 1e-6);
    // headroom rows hold
    CHECK(s.grid.p_discharge(t, 0) + s.grid.reserve(t, 0) <= 2.0 + 1e-6);
    CHECK(s.grid.p_charge(t, 0) - s.grid.reserve(t, 0) >= -1e-6);
    CHECK(s.grid.soc_kwh(t, 0) - 0.25 * s.grid.reserve(t, 0) >= 0.2 * 2.0 - 1e-6);
  }
  CHECK(s.cost_reserve > 0.0);
}

TEST_CASE("voltage stays inside the band under heavy load") {
  CostWeights w;
  w.m_load_curtail = 0.0;
  // long feeder: 1 ohm; 10 kW load would push the voltage below 0.95
  CaseDef c{net::Network(2, 0, {{0, 1, 1.0}}), net::AssetMap{{0}, {1}, {1}, {1}},
            {test_battery(8.0, 8.0)}, w, 0.95, 1.05};
  auto h = uniform_horizon(1, 0.4, 0.0);
  auto s = solve_deterministic(c, h);
  CHECK(s.grid.voltage.minCoeff() >= 0.95 - 1e-6);
  CHECK(s.grid.voltage.maxCoeff() <= 1.05 + 1e-6);
}

TEST_CASE("malformed inputs are rejected at build time") {
  CostWeights w;
  auto c = two_bus_case(w);
  auto h = uniform_horizon(2, 1.0, 0.0);

  SECTION("bad battery") {
    auto bad = test_battery();
    bad.soc_init = 0.1;  // below soc_min
    CHECK_THROWS_AS(two_bus_case(w, bad).validate(), config_error);
  }
  SECTION("critical above load") {
    auto h2 = h;
    h2.critical_kw.setConstant(2.0);
    CHECK_THROWS_AS(build_opf(c, h2), data_error);
  }
  SECTION("window outside horizon") {
    auto h2 = h;
    h2.blackout = {{1, 5}};
    CHECK_THROWS_AS(build_opf(c, h2), data_error);
  }
  SECTION("horizon does not match assets") {
    auto h2 = h;
    h2.pv_kw = Eigen::MatrixXd::Zero(2, 3);
    CHECK_THROWS_AS(build_opf(c, h2), data_error);
  }
  SECTION("negative weight") {
    CostWeights bad;
    bad.m_grid = -1.0;
    CHECK_THROWS_AS(two_bus_case(bad).validate(), config_error);
  }
}
