#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mgdr/harness.hpp"

using namespace mgdr;

namespace {

opf::BatteryParams test_battery(double cap = 2.0, double pmax = 2.0) {
  opf::BatteryParams b;
  b.capacity_kwh = cap;
  b.p_charge_max = pmax;
  b.p_discharge_max = pmax;
  b.soc_init = 0.5;
  return b;
}

opf::CaseDef two_bus_case() {
  return opf::CaseDef{net::Network(2, 0, {{0, 1, 0.02}}),
                      net::AssetMap{{0}, {1}, {1}, {1}},
                      {test_battery()},
                      opf::CostWeights{},
                      0.95,
                      1.05};
}

/// Chain feeder slack - storage - PV: the droop response reaches the PV bus
/// through only part of the line impedance, so realized errors move its
/// voltage even with the response active.
opf::CaseDef chain_case() {
  return opf::CaseDef{net::Network(3, 0, {{0, 1, 0.5}, {1, 2, 0.5}}),
                      net::AssetMap{{0}, {1}, {2}, {2}},
                      {test_battery()},
                      opf::CostWeights{},
                      0.95,
                      1.05};
}

opf::HorizonData uniform_horizon(int T, double load, double pv, double critical_frac = 0.25) {
  opf::HorizonData h;
  h.dt_hours = 0.25;
  h.load_kw = Eigen::MatrixXd::Constant(T, 1, load);
  h.critical_kw = Eigen::MatrixXd::Constant(T, 1, critical_frac * load);
  h.pv_kw = Eigen::MatrixXd::Constant(T, 1, pv);
  return h;
}

unc::ErrorMoments point_moments(int T, double mu, double sigma) {
  unc::ErrorMoments m;
  m.n_units = 1;
  m.interval.resize(static_cast<std::size_t>(T));
  for (auto& iv : m.interval) {
    iv.mean = Eigen::VectorXd::Constant(1, mu);
    iv.stddev = Eigen::VectorXd::Constant(1, sigma);
    iv.covariance = Eigen::MatrixXd::Constant(1, 1, sigma * sigma);
    iv.cov_sqrt = Eigen::MatrixXd::Constant(1, 1, sigma);
    iv.mean_total = mu;
    iv.sigma_total = sigma;
  }
  return m;
}

Eigen::VectorXd zeta1(double v) { return Eigen::VectorXd::Constant(1, v); }

}  // namespace

TEST_CASE("zero realized error never violates a feasible schedule") {
  auto c = two_bus_case();
  auto h = uniform_horizon(3, 2.0, 1.0);
  auto mom = point_moments(3, 0.0, 0.05);

  auto det = opf::solve_deterministic(c, h);
  auto rob = drjcc::solve_robust(c, h, mom, unc::AmbiguitySet::symmetric,
                                 drjcc::bonferroni_rates(0.05));
  REQUIRE(rob.feasible());
  for (int t = 0; t < 3; ++t) {
    CHECK(harness::replay_interval(c, det.grid, t, zeta1(0.0), h.dt_hours).all_ok());
    CHECK(harness::replay_interval(c, rob.schedule.grid, t, zeta1(0.0), h.dt_hours).all_ok());
  }
}

TEST_CASE("constructed breaches flag exactly the right families") {
  auto c = chain_case();
  auto h = uniform_horizon(2, 0.2, 0.1);
  const double sigma = 0.01;
  auto mom = point_moments(2, 0.0, sigma);
  // loose budgets on the converter families, tight ones elsewhere, so each
  // family's breach threshold is distinct
  auto rates = drjcc::custom_rates({0.0015, 0.02, 0.02, 0.0015, 0.0035, 0.0035}, 0.05);
  auto sol = drjcc::solve_robust(c, h, mom, unc::AmbiguitySet::symmetric, rates);
  REQUIRE(sol.feasible());
  const auto& g = sol.schedule.grid;

  const double lam_reserve = std::sqrt(1.0 / (2.0 * 0.0015));   // ~18.26
  const double lam_voltage = std::sqrt(1.0 / (2.0 * 0.0035));   // ~11.95
  REQUIRE(g.reserve(0, 0) == Catch::Approx(lam_reserve * sigma).margin(1e-4));

  // shortfall between the voltage and reserve thresholds: only the lower
  // voltage family gives way
  const double mid = 0.5 * (lam_voltage + lam_reserve) * sigma;
  auto r1 = harness::replay_interval(c, g, 0, zeta1(mid), h.dt_hours);
  CHECK_FALSE(r1.ok[5]);
  CHECK(r1.ok[0]);
  CHECK(r1.ok[1]);
  CHECK(r1.ok[2]);
  CHECK(r1.ok[3]);
  CHECK(r1.ok[4]);

  // a bigger shortfall exhausts the procured reserve as well
  auto r2 = harness::replay_interval(c, g, 0, zeta1(1.2 * lam_reserve * sigma), h.dt_hours);
  CHECK_FALSE(r2.ok[0]);
  CHECK_FALSE(r2.ok[5]);
  CHECK(r2.ok[1]);

  // a large surplus lifts the PV bus over the ceiling; no response is drawn
  auto r3 = harness::replay_interval(c, g, 0, zeta1(-0.5), h.dt_hours);
  CHECK_FALSE(r3.ok[4]);
  CHECK(r3.ok[0]);
  CHECK(r3.ok[5]);
  CHECK(r3.response_total == 0.0);

  // dimension mismatches are rejected
  CHECK_THROWS_AS(harness::replay_interval(c, g, 0, Eigen::VectorXd::Zero(2), h.dt_hours),
                  data_error);
  CHECK_THROWS_AS(harness::replay_interval(c, g, 9, zeta1(0.0), h.dt_hours), data_error);
}

TEST_CASE("empirical violation rate stays inside the budget") {
  auto c = two_bus_case();
  auto h = uniform_horizon(1, 2.0, 1.0);
  const double sigma = 0.05;
  auto mom = point_moments(1, 0.0, sigma);
  auto sol = drjcc::solve_robust(c, h, mom, unc::AmbiguitySet::symmetric,
                                 drjcc::bonferroni_rates(0.01));
  REQUIRE(sol.feasible());

  const int n = 10000;
  auto draws = unc::generate_synthetic_errors(Eigen::MatrixXd::Constant(1, 1, sigma),
                                              unc::NoiseFamily::gaussian, 42, n);
  int bad = 0;
  for (int k = 0; k < n; ++k)
    if (!harness::replay_interval(c, sol.schedule.grid, 0, draws.by_interval[0][static_cast<std::size_t>(k)],
                                  h.dt_hours)
             .all_ok())
      ++bad;
  CHECK(static_cast<double>(bad) / n <= 0.01);
}

TEST_CASE("daily reliability arithmetic") {
  Eigen::MatrixXi ok = Eigen::MatrixXi::Ones(1, 96);
  CHECK(harness::daily_reliability(ok)[0] == Catch::Approx(100.0));
  ok(0, 17) = 0;
  CHECK(harness::daily_reliability(ok)[0] == Catch::Approx(100.0 * 95.0 / 96.0));

  Eigen::MatrixXi days = Eigen::MatrixXi::Ones(30, 4);
  days(3, 0) = days(3, 1) = 0;
  auto rel = harness::daily_reliability(days);
  REQUIRE(rel.size() == 30);
  CHECK(rel[3] == Catch::Approx(50.0));
  CHECK(rel[0] == Catch::Approx(100.0));

  CHECK_THROWS_AS(harness::daily_reliability(Eigen::MatrixXi()), data_error);
}

TEST_CASE("wilson half width") {
  // symmetric extremes and growth as the sample shrinks
  CHECK(harness::wilson_halfwidth(0.5, 100.0) == Catch::Approx(0.0962).margin(5e-4));
  CHECK(harness::wilson_halfwidth(0.5, 25.0) > harness::wilson_halfwidth(0.5, 100.0));
  CHECK(harness::wilson_halfwidth(0.0, 50.0) > 0.0);
  CHECK_THROWS_AS(harness::wilson_halfwidth(0.5, 0.0), config_error);
}

TEST_CASE("held out evaluation produces labeled per-day statistics") {
  auto c = two_bus_case();
  auto h = uniform_horizon(2, 2.0, 1.0);
  const Eigen::MatrixXd envelope = Eigen::MatrixXd::Constant(2, 1, 0.05);
  auto fit = unc::generate_synthetic_errors(envelope, unc::NoiseFamily::gaussian, 1, 40);
  auto heldout = unc::generate_synthetic_errors(envelope, unc::NoiseFamily::gaussian, 2, 10);

  harness::GridConfig cfg;
  cfg.methods = {drjcc::Method::scc, drjcc::Method::bonferroni};
  cfg.sets = {unc::AmbiguitySet::symmetric};
  cfg.eps_list = {0.1, 0.05};
  auto reports = harness::run_grid(c, h, fit, heldout, cfg);
  REQUIRE(reports.size() == 4);
  CHECK(reports[0].method == "scc");
  CHECK(reports[2].method == "bonferroni");
  CHECK(reports[0].ambiguity == "symmetric");
  CHECK(reports[1].eps_joint == 0.05);
  for (const auto& r : reports) {
    CHECK(r.interval_ok.rows() == 10);
    CHECK(r.interval_ok.cols() == 2);
    REQUIRE(r.daily_reliability.size() == 10);
    for (double v : r.daily_reliability) {
      CHECK(v >= 0.0);
      CHECK(v <= 100.0);
    }
    CHECK(r.mean_reliability >= 0.0);
    CHECK(r.mean_reliability <= 100.0);
  }

  // handing the fitting samples back as "held out" data is rejected
  CHECK_THROWS_AS(harness::run_grid(c, h, fit, fit, cfg), data_error);
}

TEST_CASE("static forecasts make the rolling run a fixed point") {
  auto c = two_bus_case();
  auto h = uniform_horizon(4, 2.0, 1.0);
  auto single = opf::solve_deterministic(c, h);

  auto trace = harness::rolling_horizon_run(c, h);
  REQUIRE(trace.steps.size() == 4);
  CHECK(trace.infeasible_steps == 0);
  for (int k = 0; k < 4; ++k) {
    const auto& st = trace.steps[static_cast<std::size_t>(k)];
    CHECK(st.resolved);
    CHECK(st.p_grid == Catch::Approx(single.grid.p_grid[k]).margin(5e-4));
    CHECK(st.p_discharge[0] == Catch::Approx(single.grid.p_discharge(k, 0)).margin(5e-4));
    // realized state of charge tracks the single-shot plan
    CHECK(trace.soc_kwh(k + 1, 0) == Catch::Approx(single.grid.soc_kwh(k + 1, 0)).margin(1e-4));
  }
  // continuity: each step's reported SoC equals the next step's start
  for (int k = 0; k < 4; ++k)
    CHECK(trace.steps[static_cast<std::size_t>(k)].soc_after_kwh[0] ==
          Catch::Approx(trace.soc_kwh(k + 1, 0)).margin(1e-9));
}

TEST_CASE("rolling run falls back and recovers around an infeasible step") {
  // island window [1,3); a large realized shortfall at t=0 drains the battery
  // below what the island needs, so the t=1 re-solve cannot be satisfied
  auto c = two_bus_case();
  c.batteries[0] = test_battery(1.0, 2.0);
  auto h = uniform_horizon(4, 0.4, 0.0, 0.875);  // critical 0.35 of 0.4
  h.blackout = std::make_pair(1, 3);

  const double sigma = 0.25;
  auto mom = point_moments(4, 0.0, sigma);
  harness::RollingConfig rc;
  rc.moments = &mom;
  rc.set = unc::AmbiguitySet::symmetric;
  rc.rates = drjcc::scc_rates(0.1);
  rc.realized_error_kw = Eigen::MatrixXd::Zero(4, 1);
  rc.realized_error_kw(0, 0) = 0.54;  // inside the procured reserve

  auto trace = harness::rolling_horizon_run(c, h, rc);
  REQUIRE(trace.steps.size() == 4);
  CHECK(trace.infeasible_steps == 2);
  CHECK(trace.steps[0].resolved);
  CHECK_FALSE(trace.steps[1].resolved);  // steered by the step-0 schedule
  CHECK_FALSE(trace.steps[2].resolved);  // depleted energy still blocks the window
  CHECK(trace.steps[3].resolved);        // window fully past, re-solve succeeds
  // the realized response drained the battery at t=0
  CHECK(trace.soc_kwh(1, 0) ==
        Catch::Approx(0.5 - 0.25 * 0.54 / 0.95 + 0.25 * 0.95 * trace.steps[0].p_charge[0])
            .margin(1e-6));
}
