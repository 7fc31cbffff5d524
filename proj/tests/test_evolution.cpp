#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include "mgdr/evolution.hpp"

using namespace mgdr;
using evo::Rates;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

opf::CaseDef two_bus_case() {
  opf::BatteryParams b;
  b.capacity_kwh = 2.0;
  b.p_charge_max = 2.0;
  b.p_discharge_max = 2.0;
  b.soc_init = 0.5;
  return opf::CaseDef{net::Network(2, 0, {{0, 1, 0.02}}),
                      net::AssetMap{{0}, {1}, {1}, {1}},
                      {b},
                      opf::CostWeights{},
                      0.95,
                      1.05};
}

opf::HorizonData uniform_horizon(int T, double load, double pv) {
  opf::HorizonData h;
  h.dt_hours = 0.25;
  h.load_kw = Eigen::MatrixXd::Constant(T, 1, load);
  h.critical_kw = Eigen::MatrixXd::Constant(T, 1, 0.25 * load);
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

}  // namespace

TEST_CASE("crossover averages the parents") {
  Rates a{0.02, 0.04, 0.01, 0.01, 0.005, 0.005};
  Rates b{0.04, 0.02, 0.01, 0.01, 0.005, 0.005};
  auto c = evo::crossover(a, b);
  CHECK(c[0] == Catch::Approx(0.03).margin(1e-15));
  CHECK(c[1] == Catch::Approx(0.03).margin(1e-15));
  CHECK(evo::crossover(a, a) == a);
  double sa = 0, sc = 0;
  for (int k = 0; k < 6; ++k) {
    sa += a[k];
    sc += c[k];
  }
  CHECK(sc == Catch::Approx(sa).margin(1e-15));
}

TEST_CASE("population spread ratio") {
  CHECK(evo::convergence_ratio({5.0, 5.0, 5.0}) == Catch::Approx(0.0).margin(1e-15));
  CHECK(evo::converged({5.0, 5.0, 5.0}, 0.02));
  CHECK(evo::convergence_ratio({1.0, 1.0, 1.0, 2.0}) == Catch::Approx(0.6).epsilon(1e-12));
  CHECK_FALSE(evo::converged({1.0, 1.0, 1.0, 2.0}, 0.02));
  CHECK(evo::convergence_ratio({100.0, 100.0, 100.0, 101.0}) ==
        Catch::Approx(101.0 / 100.25 - 1.0).epsilon(1e-12));
  CHECK(evo::converged({100.0, 100.0, 100.0, 101.0}, 0.02));
  CHECK_FALSE(evo::converged({1.0, kInf}, 0.02));
}

TEST_CASE("elite selection is a stable fitness sort") {
  CHECK(evo::detail::elite_indices({3.0, 1.0, 2.0, 4.0}, 2) == std::vector<int>{1, 2});
  CHECK(evo::detail::elite_indices({7.0, 7.0, 7.0, 7.0}, 2) == std::vector<int>{0, 1});
  CHECK(evo::detail::elite_indices({kInf, 2.0, kInf, 1.0}, 2) == std::vector<int>{3, 1});
}

TEST_CASE("mutation keeps the simplex and box invariants") {
  const double total = 0.05, floor_v = 0.001, cap = 0.05;
  std::uint64_t state = 99;
  Rates x = evo::detail::sample_simplex(state, total, floor_v, cap);

  // skipping the mutation (identical parents) returns the offspring untouched
  CHECK(evo::mutate(x, total, floor_v, cap, 0.1, false, state) == x);

  for (int trial = 0; trial < 10000; ++trial) {
    x = evo::mutate(x, total, floor_v, cap, 0.1, true, state);
    double sum = 0.0;
    for (double v : x) {
      CHECK(v >= floor_v - 1e-14);
      CHECK(v <= cap + 1e-14);
      sum += v;
    }
    CHECK(sum == Catch::Approx(total).margin(1e-12));
  }
}

TEST_CASE("clip and redistribute") {
  const double floor_v = 0.001, cap = 0.02;
  Rates in_box{0.002, 0.003, 0.004, 0.005, 0.003, 0.003};
  Rates x = in_box;
  REQUIRE(evo::detail::clip_redistribute(x, floor_v, cap, 0.02));
  CHECK(x == in_box);  // already inside the box with the right sum

  // mass pushed onto the others when one coordinate is clipped at the cap
  Rates y{0.05, 0.001, 0.001, 0.001, 0.001, 0.001};
  REQUIRE(evo::detail::clip_redistribute(y, floor_v, cap, 0.03));
  CHECK(y[0] == Catch::Approx(cap).margin(1e-14));
  double sum = 0.0;
  for (double v : y) sum += v;
  CHECK(sum == Catch::Approx(0.03).margin(1e-13));

  // impossible request: box cannot hold the target sum
  Rates z{0.01, 0.01, 0.01, 0.01, 0.01, 0.01};
  CHECK_FALSE(evo::detail::clip_redistribute(z, floor_v, cap, 0.5));
}

TEST_CASE("fixed seed reproduces the search bit for bit") {
  evo::FitnessFn f = [](const Rates& r) {
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += (r[k] - 0.001 * (k + 1)) * (r[k] - 0.001 * (k + 1));
    return s;
  };
  evo::EvoConfig cfg;
  cfg.restarts = 2;
  cfg.seed = 1234;
  auto a = evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, cfg);
  auto b = evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, cfg);
  CHECK(a.best_cost == b.best_cost);
  CHECK(a.best_rates == b.best_rates);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].best_cost == b.history[i].best_cost);
    CHECK(a.history[i].mean_cost == b.history[i].mean_cost);
    CHECK(a.history[i].r_ratio == b.history[i].r_ratio);
  }
}

TEST_CASE("search beats the injected equal-split baseline on a skewed bowl") {
  // optimum far from the equal split: most budget belongs in the first slot
  const Rates target{0.030, 0.012, 0.002, 0.002, 0.002, 0.002};
  evo::FitnessFn f = [&](const Rates& r) {
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += (r[k] - target[k]) * (r[k] - target[k]);
    return s;
  };
  evo::EvoConfig cfg;
  cfg.restarts = 3;
  cfg.seed = 7;
  auto out = evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, cfg);

  REQUIRE(std::isfinite(out.baseline_cost));
  CHECK(out.best_cost <= out.baseline_cost);
  CHECK(out.best_cost < 0.5 * out.baseline_cost);  // actually improved, not just matched
  for (const auto& rr : out.restarts) {
    for (std::size_t i = 1; i < rr.history.size(); ++i)
      CHECK(rr.history[i].best_cost <= rr.history[i - 1].best_cost + 1e-15);
  }
  double sum = 0.0;
  for (double v : out.best_rates) sum += v;
  CHECK(sum == Catch::Approx(0.05).margin(1e-12));
}

TEST_CASE("degenerate budget box collapses to a single point") {
  evo::FitnessFn f = [](const Rates& r) { return r[0]; };
  evo::EvoConfig cfg;
  cfg.restarts = 1;
  auto out = evo::optimize_rates(f, 0.006, unc::AmbiguitySet::symmetric, cfg);
  for (double v : out.best_rates) CHECK(v == Catch::Approx(0.001).margin(1e-12));
  REQUIRE(out.restarts.size() == 1);
  CHECK(out.restarts[0].converged);
  CHECK(out.restarts[0].generations == 0);
  CHECK(out.history.size() == 1);
}

TEST_CASE("impossible budget boxes are rejected up front") {
  evo::FitnessFn f = [](const Rates&) { return 1.0; };
  // floors alone already exceed the joint budget
  CHECK_THROWS_AS(evo::optimize_rates(f, 0.004, unc::AmbiguitySet::symmetric, {}), config_error);
  // cap below the floor
  evo::EvoConfig cfg;
  cfg.eps_cap = 1e-4;
  CHECK_THROWS_AS(evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, cfg), config_error);
  // odd population
  evo::EvoConfig bad;
  bad.population = 5;
  CHECK_THROWS_AS(evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, bad), config_error);
}

TEST_CASE("an all-infeasible initial population aborts with a diagnostic") {
  evo::FitnessFn f = [](const Rates&) { return kInf; };
  evo::EvoConfig cfg;
  cfg.restarts = 1;
  CHECK_THROWS_AS(evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, cfg), data_error);
}

TEST_CASE("restart results are attached and the agreement flag matches them") {
  evo::FitnessFn f = [](const Rates& r) { return 10.0 * r[0]; };
  evo::EvoConfig cfg;
  cfg.restarts = 3;
  cfg.population = 4;
  cfg.max_iterations = 2;
  cfg.inject_baseline = false;
  cfg.seed = 11;
  auto out = evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, cfg);
  REQUIRE(out.restarts.size() == 3);
  double best = kInf, spread = 0.0;
  for (const auto& rr : out.restarts) best = std::min(best, rr.cost);
  for (const auto& rr : out.restarts)
    spread = std::max(spread, (rr.cost - best) / std::max(std::abs(best), 1e-12));
  CHECK(out.best_cost == best);
  CHECK(out.spread == Catch::Approx(spread).margin(1e-15));
  CHECK(out.agreement == (spread <= 0.01));
}

TEST_CASE("identical results for any worker count") {
  evo::FitnessFn f = [](const Rates& r) {
    double s = 0.0;
    for (int k = 0; k < 6; ++k) s += (k + 1) * r[k] * r[k];
    return s;
  };
  evo::EvoConfig one, four;
  one.restarts = four.restarts = 2;
  one.threads = 1;
  four.threads = 4;
  auto a = evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, one);
  auto b = evo::optimize_rates(f, 0.05, unc::AmbiguitySet::symmetric, four);
  CHECK(a.best_cost == b.best_cost);
  CHECK(a.best_rates == b.best_rates);
}

TEST_CASE("robust schedule search stays at or below the equal split cost") {
  auto c = two_bus_case();
  auto h = uniform_horizon(2, 2.0, 1.0);
  auto mom = point_moments(2, 0.0, 0.05);
  const auto set = unc::AmbiguitySet::symmetric;
  const double eps_joint = 0.05;

  const double bonf = drjcc::solve_robust(c, h, mom, set, drjcc::bonferroni_rates(eps_joint)).cost;

  std::vector<Rates> seen;
  evo::FitnessFn fn = [&](const Rates& r) {
    seen.push_back(r);
    return drjcc::solve_robust(c, h, mom, set, drjcc::custom_rates(r, eps_joint)).cost;
  };
  evo::EvoConfig cfg;
  cfg.restarts = 1;
  cfg.population = 4;
  cfg.max_iterations = 2;
  auto out = evo::optimize_rates(fn, eps_joint, set, cfg);

  CHECK(out.best_cost <= bonf + 1e-9);
  CHECK(out.baseline_cost == Catch::Approx(bonf).margin(1e-12));
  for (const auto& r : seen) {
    double sum = 0.0;
    for (double v : r) {
      CHECK(v >= 0.001 - 1e-14);
      sum += v;
    }
    CHECK(sum <= eps_joint + 1e-12);
  }
}

TEST_CASE("history serializes with a header and one row per iteration") {
  std::vector<evo::HistoryRow> rows{{0, 2.0, 3.0, 0.5}, {1, 1.0, 1.5, 0.1}};
  std::ostringstream os;
  evo::write_history_csv(os, rows);
  std::istringstream is(os.str());
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "iteration,best_cost,mean_cost,r_ratio");
  int n = 0;
  while (std::getline(is, line)) ++n;
  CHECK(n == 2);
}
