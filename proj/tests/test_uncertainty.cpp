#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mgdr/uncertainty.hpp"

using namespace mgdr;
using namespace mgdr::unc;

namespace {

ErrorSampleSet one_bus_samples(std::vector<double> vals) {
  ErrorSampleSet s;
  s.n_units = 1;
  s.by_interval.resize(1);
  for (double v : vals) {
    Eigen::VectorXd e(1);
    e << v;
    s.by_interval[0].push_back(e);
  }
  return s;
}

}  // namespace

TEST_CASE("safety factors match their closed forms") {
  CHECK(lambda_factor(AmbiguitySet::unimodal, 1.0 / 9.0) == Catch::Approx(2.0).epsilon(1e-12));
  CHECK(lambda_factor(AmbiguitySet::symmetric, 0.02) == Catch::Approx(5.0).epsilon(1e-12));
  CHECK(lambda_factor(AmbiguitySet::unimodal_symmetric, 2.0 / 81.0) ==
        Catch::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("safety factor domains are enforced") {
  CHECK_THROWS_AS(lambda_factor(AmbiguitySet::unimodal, 1.0 / 3.0), config_error);
  CHECK_THROWS_AS(lambda_factor(AmbiguitySet::symmetric, 0.5), config_error);
  CHECK_THROWS_AS(lambda_factor(AmbiguitySet::unimodal_symmetric, 0.2), config_error);
  CHECK_THROWS_AS(lambda_factor(AmbiguitySet::unimodal, 0.0), config_error);
  CHECK_THROWS_AS(lambda_factor(AmbiguitySet::unimodal, -0.1), config_error);
  CHECK_NOTHROW(lambda_factor(AmbiguitySet::symmetric, 0.499));
  try {
    lambda_factor(AmbiguitySet::unimodal_symmetric, 0.9);
  } catch (const config_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("unimodal_symmetric") != std::string::npos);
    CHECK(msg.find("0.16") != std::string::npos);  // names the valid interval
  }
}

TEST_CASE("safety factor ordering and monotonicity on a grid") {
  double prev1 = 1e300, prev2 = 1e300, prev3 = 1e300;
  for (int i = 1; i <= 1000; ++i) {
    const double eps = (1.0 / 6.0) * i / 1001.0;
    const double l1 = lambda_factor(AmbiguitySet::unimodal, eps);
    const double l2 = lambda_factor(AmbiguitySet::symmetric, eps);
    const double l3 = lambda_factor(AmbiguitySet::unimodal_symmetric, eps);
    REQUIRE(l2 > l1);
    REQUIRE(l1 > l3);
    REQUIRE(l1 < prev1);
    REQUIRE(l2 < prev2);
    REQUIRE(l3 < prev3);
    prev1 = l1;
    prev2 = l2;
    prev3 = l3;
  }
}

TEST_CASE("two point sample moments") {
  auto m = estimate_moments(one_bus_samples({1.0, -1.0}));
  CHECK(m.interval[0].mean[0] == Catch::Approx(0.0).margin(1e-15));
  CHECK(m.interval[0].covariance(0, 0) == Catch::Approx(2.0));  // N-1 denominator
  CHECK(m.interval[0].sigma_total == Catch::Approx(std::sqrt(2.0)));
}

TEST_CASE("identical samples give zero variance") {
  auto m = estimate_moments(one_bus_samples({3.25, 3.25, 3.25}));
  CHECK(m.interval[0].mean[0] == Catch::Approx(3.25));
  CHECK(m.interval[0].covariance(0, 0) == Catch::Approx(0.0).margin(1e-15));
  CHECK(m.interval[0].is_degenerate(1e-12));
  CHECK(m.interval[0].mean_total == Catch::Approx(3.25));
}

TEST_CASE("full correlation with equal sigmas gives a rank one covariance") {
  ErrorSampleSet s;
  s.n_units = 2;
  s.by_interval.resize(1);
  for (double v : {1.0, -1.0, 0.5, -0.5}) {
    Eigen::VectorXd e(2);
    e << v, -v;  // equal per-unit variance
    s.by_interval[0].push_back(e);
  }
  auto m = estimate_moments(s, 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.interval[0].covariance);
  CHECK(es.eigenvalues()[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(es.eigenvalues()[1] > 0.1);
  // the symmetric square root reproduces the covariance
  CHECK((m.interval[0].cov_sqrt * m.interval[0].cov_sqrt - m.interval[0].covariance)
            .lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("zero correlation keeps the covariance diagonal") {
  ErrorSampleSet s;
  s.n_units = 2;
  s.by_interval.resize(1);
  for (double v : {1.0, -1.0, 2.0, -2.0}) {
    Eigen::VectorXd e(2);
    e << v, 0.5 * v;
    s.by_interval[0].push_back(e);
  }
  auto m = estimate_moments(s, 0.0);
  CHECK(m.interval[0].covariance(0, 1) == Catch::Approx(0.0).margin(1e-15));
  CHECK(m.interval[0].covariance(1, 0) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("degenerate sample sets are rejected") {
  CHECK_THROWS_AS(estimate_moments(one_bus_samples({1.0})), data_error);
  auto s = one_bus_samples({1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(estimate_moments(s), data_error);
  CHECK_THROWS_AS(estimate_moments(one_bus_samples({1.0, -1.0}), 2.0), data_error);
}

TEST_CASE("an indefinite correlation pattern is refused") {
  // three units, pairwise correlation -1 cannot come from any distribution
  ErrorSampleSet s;
  s.n_units = 3;
  s.by_interval.resize(1);
  for (double v : {1.0, -1.0, 0.3, -0.3}) {
    Eigen::VectorXd e(3);
    e << v, 2 * v, -v;
    s.by_interval[0].push_back(e);
  }
  CHECK_THROWS_AS(estimate_moments(s, -1.0), data_error);
}

TEST_CASE("scenario sample bounds") {
  CHECK(scenario_sample_bound(0.05, 0.01, 10) == 585);
  CHECK(scenario_sample_bound(0.01, 0.05, 50) == 10600);
  CHECK(scenario_sample_bound(0.8, std::exp(-1.0), 1) == 5);  // ceil(4 / 0.8)
  CHECK_THROWS_AS(scenario_sample_bound(0.0, 0.01, 10), config_error);
  CHECK_THROWS_AS(scenario_sample_bound(0.05, 1.0, 10), config_error);
  CHECK_THROWS_AS(scenario_sample_bound(0.05, 0.01, 0), config_error);
}

TEST_CASE("synthetic errors are reproducible and zero when the envelope is zero") {
  Eigen::MatrixXd env = Eigen::MatrixXd::Zero(4, 2);
  auto z = generate_synthetic_errors(env, NoiseFamily::gaussian, 42, 8);
  for (const auto& iv : z.by_interval)
    for (const auto& v : iv) CHECK(v.lpNorm<Eigen::Infinity>() == 0.0);

  env.setConstant(0.7);
  auto a = generate_synthetic_errors(env, NoiseFamily::laplace, 42, 16);
  auto b = generate_synthetic_errors(env, NoiseFamily::laplace, 42, 16);
  auto c = generate_synthetic_errors(env, NoiseFamily::laplace, 43, 16);
  bool identical = true, differs = false;
  for (int t = 0; t < 4; ++t)
    for (int k = 0; k < 16; ++k) {
      identical = identical && a.by_interval[t][k] == b.by_interval[t][k];
      differs = differs || a.by_interval[t][k] != c.by_interval[t][k];
    }
  CHECK(identical);
  CHECK(differs);
}

TEST_CASE("synthetic families hit the requested scale") {
  Eigen::MatrixXd env = Eigen::MatrixXd::Constant(1, 1, 1.0);
  for (auto fam : {NoiseFamily::gaussian, NoiseFamily::laplace, NoiseFamily::triangular,
                   NoiseFamily::mixture}) {
    auto s = generate_synthetic_errors(env, fam, 7, 100000);
    auto m = estimate_moments(s);
    CAPTURE(to_string(fam));
    CHECK(std::abs(m.interval[0].mean[0]) < 0.02);
    CHECK(m.interval[0].stddev[0] == Catch::Approx(1.0).epsilon(0.01));
  }
}

TEST_CASE("moment estimates converge with sample count") {
  Eigen::MatrixXd env = Eigen::MatrixXd::Constant(1, 1, 2.0);
  auto small = estimate_moments(generate_synthetic_errors(env, NoiseFamily::gaussian, 3, 100));
  auto large = estimate_moments(generate_synthetic_errors(env, NoiseFamily::gaussian, 3, 10000));
  const double err_small = std::abs(small.interval[0].stddev[0] - 2.0);
  const double err_large = std::abs(large.interval[0].stddev[0] - 2.0);
  CHECK(err_large < err_small);
}

TEST_CASE("clipping bounds the draws") {
  Eigen::MatrixXd env = Eigen::MatrixXd::Constant(1, 1, 1.0);
  auto s = generate_synthetic_errors(env, NoiseFamily::gaussian, 11, 20000, 1.5);
  double mx = 0;
  for (const auto& v : s.by_interval[0]) mx = std::max(mx, v.lpNorm<Eigen::Infinity>());
  CHECK(mx <= 1.5 + 1e-12);
}

TEST_CASE("set and family names round trip") {
  for (auto s : {AmbiguitySet::unimodal, AmbiguitySet::symmetric,
                 AmbiguitySet::unimodal_symmetric})
    CHECK(parse_ambiguity_set(to_string(s)) == s);
  CHECK_THROWS_AS(parse_ambiguity_set("gauss"), config_error);
  for (auto f : {NoiseFamily::gaussian, NoiseFamily::laplace, NoiseFamily::triangular,
                 NoiseFamily::mixture})
    CHECK(parse_noise_family(to_string(f)) == f);
  CHECK_THROWS_AS(parse_noise_family("cauchy"), config_error);
}
