#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "mgdr/util.hpp"

namespace mgdr::unc {

/// Moment-based ambiguity sets for the forecast error distribution. Each set
/// admits a closed-form safety factor lambda(eps) that turns a chance
/// constraint into a second-order cone constraint; the factor is valid only
/// on an open risk-level domain.
enum class AmbiguitySet { unimodal, symmetric, unimodal_symmetric };

inline const char* to_string(AmbiguitySet s) {
  switch (s) {
    case AmbiguitySet::unimodal: return "unimodal";
    case AmbiguitySet::symmetric: return "symmetric";
    default: return "unimodal_symmetric";
  }
}

inline AmbiguitySet parse_ambiguity_set(const std::string& name) {
  if (name == "unimodal") return AmbiguitySet::unimodal;
  if (name == "symmetric") return AmbiguitySet::symmetric;
  if (name == "unimodal_symmetric") return AmbiguitySet::unimodal_symmetric;
  throw config_error("unknown ambiguity set '" + name +
                     "' (expected unimodal, symmetric or unimodal_symmetric)");
}

/// Supremum of the admissible risk-level domain (0, sup).
inline double domain_sup(AmbiguitySet s) {
  switch (s) {
    case AmbiguitySet::unimodal: return 1.0 / 3.0;
    case AmbiguitySet::symmetric: return 1.0 / 2.0;
    default: return 1.0 / 6.0;
  }
}

/// Safety factor lambda(eps) scaling the standard deviation of an affine
/// error functional in the robust SOC reformulation.
inline double lambda_factor(AmbiguitySet s, double eps) {
  const double sup = domain_sup(s);
  if (!(eps > 0.0) || !(eps < sup))
    throw config_error(std::string("risk level ") + std::to_string(eps) + " outside (0, " +
                       std::to_string(sup) + ") for the " + to_string(s) + " set");
  switch (s) {
    case AmbiguitySet::unimodal: return (2.0 / 3.0) * std::sqrt(1.0 / eps);
    case AmbiguitySet::symmetric: return std::sqrt(1.0 / (2.0 * eps));
    default: return std::sqrt(2.0 / (9.0 * eps));
  }
}

/// Samples needed by scenario programs for risk eps, confidence 1 - beta and
/// n decision variables: ceil((2/eps) (ln(1/beta) + n)).
inline long scenario_sample_bound(double eps, double beta, int n_decision) {
  if (!(eps > 0.0 && eps < 1.0)) throw config_error("risk level must lie in (0,1)");
  if (!(beta > 0.0 && beta < 1.0)) throw config_error("confidence level must lie in (0,1)");
  if (n_decision < 1) throw config_error("need at least one decision variable");
  return static_cast<long>(std::ceil((2.0 / eps) * (std::log(1.0 / beta) + n_decision)));
}

/// Forecast-error samples: by_interval[t][k] is the per-unit error vector
/// (kW) of sample k at interval t.
struct ErrorSampleSet {
  int n_units = 0;
  std::vector<std::vector<Eigen::VectorXd>> by_interval;

  int n_intervals() const { return static_cast<int>(by_interval.size()); }
};

struct IntervalMoments {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd cov_sqrt;  // symmetric PSD square root
  double mean_total = 0.0;   // 1' mean
  double sigma_total = 0.0;  // sqrt(1' covariance 1)

  bool is_degenerate(double tol = 1e-12) const {
    return covariance.lpNorm<Eigen::Infinity>() <= tol;
  }
};

struct ErrorMoments {
  int n_units = 0;
  std::vector<IntervalMoments> interval;

  int n_intervals() const { return static_cast<int>(interval.size()); }
};

namespace detail {

inline Eigen::MatrixXd psd_repair(const Eigen::MatrixXd& m, Eigen::MatrixXd* sqrt_out) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  Eigen::VectorXd ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-10 * scale)
      throw data_error("covariance matrix is not positive semidefinite (eigenvalue " +
                       std::to_string(ev[i]) + ")");
    if (ev[i] < 0) ev[i] = 0;
  }
  if (sqrt_out)
    *sqrt_out = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Per-interval empirical moments. The per-unit variance uses the N-1
/// denominator; cross-unit covariance is assembled from the supplied
/// correlation (identical for every pair by default, units are independent).
inline ErrorMoments estimate_moments(const ErrorSampleSet& samples, double correlation = 0.0) {
  if (samples.n_units < 1) throw data_error("sample set has no units");
  if (!(correlation >= -1.0 && correlation <= 1.0))
    throw data_error("correlation outside [-1, 1]");
  ErrorMoments out;
  out.n_units = samples.n_units;
  out.interval.resize(samples.by_interval.size());
  const int np = samples.n_units;
  for (std::size_t t = 0; t < samples.by_interval.size(); ++t) {
    const auto& rows = samples.by_interval[t];
    const auto N = static_cast<Eigen::Index>(rows.size());
    if (N < 2)
      throw data_error("interval " + std::to_string(t) + " has " + std::to_string(N) +
                       " samples; at least 2 required");
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(np);
    for (const auto& v : rows) {
      if (v.size() != np) throw data_error("sample dimension mismatch");
      if (!v.allFinite()) throw data_error("non-finite forecast-error sample");
      mu += v;
    }
    mu /= static_cast<double>(N);
    Eigen::VectorXd var = Eigen::VectorXd::Zero(np);
    for (const auto& v : rows) var += (v - mu).cwiseAbs2();
    var /= static_cast<double>(N - 1);
    Eigen::VectorXd sd = var.cwiseSqrt();

    Eigen::MatrixXd cov(np, np);
    for (int a = 0; a < np; ++a)
      for (int b = 0; b < np; ++b) cov(a, b) = (a == b) ? var[a] : correlation * sd[a] * sd[b];

    auto& m = out.interval[t];
    m.mean = mu;
    m.stddev = sd;
    m.covariance = detail::psd_repair(cov, &m.cov_sqrt);
    m.mean_total = mu.sum();
    m.sigma_total = std::sqrt(std::max(0.0, m.covariance.sum()));
  }
  return out;
}

/// Zero-uncertainty moments (every interval degenerate), useful as the
/// deterministic limit of the robust scheduler.
inline ErrorMoments zero_moments(int n_intervals, int n_units) {
  ErrorMoments out;
  out.n_units = n_units;
  out.interval.resize(static_cast<std::size_t>(n_intervals));
  for (auto& m : out.interval) {
    m.mean = Eigen::VectorXd::Zero(n_units);
    m.stddev = Eigen::VectorXd::Zero(n_units);
    m.covariance = Eigen::MatrixXd::Zero(n_units, n_units);
    m.cov_sqrt = Eigen::MatrixXd::Zero(n_units, n_units);
  }
  return out;
}

enum class NoiseFamily { gaussian, laplace, triangular, mixture };

inline const char* to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::gaussian: return "gaussian";
    case NoiseFamily::laplace: return "laplace";
    case NoiseFamily::triangular: return "triangular";
    default: return "mixture";
  }
}

inline NoiseFamily parse_noise_family(const std::string& name) {
  if (name == "gaussian") return NoiseFamily::gaussian;
  if (name == "laplace") return NoiseFamily::laplace;
  if (name == "triangular") return NoiseFamily::triangular;
  if (name == "mixture") return NoiseFamily::mixture;
  throw config_error("unknown noise family '" + name + "'");
}

/// Draw reproducible zero-mean error samples with the given per-interval,
/// per-unit standard deviation envelope (rows = intervals, cols = units).
/// gaussian, laplace and triangular are unimodal and symmetric; mixture is a
/// symmetric two-bump distribution that is not unimodal. clip_rel truncates
/// each draw to clip_rel standard deviations when finite.
inline ErrorSampleSet generate_synthetic_errors(
    const Eigen::MatrixXd& sigma_envelope, NoiseFamily family, std::uint64_t seed, int n_samples,
    double clip_rel = std::numeric_limits<double>::infinity()) {
  if (n_samples < 1) throw config_error("need at least one sample");
  const int T = static_cast<int>(sigma_envelope.rows());
  const int np = static_cast<int>(sigma_envelope.cols());
  ErrorSampleSet out;
  out.n_units = np;
  out.by_interval.assign(static_cast<std::size_t>(T), {});
  for (auto& v : out.by_interval) v.reserve(static_cast<std::size_t>(n_samples));

  for (int k = 0; k < n_samples; ++k) {
    std::mt19937_64 rng(child_seed(seed, static_cast<std::uint64_t>(k)));
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int t = 0; t < T; ++t) {
      Eigen::VectorXd row(np);
      for (int u = 0; u < np; ++u) {
        double x = 0.0;
        switch (family) {
          case NoiseFamily::gaussian:
            x = gauss(rng);
            break;
          case NoiseFamily::laplace: {
            const double v = unif(rng) - 0.5;
            x = -std::copysign(1.0, v) * std::log(1.0 - 2.0 * std::abs(v)) / std::sqrt(2.0);
            break;
          }
          case NoiseFamily::triangular:
            x = std::sqrt(6.0) * (unif(rng) + unif(rng) - 1.0);
            break;
          case NoiseFamily::mixture: {
            const double bump = unif(rng) < 0.5 ? -0.8 : 0.8;
            x = bump + 0.6 * gauss(rng);
            break;
          }
        }
        if (std::isfinite(clip_rel)) x = std::clamp(x, -clip_rel, clip_rel);
        row[u] = sigma_envelope(t, u) * x;
      }
      out.by_interval[static_cast<std::size_t>(t)].push_back(std::move(row));
    }
  }
  return out;
}

}  // namespace mgdr::unc
