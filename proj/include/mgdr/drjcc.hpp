#pragma once

/// Distributionally robust joint chance constraint (DR-JCC) layer.
///
/// Six scheduling constraint families are exposed to forecast error: reserve
/// adequacy, discharge headroom, charge headroom, state-of-charge depletion,
/// and the two voltage band edges.  This layer assigns each family an
/// individual violation budget, converts the budgets into safety factors for
/// the chosen ambiguity set, and assembles/solves the tightened program.

#include <algorithm>
#include <array>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "mgdr/opf.hpp"
#include "mgdr/uncertainty.hpp"
#include "mgdr/util.hpp"

namespace mgdr {
namespace drjcc {

inline constexpr int n_families = 6;

inline const char* family_name(int k) {
  static const char* names[n_families] = {"reserve adequacy",     "discharge headroom",
                                          "charge headroom",      "state-of-charge depletion",
                                          "voltage upper bound",  "voltage lower bound"};
  if (k < 0 || k >= n_families) throw config_error("family index out of range");
  return names[k];
}

/// Per-family violation budgets.
///
/// When `joint` is set the budgets cover a joint guarantee through the union
/// bound, so they must sum to at most `eps_joint`.  The single-constraint
/// variant instead runs every family at the full joint rate and is exempt
/// from the sum test (it guarantees each family separately, not jointly).
struct RateVector {
  std::array<double, n_families> eps{};
  double eps_joint = 0.0;
  double eps_lower = 1e-3;  // floor per family
  double eps_upper = 1.0;   // cap per family
  bool joint = true;

  double sum() const {
    double s = 0.0;
    for (double e : eps) s += e;
    return s;
  }
};

inline void validate_rates(const RateVector& r) {
  if (!std::isfinite(r.eps_joint) || r.eps_joint <= 0.0 || r.eps_joint >= 1.0)
    throw config_error("joint violation budget must lie in (0, 1)");
  for (int k = 0; k < n_families; ++k) {
    const double e = r.eps[static_cast<std::size_t>(k)];
    if (!std::isfinite(e) || e <= 0.0 || e >= 1.0)
      throw config_error(std::string(family_name(k)) + ": violation rate must lie in (0, 1)");
    if (e < r.eps_lower - 1e-12) {
      std::ostringstream os;
      os << family_name(k) << ": rate " << e << " is below the floor " << r.eps_lower;
      throw config_error(os.str());
    }
    if (e > r.eps_upper + 1e-12) {
      std::ostringstream os;
      os << family_name(k) << ": rate " << e << " exceeds the cap " << r.eps_upper;
      throw config_error(os.str());
    }
  }
  if (r.joint && r.sum() > r.eps_joint + 1e-12)
    throw config_error("family rates exceed the joint violation budget");
}

/// Equal split of the joint budget over the six families (union bound).
inline RateVector bonferroni_rates(double eps_joint, double eps_lower = 1e-3) {
  RateVector r;
  r.eps_joint = eps_joint;
  r.eps_lower = eps_lower;
  r.eps_upper = eps_joint;
  r.joint = true;
  r.eps.fill(eps_joint / n_families);
  validate_rates(r);
  return r;
}

/// Every family at the full rate; guarantees families one by one, not jointly.
inline RateVector scc_rates(double eps_joint, double eps_lower = 1e-3) {
  RateVector r;
  r.eps_joint = eps_joint;
  r.eps_lower = eps_lower;
  r.eps_upper = eps_joint;
  r.joint = false;
  r.eps.fill(eps_joint);
  validate_rates(r);
  return r;
}

/// Arbitrary joint split (e.g. produced by the evolutionary search).
inline RateVector custom_rates(const std::array<double, n_families>& eps, double eps_joint,
                               double eps_lower = 1e-3) {
  RateVector r;
  r.eps = eps;
  r.eps_joint = eps_joint;
  r.eps_lower = eps_lower;
  r.eps_upper = eps_joint;
  r.joint = true;
  validate_rates(r);
  return r;
}

/// Safety factor per family under the given ambiguity set.
/// Throws config_error naming the family whose rate falls outside the
/// set's admissible interval.
inline std::array<double, n_families> family_lambdas(const RateVector& r, unc::AmbiguitySet set) {
  std::array<double, n_families> lam{};
  for (int k = 0; k < n_families; ++k) {
    try {
      lam[static_cast<std::size_t>(k)] =
          unc::lambda_factor(set, r.eps[static_cast<std::size_t>(k)]);
    } catch (const config_error& e) {
      throw config_error(std::string(family_name(k)) + ": " + e.what());
    }
  }
  return lam;
}

/// Assemble the tightened scheduling program.  `moments` must outlive the
/// returned model (the model keeps a pointer for row interpretation).
inline opf::OpfModel tighten(const opf::CaseDef& c, const opf::HorizonData& h,
                             const unc::ErrorMoments& moments, unc::AmbiguitySet set,
                             const RateVector& rates, const opf::OpfOptions& opt = {}) {
  validate_rates(rates);
  opf::RobustTightening rt;
  rt.lambda = family_lambdas(rates, set);
  rt.moments = &moments;
  return opf::build_opf(c, h, opt, &rt);
}

/// Outcome of one robust solve.  On infeasibility `cost` is +inf (ready for
/// use as a fitness value) and `implicated` lists the blamed rows.
struct RobustResult {
  conic::SolveStatus status = conic::SolveStatus::numerical_failure;
  opf::Schedule schedule;
  double cost = std::numeric_limits<double>::infinity();
  std::vector<std::string> implicated;

  bool feasible() const { return status == conic::SolveStatus::optimal; }
};

inline RobustResult solve_robust(const opf::CaseDef& c, const opf::HorizonData& h,
                                 const unc::ErrorMoments& moments, unc::AmbiguitySet set,
                                 const RateVector& rates, const opf::OpfOptions& opt = {},
                                 const conic::SolveOptions& so = {}) {
  const opf::OpfModel m = tighten(c, h, moments, set, rates, opt);
  RobustResult out;
  try {
    out.schedule = opf::solve_schedule(m, so);
    out.status = conic::SolveStatus::optimal;
    out.cost = out.schedule.objective;
  } catch (const opf::infeasible_error& e) {
    out.status = conic::SolveStatus::infeasible;
    out.implicated = e.implicated_rows();
  }
  return out;
}

/// Risk handling policies selectable end to end.
enum class Method { deterministic, scc, bonferroni, evolutionary };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::deterministic: return "deterministic";
    case Method::scc: return "scc";
    case Method::bonferroni: return "bonferroni";
    default: return "evolutionary";
  }
}

inline Method parse_method(const std::string& s) {
  if (s == "deterministic") return Method::deterministic;
  if (s == "scc") return Method::scc;
  if (s == "bonferroni") return Method::bonferroni;
  if (s == "evolutionary") return Method::evolutionary;
  throw config_error("unknown method '" + s +
                     "' (expected deterministic, scc, bonferroni or evolutionary)");
}

}  // namespace drjcc
}  // namespace mgdr
