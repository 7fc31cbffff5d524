#pragma once

/// Evolutionary search over the per-family violation budgets.
///
/// The search walks the scaled simplex { eps >= floor, sum(eps) = eps_joint }
/// looking for the split with the cheapest robust schedule.  It is a small
/// (mu+lambda) scheme: keep the better half, breed by averaging random pairs,
/// mutate by adding one-sided normal noise and renormalizing.  The equal
/// split is injected into the initial population so the result can never be
/// worse than that baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mgdr/conic/solver.hpp"
#include "mgdr/drjcc.hpp"
#include "mgdr/uncertainty.hpp"
#include "mgdr/util.hpp"

namespace mgdr {
namespace evo {

using Rates = std::array<double, drjcc::n_families>;

/// Cost of one candidate split; +inf marks an infeasible candidate.
using FitnessFn = std::function<double(const Rates&)>;

struct EvoConfig {
  int population = 6;   // even, >= 2
  int max_iterations = 10;  // generations after the initial evaluation
  double mutation_sigma = 0.1;
  double convergence_ratio = 0.02;  // stop when max/mean - 1 drops below this
  double eps_floor = 1e-3;
  double eps_cap = -1.0;  // <= 0: joint budget (then the ambiguity domain caps it)
  int restarts = 10;
  std::uint64_t seed = 2024;
  int threads = 1;
  bool inject_baseline = true;  // seed one individual at the equal split

  void validate() const {
    if (population < 2 || population % 2 != 0)
      throw config_error("population size must be even and at least 2");
    if (max_iterations < 1) throw config_error("need at least one iteration");
    if (!(mutation_sigma > 0.0)) throw config_error("mutation sigma must be positive");
    if (!(convergence_ratio > 0.0)) throw config_error("convergence threshold must be positive");
    if (!(eps_floor > 0.0)) throw config_error("rate floor must be positive");
    if (restarts < 1) throw config_error("need at least one restart");
    if (threads < 1) throw config_error("thread count must be positive");
  }
};

struct HistoryRow {
  int iteration = 0;
  double best_cost = 0.0;
  double mean_cost = 0.0;
  double r_ratio = 0.0;  // max/mean - 1 of the population this iteration
};

struct RestartResult {
  Rates rates{};
  double cost = std::numeric_limits<double>::infinity();
  std::vector<HistoryRow> history;
  int generations = 0;
  bool converged = false;
};

struct EvoResult {
  Rates best_rates{};
  double best_cost = std::numeric_limits<double>::infinity();
  double baseline_cost = std::numeric_limits<double>::quiet_NaN();  // equal split, if injected
  std::vector<HistoryRow> history;  // history of the winning restart
  std::vector<RestartResult> restarts;
  bool agreement = true;  // all restarts within 1% of the best cost
  double spread = 0.0;    // worst relative deviation across restarts
};

/// `iteration,best_cost,mean_cost,r_ratio` rows for convergence plots.
inline void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << "iteration,best_cost,mean_cost,r_ratio\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", r.iteration, r.best_cost,
                  r.mean_cost, r.r_ratio);
    os << buf;
  }
}

namespace detail {

using mgdr::detail::normal01;
using mgdr::detail::uniform01;

/// Clamp every coordinate into [floor, cap] and move the clipped mass onto
/// the other coordinates in proportion to their remaining slack, keeping the
/// sum at `total`.  Returns false when the box cannot absorb the mass.
inline bool clip_redistribute(Rates& x, double floor_v, double cap, double total) {
  for (int pass = 0; pass < 20; ++pass) {
    double sum = 0.0;
    for (double& v : x) {
      v = std::min(std::max(v, floor_v), cap);
      sum += v;
    }
    const double diff = total - sum;  // > 0: must add mass, < 0: must remove
    if (std::abs(diff) <= 1e-14 * std::max(1.0, std::abs(total))) return true;
    double room = 0.0;
    for (double v : x) room += diff > 0.0 ? cap - v : v - floor_v;
    if (room <= 0.0) return false;
    if (room + 1e-15 < std::abs(diff)) return false;
    for (double& v : x) {
      const double slack = diff > 0.0 ? cap - v : v - floor_v;
      v += diff * slack / room;
    }
  }
  double check = 0.0;
  for (double v : x) check += v;
  return std::abs(check - total) <= 1e-12 * std::max(1.0, std::abs(total));
}

/// Uniform draw from { x >= floor, sum x = total } (flat Dirichlet on the
/// shifted simplex), then boxed by `cap` with proportional redistribution.
inline Rates sample_simplex(std::uint64_t& state, double total, double floor_v, double cap) {
  Rates w{};
  double sum = 0.0;
  for (double& v : w) {
    double u = uniform01(state);
    while (u <= 0.0) u = uniform01(state);
    v = -std::log(u);
    sum += v;
  }
  Rates x{};
  const double spare = total - drjcc::n_families * floor_v;
  for (int k = 0; k < drjcc::n_families; ++k) x[k] = floor_v + spare * w[k] / sum;
  if (!clip_redistribute(x, floor_v, cap, total))
    throw config_error("violation budget box cannot hold the joint budget");
  return x;
}

/// Indices of the `k` lowest fitnesses; stable in the original order on ties.
inline std::vector<int> elite_indices(const std::vector<double>& fitness, int k) {
  std::vector<int> idx(fitness.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return fitness[static_cast<std::size_t>(a)] < fitness[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

}  // namespace detail

/// Coordinate-wise mean of two budget splits.
inline Rates crossover(const Rates& a, const Rates& b) {
  Rates c{};
  for (int k = 0; k < drjcc::n_families; ++k) c[k] = 0.5 * (a[k] + b[k]);
  return c;
}

/// Population spread ratio max/mean - 1; +inf when any fitness is +inf.
inline double convergence_ratio(const std::vector<double>& fitness) {
  double mx = -std::numeric_limits<double>::infinity();
  double mean = 0.0;
  for (double f : fitness) {
    if (std::isinf(f)) return std::numeric_limits<double>::infinity();
    mx = std::max(mx, f);
    mean += f;
  }
  mean /= static_cast<double>(fitness.size());
  if (mean == 0.0) return mx == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return mx / mean - 1.0;
}

inline bool converged(const std::vector<double>& fitness, double r_thr) {
  return convergence_ratio(fitness) <= r_thr;
}

/// One-sided normal mutation.  Skipped entirely unless the parents differed;
/// otherwise adds max(theta, 0) per coordinate, rescales the sum back to
/// `total`, and re-boxes.  Falls back to the unmutated offspring if the box
/// cannot absorb the result.
inline Rates mutate(const Rates& x, double total, double floor_v, double cap, double sigma,
                    bool parents_distinct, std::uint64_t& state) {
  if (!parents_distinct) return x;
  Rates y = x;
  double sum = 0.0;
  for (double& v : y) {
    v += std::max(detail::normal01(state) * sigma, 0.0);
    sum += v;
  }
  if (sum <= 0.0) return x;
  for (double& v : y) v *= total / sum;
  if (!detail::clip_redistribute(y, floor_v, cap, total)) return x;
  return y;
}

namespace detail {

struct FitnessCache {
  std::map<Rates, double> values;

  bool has(const Rates& r) const { return values.count(r) != 0; }
  double get(const Rates& r) const { return values.at(r); }
};

/// Evaluate every uncached distinct candidate once; results are merged in a
/// fixed order so the outcome is identical for any thread count.
inline void evaluate_batch(const std::vector<Rates>& pop, const FitnessFn& fn,
                           FitnessCache& cache, int threads) {
  std::vector<Rates> todo;
  for (const auto& r : pop)
    if (!cache.has(r) && std::find(todo.begin(), todo.end(), r) == todo.end())
      todo.push_back(r);
  if (todo.empty()) return;
  std::vector<double> out(todo.size(), 0.0);
  std::vector<std::exception_ptr> errs(todo.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      try {
        out[i] = fn(todo[i]);
        if (std::isnan(out[i])) throw data_error("fitness evaluation returned NaN");
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  };
  const int nt = std::min<int>(threads, static_cast<int>(todo.size()));
  if (nt <= 1) {
    work(0, todo.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (todo.size() + static_cast<std::size_t>(nt) - 1) /
                              static_cast<std::size_t>(nt);
    for (int t = 0; t < nt; ++t) {
      const std::size_t b = static_cast<std::size_t>(t) * chunk;
      const std::size_t e = std::min(todo.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < todo.size(); ++i) {
    if (errs[i]) {
      try {
        std::rethrow_exception(errs[i]);
      } catch (const std::exception& e) {
        std::ostringstream os;
        os << "fitness evaluation failed for candidate " << i << ": " << e.what();
        throw data_error(os.str());
      }
    }
    cache.values[todo[i]] = out[i];
  }
}

inline RestartResult run_once(const FitnessFn& fn, double eps_joint, double floor_v, double cap,
                              const EvoConfig& cfg, std::uint64_t run_seed, FitnessCache& cache) {
  std::uint64_t state = run_seed;
  const int np = cfg.population;
  const int elite_n = np / 2;

  std::vector<Rates> pop;
  pop.reserve(static_cast<std::size_t>(np));
  if (cfg.inject_baseline) {
    Rates base{};
    base.fill(eps_joint / drjcc::n_families);
    if (!clip_redistribute(base, floor_v, cap, eps_joint))
      throw config_error("violation budget box cannot hold the joint budget");
    pop.push_back(base);
  }
  while (static_cast<int>(pop.size()) < np)
    pop.push_back(sample_simplex(state, eps_joint, floor_v, cap));

  evaluate_batch(pop, fn, cache, cfg.threads);
  std::vector<double> fit(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = cache.get(pop[i]);
  bool any_finite = false;
  for (double f : fit) any_finite |= std::isfinite(f);
  if (!any_finite)
    throw data_error("every initial candidate split is infeasible; widen the budget or the box");

  RestartResult rr;
  auto record = [&](int it) {
    HistoryRow row;
    row.iteration = it;
    row.best_cost = *std::min_element(fit.begin(), fit.end());
    double mean = 0.0;
    for (double f : fit) mean += f;
    row.mean_cost = mean / static_cast<double>(fit.size());
    row.r_ratio = convergence_ratio(fit);
    rr.history.push_back(row);
  };
  record(0);

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (converged(fit, cfg.convergence_ratio)) {
      rr.converged = true;
      break;
    }
    const auto elite = elite_indices(fit, elite_n);
    std::vector<Rates> next;
    next.reserve(static_cast<std::size_t>(np));
    for (int e : elite) next.push_back(pop[static_cast<std::size_t>(e)]);
    const int n_children = np - elite_n;
    for (int childn = 0; childn < n_children; ++childn) {
      int ia = 0, ib = 0;
      if (elite_n >= 2) {
        ia = static_cast<int>(uniform01(state) * elite_n) % elite_n;
        ib = static_cast<int>(uniform01(state) * (elite_n - 1)) % (elite_n - 1);
        if (ib >= ia) ++ib;  // two distinct elite slots
      }
      const Rates& pa = pop[static_cast<std::size_t>(elite[static_cast<std::size_t>(ia)])];
      const Rates& pb = pop[static_cast<std::size_t>(elite[static_cast<std::size_t>(ib)])];
      Rates child = crossover(pa, pb);
      child = mutate(child, eps_joint, floor_v, cap, cfg.mutation_sigma, pa != pb, state);
      next.push_back(child);
    }
    evaluate_batch(next, fn, cache, cfg.threads);
    pop = std::move(next);
    fit.resize(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = cache.get(pop[i]);
    record(it);
    rr.generations = it;
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < pop.size(); ++i)
    if (fit[i] < fit[best]) best = i;
  rr.rates = pop[best];
  rr.cost = fit[best];
  return rr;
}

}  // namespace detail

/// Full multi-restart search.  `fn` must be a pure function of the rates.
inline EvoResult optimize_rates(const FitnessFn& fn, double eps_joint, unc::AmbiguitySet set,
                                const EvoConfig& cfg = {}) {
  cfg.validate();
  if (!(eps_joint > 0.0) || eps_joint >= 1.0)
    throw config_error("joint violation budget must lie in (0, 1)");
  const double floor_v = cfg.eps_floor;
  double cap = cfg.eps_cap > 0.0 ? cfg.eps_cap : eps_joint;
  cap = std::min(cap, unc::domain_sup(set) * (1.0 - 1e-9));
  if (cap < floor_v) throw config_error("rate cap is below the rate floor");
  if (drjcc::n_families * floor_v > eps_joint + 1e-15)
    throw config_error("joint budget too small: the per-family floors already exceed it");
  if (drjcc::n_families * cap < eps_joint - 1e-15)
    throw config_error("joint budget too large for the per-family caps");

  detail::FitnessCache cache;
  EvoResult out;
  for (int r = 0; r < cfg.restarts; ++r) {
    auto rr = detail::run_once(fn, eps_joint, floor_v, cap, cfg, child_seed(cfg.seed, r), cache);
    out.restarts.push_back(std::move(rr));
  }
  std::size_t win = 0;
  for (std::size_t i = 1; i < out.restarts.size(); ++i)
    if (out.restarts[i].cost < out.restarts[win].cost) win = i;
  out.best_rates = out.restarts[win].rates;
  out.best_cost = out.restarts[win].cost;
  out.history = out.restarts[win].history;
  if (cfg.inject_baseline) {
    Rates base{};
    base.fill(eps_joint / drjcc::n_families);
    detail::clip_redistribute(base, floor_v, cap, eps_joint);
    if (cache.has(base)) out.baseline_cost = cache.get(base);
  }
  const double scale = std::max(std::abs(out.best_cost), 1e-12);
  for (const auto& rr : out.restarts)
    out.spread = std::max(out.spread, (rr.cost - out.best_cost) / scale);
  out.agreement = out.spread <= 0.01;
  return out;
}

/// Convenience wrapper: fitness = robust schedule cost on the given case.
inline EvoResult optimize_rates(const opf::CaseDef& c, const opf::HorizonData& h,
                                const unc::ErrorMoments& moments, unc::AmbiguitySet set,
                                double eps_joint, const EvoConfig& cfg = {},
                                const opf::OpfOptions& opt = {},
                                const conic::SolveOptions& so = {}) {
  FitnessFn fn = [&](const Rates& r) {
    return drjcc::solve_robust(c, h, moments, set,
                               drjcc::custom_rates(r, eps_joint, cfg.eps_floor), opt, so)
        .cost;
  };
  return optimize_rates(fn, eps_joint, set, cfg);
}

}  // namespace evo
}  // namespace mgdr
