#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "mgdr/util.hpp"

namespace mgdr::net {

/// A resistive branch between two buses.
struct Line {
  int from = 0;
  int to = 0;
  double resistance_ohm = 0.0;
};

/// Which bus each asset sits on. Entry k of a schedule vector refers to the
/// k-th asset of its kind.
struct AssetMap {
  std::vector<int> grid_bus;
  std::vector<int> storage_bus;
  std::vector<int> pv_bus;
  std::vector<int> load_bus;
};

/// Resistive DC network with a linearized voltage model around the flat
/// operating point (all buses at the nominal voltage, zero branch current).
///
/// Per-unit system: impedance base 1 ohm, so the power base is
/// v_base^2 / 1000 kW and conductances keep their numeric value in siemens.
class Network {
 public:
  Network(int n_bus, int slack_bus, std::vector<Line> lines, double v_base_volts = 48.0)
      : n_(n_bus), slack_(slack_bus), v_base_(v_base_volts), lines_(std::move(lines)) {
    if (n_ < 2) throw data_error("network needs at least two buses");
    if (slack_ < 0 || slack_ >= n_) throw data_error("slack bus out of range");
    if (v_base_ <= 0) throw data_error("voltage base must be positive");
    laplacian_ = Eigen::MatrixXd::Zero(n_, n_);
    for (const auto& ln : lines_) {
      if (ln.from < 0 || ln.from >= n_ || ln.to < 0 || ln.to >= n_)
        throw data_error("line endpoint out of range");
      if (ln.from == ln.to) throw data_error("line connects a bus to itself");
      if (!(ln.resistance_ohm > 0)) throw data_error("line resistance must be positive");
      const double g = 1.0 / ln.resistance_ohm;  // p.u. with 1 ohm base
      laplacian_(ln.from, ln.from) += g;
      laplacian_(ln.to, ln.to) += g;
      laplacian_(ln.from, ln.to) -= g;
      laplacian_(ln.to, ln.from) -= g;
    }
    check_connected();

    non_slack_.reserve(static_cast<std::size_t>(n_ - 1));
    red_index_.assign(static_cast<std::size_t>(n_), -1);
    for (int b = 0; b < n_; ++b) {
      if (b == slack_) continue;
      red_index_[static_cast<std::size_t>(b)] = static_cast<int>(non_slack_.size());
      non_slack_.push_back(b);
    }
    const int r = n_ - 1;
    Eigen::MatrixXd lred(r, r);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < r; ++j) lred(i, j) = laplacian_(non_slack_[static_cast<std::size_t>(i)],
                                                          non_slack_[static_cast<std::size_t>(j)]);
    vsens_ = lred.inverse();
  }

  int n_bus() const { return n_; }
  int slack() const { return slack_; }
  double v_base() const { return v_base_; }
  double s_base_kw() const { return v_base_ * v_base_ / 1000.0; }
  const std::vector<Line>& lines() const { return lines_; }
  const Eigen::MatrixXd& laplacian() const { return laplacian_; }

  /// d v_red / d p_red in per-unit; row/column order follows non_slack().
  const Eigen::MatrixXd& voltage_sensitivity() const { return vsens_; }
  const std::vector<int>& non_slack() const { return non_slack_; }
  /// Reduced row of a bus, -1 for the slack.
  int reduced_index(int bus) const { return red_index_[static_cast<std::size_t>(bus)]; }

  /// Bus voltages (p.u.) for net injections in kW (slack entry ignored).
  Eigen::VectorXd voltages(const Eigen::VectorXd& p_inj_kw, double v_slack = 1.0) const {
    if (p_inj_kw.size() != n_) throw data_error("injection vector size mismatch");
    Eigen::VectorXd v = Eigen::VectorXd::Constant(n_, v_slack);
    Eigen::VectorXd pred(n_ - 1);
    for (int i = 0; i < n_ - 1; ++i)
      pred[i] = p_inj_kw[non_slack_[static_cast<std::size_t>(i)]] / s_base_kw();
    Eigen::VectorXd dv = vsens_ * pred;
    for (int i = 0; i < n_ - 1; ++i) v[non_slack_[static_cast<std::size_t>(i)]] += dv[i];
    return v;
  }

 private:
  void check_connected() const {
    std::vector<char> seen(static_cast<std::size_t>(n_), 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    while (!stack.empty()) {
      const int b = stack.back();
      stack.pop_back();
      for (const auto& ln : lines_) {
        const int other = ln.from == b ? ln.to : (ln.to == b ? ln.from : -1);
        if (other >= 0 && !seen[static_cast<std::size_t>(other)]) {
          seen[static_cast<std::size_t>(other)] = 1;
          stack.push_back(other);
        }
      }
    }
    for (int b = 0; b < n_; ++b)
      if (!seen[static_cast<std::size_t>(b)])
        throw data_error("network is not connected (bus " + std::to_string(b) + " unreachable)");
  }

  int n_, slack_;
  double v_base_;
  std::vector<Line> lines_;
  Eigen::MatrixXd laplacian_;
  Eigen::MatrixXd vsens_;
  std::vector<int> non_slack_;
  std::vector<int> red_index_;
};

/// Net bus injections (kW) for one interval. Storage units jointly absorb a
/// renewable shortfall: unit k adds response_coef[k] * max(sum(pv_error), 0)
/// on top of its scheduled discharge, while a renewable surplus flows to the
/// slack unchanged.
inline Eigen::VectorXd injected_power(const AssetMap& assets, int n_bus,
                                      const Eigen::VectorXd& p_grid,
                                      const Eigen::VectorXd& p_discharge,
                                      const Eigen::VectorXd& p_charge,
                                      const Eigen::VectorXd& response_coef,
                                      const Eigen::VectorXd& p_pv_sched,
                                      const Eigen::VectorXd& pv_error,
                                      const Eigen::VectorXd& p_load) {
  const auto ng = static_cast<Eigen::Index>(assets.grid_bus.size());
  const auto ns = static_cast<Eigen::Index>(assets.storage_bus.size());
  const auto np = static_cast<Eigen::Index>(assets.pv_bus.size());
  const auto nl = static_cast<Eigen::Index>(assets.load_bus.size());
  if (p_grid.size() != ng || p_discharge.size() != ns || p_charge.size() != ns ||
      response_coef.size() != ns || p_pv_sched.size() != np || pv_error.size() != np ||
      p_load.size() != nl)
    throw data_error("injected_power: vector size mismatch with asset map");

  Eigen::VectorXd inj = Eigen::VectorXd::Zero(n_bus);
  const double shortfall = std::max(pv_error.sum(), 0.0);
  for (Eigen::Index k = 0; k < ng; ++k) inj[assets.grid_bus[static_cast<std::size_t>(k)]] += p_grid[k];
  for (Eigen::Index k = 0; k < ns; ++k)
    inj[assets.storage_bus[static_cast<std::size_t>(k)]] +=
        p_discharge[k] - p_charge[k] + response_coef[k] * shortfall;
  for (Eigen::Index k = 0; k < np; ++k)
    inj[assets.pv_bus[static_cast<std::size_t>(k)]] += p_pv_sched[k] - pv_error[k];
  for (Eigen::Index k = 0; k < nl; ++k) inj[assets.load_bus[static_cast<std::size_t>(k)]] -= p_load[k];
  return inj;
}

}  // namespace mgdr::net
