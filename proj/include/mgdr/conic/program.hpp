#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mgdr/util.hpp"

namespace mgdr::conic {

/// Lightweight variable handle into a Program.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Sparse affine expression  sum(coef_k * x_k) + constant.
class LinExpr {
 public:
  LinExpr() = default;
  LinExpr(double c) : constant_(c) {}  // NOLINT: implicit by design
  LinExpr(Var v) { terms_.emplace_back(v.id, 1.0); }

  LinExpr& operator+=(const LinExpr& o) {
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    constant_ += o.constant_;
    return *this;
  }
  LinExpr& operator-=(const LinExpr& o) {
    for (const auto& [v, c] : o.terms_) terms_.emplace_back(v, -c);
    constant_ -= o.constant_;
    return *this;
  }
  LinExpr& operator*=(double s) {
    for (auto& [v, c] : terms_) c *= s;
    constant_ *= s;
    return *this;
  }

  friend LinExpr operator+(LinExpr a, const LinExpr& b) { return a += b; }
  friend LinExpr operator-(LinExpr a, const LinExpr& b) { return a -= b; }
  friend LinExpr operator*(LinExpr a, double s) { return a *= s; }
  friend LinExpr operator*(double s, LinExpr a) { return a *= s; }
  friend LinExpr operator-(LinExpr a) { return a *= -1.0; }

  double constant() const { return constant_; }
  const std::vector<std::pair<int, double>>& terms() const { return terms_; }

  /// Merge duplicate variables, drop exact zeros; sorted by variable id.
  LinExpr compacted() const {
    LinExpr out;
    out.constant_ = constant_;
    out.terms_ = terms_;
    std::sort(out.terms_.begin(), out.terms_.end());
    std::size_t w = 0;
    for (std::size_t i = 0; i < out.terms_.size();) {
      int v = out.terms_[i].first;
      double c = 0;
      while (i < out.terms_.size() && out.terms_[i].first == v) c += out.terms_[i++].second;
      if (c != 0.0) out.terms_[w++] = {v, c};
    }
    out.terms_.resize(w);
    return out;
  }

  double eval(const Eigen::VectorXd& x) const {
    double r = constant_;
    for (const auto& [v, c] : terms_) r += c * x[v];
    return r;
  }

 private:
  std::vector<std::pair<int, double>> terms_;
  double constant_ = 0.0;
};

inline LinExpr operator*(Var v, double s) { return LinExpr(v) * s; }
inline LinExpr operator*(double s, Var v) { return LinExpr(v) * s; }
inline LinExpr operator+(Var a, Var b) { return LinExpr(a) + LinExpr(b); }
inline LinExpr operator-(Var a, Var b) { return LinExpr(a) - LinExpr(b); }
inline LinExpr operator+(Var a, double b) { return LinExpr(a) + LinExpr(b); }
inline LinExpr operator+(double a, Var b) { return LinExpr(a) + LinExpr(b); }
inline LinExpr operator-(Var a, double b) { return LinExpr(a) - LinExpr(b); }
inline LinExpr operator-(double a, Var b) { return LinExpr(a) - LinExpr(b); }
inline LinExpr operator-(Var v) { return -LinExpr(v); }

enum class SolveStatus { optimal, infeasible, unbounded, numerical_failure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::unbounded: return "unbounded";
    default: return "numerical_failure";
  }
}

/// Linear row  expr (cmp) 0  stored in normalized form.
struct LinearRow {
  LinExpr expr;   // eq:  expr == 0,  le:  expr <= 0
  std::string label;
};

/// Second-order cone block  ||arg|| <= bound.
struct SocBlock {
  std::vector<LinExpr> arg;
  LinExpr bound;
  std::string label;
};

/// Convex program: quadratic+linear objective, linear eq/ineq rows, SOC blocks.
///
/// The quadratic part must be PSD; it is lowered to rotated cones when solved.
/// Quadratic terms may carry a group id so that terms sharing a group land in
/// one epigraph cone (keeps KKT blocks small and structured).
class Program {
 public:
  Var add_var(std::string label = {}) {
    var_labels_.push_back(std::move(label));
    lower_.push_back(-std::numeric_limits<double>::infinity());
    upper_.push_back(std::numeric_limits<double>::infinity());
    return Var{n_vars_++};
  }
  int num_vars() const { return n_vars_; }
  const std::string& var_label(int id) const { return var_labels_[id]; }

  void set_lower(Var v, double lb) { lower_[v.id] = lb; }
  void set_upper(Var v, double ub) { upper_[v.id] = ub; }
  void set_bounds(Var v, double lb, double ub) {
    lower_[v.id] = lb;
    upper_[v.id] = ub;
  }
  double lower(int id) const { return lower_[id]; }
  double upper(int id) const { return upper_[id]; }

  /// expr == rhs
  int add_eq(const LinExpr& expr, double rhs = 0.0, std::string label = {}) {
    eqs_.push_back({(expr - LinExpr(rhs)).compacted(), std::move(label)});
    return static_cast<int>(eqs_.size()) - 1;
  }
  /// expr <= ub
  int add_le(const LinExpr& expr, double ub = 0.0, std::string label = {}) {
    les_.push_back({(expr - LinExpr(ub)).compacted(), std::move(label)});
    return static_cast<int>(les_.size()) - 1;
  }
  /// expr >= lb
  int add_ge(const LinExpr& expr, double lb = 0.0, std::string label = {}) {
    return add_le(LinExpr(lb) - expr, 0.0, std::move(label));
  }
  /// ||arg|| <= bound
  int add_soc(std::vector<LinExpr> arg, const LinExpr& bound, std::string label = {}) {
    SocBlock b;
    b.arg.reserve(arg.size());
    for (auto& e : arg) b.arg.push_back(e.compacted());
    b.bound = bound.compacted();
    b.label = std::move(label);
    socs_.push_back(std::move(b));
    return static_cast<int>(socs_.size()) - 1;
  }

  void add_obj_constant(double c) { obj_const_ += c; }
  void add_obj_linear(Var v, double c) { obj_lin_[v.id] += c; }
  /// coef * x_v^2; group < 0 means "own epigraph component".
  void add_obj_quad(Var v, double coef, int group = -1) {
    if (coef < 0) throw config_error("quadratic objective coefficient must be >= 0");
    quad_diag_.push_back({v.id, coef, group});
  }
  /// coef * x_a * x_b cross term (the assembled form must stay PSD).
  void add_obj_cross(Var a, Var b, double coef) { quad_cross_.push_back({a.id, b.id, coef}); }

  const std::vector<LinearRow>& equalities() const { return eqs_; }
  const std::vector<LinearRow>& inequalities() const { return les_; }
  const std::vector<SocBlock>& soc_blocks() const { return socs_; }
  double objective_constant() const { return obj_const_; }
  const std::map<int, double>& objective_linear() const { return obj_lin_; }

  struct QuadDiag {
    int var;
    double coef;
    int group;
  };
  struct QuadCross {
    int a, b;
    double coef;
  };
  const std::vector<QuadDiag>& quad_diag() const { return quad_diag_; }
  const std::vector<QuadCross>& quad_cross() const { return quad_cross_; }

  /// Objective value at a point (quadratic + linear + constant).
  double objective_at(const Eigen::VectorXd& x) const {
    double r = obj_const_;
    for (const auto& [v, c] : obj_lin_) r += c * x[v];
    for (const auto& q : quad_diag_) r += q.coef * x[q.var] * x[q.var];
    for (const auto& q : quad_cross_) r += q.coef * x[q.a] * x[q.b];
    return r;
  }

  /// Plain-text dump (sparse triplets) for external cross-checks.
  void dump(std::ostream& os) const {
    os << "conicprogram v1\n";
    os << "vars " << n_vars_ << "\n";
    os << "objective_constant " << fmt(obj_const_) << "\n";
    os << "objective_linear " << obj_lin_.size() << "\n";
    for (const auto& [v, c] : obj_lin_) os << v << " " << fmt(c) << "\n";
    os << "objective_quadratic " << quad_diag_.size() + quad_cross_.size() << "\n";
    for (const auto& q : quad_diag_) os << q.var << " " << q.var << " " << fmt(q.coef) << "\n";
    for (const auto& q : quad_cross_) os << q.a << " " << q.b << " " << fmt(q.coef) << "\n";
    os << "bounds\n";
    for (int i = 0; i < n_vars_; ++i) {
      if (std::isfinite(lower_[i]) || std::isfinite(upper_[i]))
        os << i << " " << fmt(lower_[i]) << " " << fmt(upper_[i]) << "\n";
    }
    os << "eq " << eqs_.size() << "\n";
    for (const auto& r : eqs_) dump_row(os, r.expr);
    os << "le " << les_.size() << "\n";
    for (const auto& r : les_) dump_row(os, r.expr);
    os << "soc " << socs_.size() << "\n";
    for (const auto& b : socs_) {
      os << "cone " << b.arg.size() << "\n";
      dump_row(os, b.bound);
      for (const auto& e : b.arg) dump_row(os, e);
    }
  }

 private:
  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }
  static void dump_row(std::ostream& os, const LinExpr& e) {
    os << e.terms().size() << " " << fmt(e.constant());
    for (const auto& [v, c] : e.terms()) os << " " << v << ":" << fmt(c);
    os << "\n";
  }

  int n_vars_ = 0;
  std::vector<std::string> var_labels_;
  std::vector<double> lower_, upper_;
  std::vector<LinearRow> eqs_, les_;
  std::vector<SocBlock> socs_;
  double obj_const_ = 0.0;
  std::map<int, double> obj_lin_;
  std::vector<QuadDiag> quad_diag_;
  std::vector<QuadCross> quad_cross_;
};

}  // namespace mgdr::conic
