#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mgdr/conic/program.hpp"

namespace mgdr::conic {

struct SolveOptions {
  double feas_tol = 1e-8;
  double rel_gap_tol = 1e-8;
  double abs_gap_tol = 1e-9;
  /// Gap accepted when progress stops.  Large cones bottom out near
  /// degree * 1e-12 in double precision, which can sit above the primary
  /// tolerances; a feasible stalled iterate within this bound is still
  /// reported optimal (with its true residuals) instead of failing.
  double stall_gap_tol = 1e-7;
  int max_iterations = 100;
  double static_reg = 1e-8;
  int refine_steps = 2;
  bool verbose = false;
};

struct IterTrace {
  double mu, pres, dres, gap, step;
};

/// Program data in the standard embedding
///   min c'x  s.t.  Ax = b,  Gx + s = h,  s in (orthant x SOC blocks).
struct Lowered {
  int n = 0;       // standard-form variables (user + epigraph)
  int n_user = 0;  // leading user variables
  Eigen::SparseMatrix<double> A, G;
  Eigen::VectorXd b, h, c;
  int l = 0;                  // leading orthant rows of G
  std::vector<int> soc_dim;   // cone sizes, in row order after the orthant

  struct RowSrc {
    enum Kind { var_lb, var_ub, ineq } kind;
    int index;
  };
  std::vector<RowSrc> lp_src;  // provenance of each orthant row
  std::vector<int> soc_src;    // user soc index, or -1 for objective epigraph
};

struct SolveResult {
  SolveStatus status = SolveStatus::numerical_failure;
  Eigen::VectorXd x;   // user variables
  double objective = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  double gap_abs = std::numeric_limits<double>::infinity();
  double gap_rel = std::numeric_limits<double>::infinity();
  std::vector<IterTrace> trace;

  // standard-form iterate (scaled by 1/tau for optimal, raw for certificates)
  Eigen::VectorXd x_std, s_std, y_std, z_std;
  double tau = 0, kappa = 0;
};

namespace detail {

struct ConeLayout {
  int l = 0;
  std::vector<int> soc_start;  // offsets into the m rows
  std::vector<int> soc_dim;
  int m = 0;
  int degree() const { return l + static_cast<int>(soc_dim.size()); }
};

/// Nesterov-Todd scaling state for one iteration.
struct Scaling {
  Eigen::VectorXd lp_w2;                  // W^2 diagonal on orthant rows
  std::vector<double> eta;                // per cone
  std::vector<Eigen::VectorXd> wbar;      // per cone, wbar'J wbar = 1
  std::vector<Eigen::MatrixXd> W2;        // per cone dense W^2
  Eigen::VectorXd lambda;                 // scaled point, lambda = W z
};

inline void soc_mul_W(double eta, const Eigen::VectorXd& wb, const Eigen::VectorXd& v,
                      Eigen::Ref<Eigen::VectorXd> out) {
  // W v = eta (2 wbar (wbar'v) - J v)
  const double dot = wb.dot(v);
  out = 2.0 * dot * wb;
  out[0] -= v[0];
  out.tail(out.size() - 1) += v.tail(v.size() - 1);
  out *= eta;
}

inline void soc_mul_Winv(double eta, const Eigen::VectorXd& wb, const Eigen::VectorXd& v,
                         Eigen::Ref<Eigen::VectorXd> out) {
  // W^{-1} v = (1/eta) (2 (J wbar)(J wbar)'v - J v)
  Eigen::VectorXd jw = wb;
  jw.tail(jw.size() - 1) *= -1.0;
  const double dot = jw.dot(v);
  out = 2.0 * dot * jw;
  out[0] -= v[0];
  out.tail(out.size() - 1) += v.tail(v.size() - 1);
  out /= eta;
}

inline bool compute_scaling(const ConeLayout& K, const Eigen::VectorXd& s,
                            const Eigen::VectorXd& z, Scaling& W) {
  W.lp_w2.resize(K.l);
  for (int i = 0; i < K.l; ++i) {
    if (s[i] <= 0 || z[i] <= 0) return false;
    W.lp_w2[i] = s[i] / z[i];
  }
  const int nc = static_cast<int>(K.soc_dim.size());
  W.eta.resize(nc);
  W.wbar.resize(nc);
  W.W2.resize(nc);
  W.lambda.resize(K.m);
  for (int i = 0; i < K.l; ++i) W.lambda[i] = std::sqrt(s[i] * z[i]);
  for (int c = 0; c < nc; ++c) {
    const int o = K.soc_start[c], d = K.soc_dim[c];
    const auto sc = s.segment(o, d);
    const auto zc = z.segment(o, d);
    const double gs = sc[0] * sc[0] - sc.tail(d - 1).squaredNorm();
    const double gz = zc[0] * zc[0] - zc.tail(d - 1).squaredNorm();
    if (gs <= 0 || gz <= 0 || sc[0] <= 0 || zc[0] <= 0) return false;
    const double rgs = std::sqrt(gs), rgz = std::sqrt(gz);
    Eigen::VectorXd sb = sc / rgs, zb = zc / rgz;
    const double gamma = std::sqrt((1.0 + sb.dot(zb)) / 2.0);
    Eigen::VectorXd wb(d);
    wb[0] = (sb[0] + zb[0]) / (2.0 * gamma);
    wb.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
    // hyperbolic Householder vector: unit J-norm, (2 wb wb' - J)^2 z = (gs/gz) s
    wb[0] += 1.0;
    wb /= std::sqrt(2.0 * wb[0]);
    const double eta = std::pow(gs / gz, 0.25);
    W.eta[c] = eta;
    W.wbar[c] = wb;
    Eigen::MatrixXd M = 2.0 * wb * wb.transpose();
    M(0, 0) -= 1.0;
    for (int k = 1; k < d; ++k) M(k, k) += 1.0;
    M *= eta;
    W.W2[c] = M * M;
    soc_mul_W(eta, wb, zc, W.lambda.segment(o, d));
  }
  return true;
}

inline void mul_W(const ConeLayout& K, const Scaling& W, const Eigen::VectorXd& v,
                  Eigen::VectorXd& out) {
  out.resize(K.m);
  for (int i = 0; i < K.l; ++i) out[i] = std::sqrt(W.lp_w2[i]) * v[i];
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    const int o = K.soc_start[c], d = K.soc_dim[c];
    soc_mul_W(W.eta[c], W.wbar[c], v.segment(o, d), out.segment(o, d));
  }
}

inline void mul_Winv(const ConeLayout& K, const Scaling& W, const Eigen::VectorXd& v,
                     Eigen::VectorXd& out) {
  out.resize(K.m);
  for (int i = 0; i < K.l; ++i) out[i] = v[i] / std::sqrt(W.lp_w2[i]);
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    const int o = K.soc_start[c], d = K.soc_dim[c];
    soc_mul_Winv(W.eta[c], W.wbar[c], v.segment(o, d), out.segment(o, d));
  }
}

inline void mul_W2(const ConeLayout& K, const Scaling& W, const Eigen::VectorXd& v,
                   Eigen::VectorXd& out) {
  out.resize(K.m);
  for (int i = 0; i < K.l; ++i) out[i] = W.lp_w2[i] * v[i];
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    const int o = K.soc_start[c], d = K.soc_dim[c];
    out.segment(o, d) = W.W2[c] * v.segment(o, d);
  }
}

/// Jordan product u o v per cone block.
inline void jordan_mul(const ConeLayout& K, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                       Eigen::VectorXd& out) {
  out.resize(K.m);
  for (int i = 0; i < K.l; ++i) out[i] = u[i] * v[i];
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    const int o = K.soc_start[c], d = K.soc_dim[c];
    const auto uc = u.segment(o, d);
    const auto vc = v.segment(o, d);
    out[o] = uc.dot(vc);
    out.segment(o + 1, d - 1) = uc[0] * vc.tail(d - 1) + vc[0] * uc.tail(d - 1);
  }
}

/// Solve lambda o u = d for u.
inline bool jordan_solve(const ConeLayout& K, const Eigen::VectorXd& lambda,
                         const Eigen::VectorXd& d, Eigen::VectorXd& out) {
  out.resize(K.m);
  for (int i = 0; i < K.l; ++i) {
    if (lambda[i] == 0) return false;
    out[i] = d[i] / lambda[i];
  }
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    const int o = K.soc_start[c], dd = K.soc_dim[c];
    const auto lc = lambda.segment(o, dd);
    const auto dc = d.segment(o, dd);
    const double det = lc[0] * lc[0] - lc.tail(dd - 1).squaredNorm();
    if (det <= 0 || lc[0] <= 0) return false;
    const double u0 = (lc[0] * dc[0] - lc.tail(dd - 1).dot(dc.tail(dd - 1))) / det;
    out[o] = u0;
    out.segment(o + 1, dd - 1) = (dc.tail(dd - 1) - u0 * lc.tail(dd - 1)) / lc[0];
  }
  return true;
}

/// Identity element of the cone algebra.
inline Eigen::VectorXd cone_identity(const ConeLayout& K) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(K.m);
  e.head(K.l).setOnes();
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) e[K.soc_start[c]] = 1.0;
  return e;
}

/// Largest step a with v + a dv staying in the cone (capped).
inline double max_step(const ConeLayout& K, const Eigen::VectorXd& v, const Eigen::VectorXd& dv,
                       double cap) {
  double a = cap;
  for (int i = 0; i < K.l; ++i)
    if (dv[i] < 0) a = std::min(a, -v[i] / dv[i]);
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    const int o = K.soc_start[c], d = K.soc_dim[c];
    const auto vc = v.segment(o, d);
    const auto dc = dv.segment(o, d);
    const double qa = dc[0] * dc[0] - dc.tail(d - 1).squaredNorm();
    const double qb = vc[0] * dc[0] - vc.tail(d - 1).dot(dc.tail(d - 1));
    const double qc = std::max(0.0, vc[0] * vc[0] - vc.tail(d - 1).squaredNorm());
    double root = std::numeric_limits<double>::infinity();
    if (std::abs(qa) < 1e-14 * (std::abs(qb) + 1e-300)) {
      if (qb < 0) root = -qc / (2.0 * qb);
    } else {
      const double disc = qb * qb - qa * qc;
      if (disc >= 0) {
        const double r = std::sqrt(disc);
        // roots of qa t^2 + 2 qb t + qc = 0
        double r1 = (-qb - r) / qa, r2 = (-qb + r) / qa;
        if (r1 > r2) std::swap(r1, r2);
        if (r1 > 0)
          root = r1;
        else if (r2 > 0)
          root = r2;
      }
    }
    if (dc[0] < 0) root = std::min(root, -vc[0] / dc[0]);
    a = std::min(a, root);
  }
  return a;
}

inline void shift_into_cone(const ConeLayout& K, Eigen::VectorXd& v) {
  if (K.l > 0) {
    double mn = v.head(K.l).minCoeff();
    if (mn <= 0) v.head(K.l).array() += 1.0 - mn;
  }
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    const int o = K.soc_start[c], d = K.soc_dim[c];
    const double res = v[o] - v.segment(o + 1, d - 1).norm();
    if (res <= 0) v[o] += 1.0 - res;
  }
}

}  // namespace detail

/// Lower a Program to the standard embedding (deterministic).
inline Lowered lower(const Program& p) {
  Lowered L;
  L.n_user = p.num_vars();

  // quadratic objective -> epigraph groups
  struct Group {
    std::vector<std::pair<int, double>> rows_diag;  // (var, sqrt(coef))
    Eigen::MatrixXd rows_dense;                     // general path
    std::vector<int> support;
  };
  std::vector<Group> groups;
  if (!p.quad_cross().empty()) {
    // assemble dense PSD block over the support and eigen-factor it
    std::map<int, int> pos;
    auto touch = [&pos](int v) {
      if (!pos.count(v)) {
        int k = static_cast<int>(pos.size());
        pos[v] = k;
      }
    };
    for (const auto& q : p.quad_diag()) touch(q.var);
    for (const auto& q : p.quad_cross()) {
      touch(q.a);
      touch(q.b);
    }
    const int ns = static_cast<int>(pos.size());
    if (ns > 4000) throw config_error("quadratic cross-term block too large");
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(ns, ns);
    for (const auto& q : p.quad_diag()) Q(pos[q.var], pos[q.var]) += q.coef;
    for (const auto& q : p.quad_cross()) {
      Q(pos[q.a], pos[q.b]) += q.coef / 2.0;
      Q(pos[q.b], pos[q.a]) += q.coef / 2.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q);
    const double emax = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    Group g;
    g.support.resize(ns);
    for (const auto& [v, k] : pos) g.support[k] = v;
    std::vector<Eigen::VectorXd> rows;
    for (int k = 0; k < ns; ++k) {
      const double ev = es.eigenvalues()[k];
      if (ev < -1e-10 * emax) throw config_error("quadratic objective is not PSD");
      if (ev > 1e-14 * emax) rows.push_back(std::sqrt(ev) * es.eigenvectors().col(k));
    }
    g.rows_dense.resize(static_cast<Eigen::Index>(rows.size()), ns);
    for (std::size_t r = 0; r < rows.size(); ++r) g.rows_dense.row(static_cast<Eigen::Index>(r)) = rows[r].transpose();
    groups.push_back(std::move(g));
  } else {
    std::map<int, std::size_t> by_group;
    for (const auto& q : p.quad_diag()) {
      if (q.coef == 0) continue;
      if (q.group < 0) {
        Group g;
        g.rows_diag.push_back({q.var, std::sqrt(q.coef)});
        groups.push_back(std::move(g));
      } else {
        auto it = by_group.find(q.group);
        if (it == by_group.end()) {
          by_group[q.group] = groups.size();
          groups.push_back({});
          it = by_group.find(q.group);
        }
        groups[it->second].rows_diag.push_back({q.var, std::sqrt(q.coef)});
      }
    }
  }

  L.n = L.n_user + static_cast<int>(groups.size());
  L.c = Eigen::VectorXd::Zero(L.n);
  for (const auto& [v, c] : p.objective_linear()) L.c[v] += c;
  for (std::size_t g = 0; g < groups.size(); ++g) L.c[L.n_user + static_cast<int>(g)] = 1.0;

  // equalities
  std::vector<Eigen::Triplet<double>> ta;
  const auto& eqs = p.equalities();
  L.b.resize(static_cast<Eigen::Index>(eqs.size()));
  for (std::size_t i = 0; i < eqs.size(); ++i) {
    for (const auto& [v, c] : eqs[i].expr.terms()) ta.emplace_back(static_cast<int>(i), v, c);
    L.b[static_cast<Eigen::Index>(i)] = -eqs[i].expr.constant();
  }
  L.A.resize(static_cast<Eigen::Index>(eqs.size()), L.n);
  L.A.setFromTriplets(ta.begin(), ta.end());

  // orthant rows: variable bounds first, then user inequalities
  std::vector<Eigen::Triplet<double>> tg;
  std::vector<double> h;
  auto push_lp = [&](Lowered::RowSrc src) { L.lp_src.push_back(src); };
  for (int v = 0; v < p.num_vars(); ++v) {
    if (std::isfinite(p.lower(v))) {  // -x <= -lb
      tg.emplace_back(static_cast<int>(h.size()), v, -1.0);
      h.push_back(-p.lower(v));
      push_lp({Lowered::RowSrc::var_lb, v});
    }
    if (std::isfinite(p.upper(v))) {  // x <= ub
      tg.emplace_back(static_cast<int>(h.size()), v, 1.0);
      h.push_back(p.upper(v));
      push_lp({Lowered::RowSrc::var_ub, v});
    }
  }
  const auto& les = p.inequalities();
  for (std::size_t i = 0; i < les.size(); ++i) {
    for (const auto& [v, c] : les[i].expr.terms()) tg.emplace_back(static_cast<int>(h.size()), v, c);
    h.push_back(-les[i].expr.constant());
    push_lp({Lowered::RowSrc::ineq, static_cast<int>(i)});
  }
  L.l = static_cast<int>(h.size());

  auto push_expr_row = [&](const LinExpr& e, double scale) {
    for (const auto& [v, c] : e.terms()) tg.emplace_back(static_cast<int>(h.size()), v, -scale * c);
    h.push_back(scale * e.constant());
  };

  // user SOC blocks: s = [bound; arg] in K
  for (std::size_t i = 0; i < p.soc_blocks().size(); ++i) {
    const auto& blk = p.soc_blocks()[i];
    push_expr_row(blk.bound, 1.0);
    for (const auto& e : blk.arg) push_expr_row(e, 1.0);
    L.soc_dim.push_back(static_cast<int>(blk.arg.size()) + 1);
    L.soc_src.push_back(static_cast<int>(i));
  }

  // epigraph cones:  || (2 W x ; t - 1) || <= t + 1   <=>   t >= ||W x||^2
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const int tvar = L.n_user + static_cast<int>(g);
    const auto& grp = groups[g];
    int rows = grp.rows_dense.size() ? static_cast<int>(grp.rows_dense.rows())
                                     : static_cast<int>(grp.rows_diag.size());
    tg.emplace_back(static_cast<int>(h.size()), tvar, -1.0);
    h.push_back(1.0);
    if (grp.rows_dense.size()) {
      for (int r = 0; r < rows; ++r) {
        const int row_id = static_cast<int>(h.size());
        for (int k = 0; k < static_cast<int>(grp.support.size()); ++k) {
          const double w = grp.rows_dense(r, k);
          if (w != 0.0) tg.emplace_back(row_id, grp.support[k], -2.0 * w);
        }
        h.push_back(0.0);
      }
    } else {
      for (const auto& [v, w] : grp.rows_diag) {
        tg.emplace_back(static_cast<int>(h.size()), v, -2.0 * w);
        h.push_back(0.0);
      }
    }
    tg.emplace_back(static_cast<int>(h.size()), tvar, -1.0);
    h.push_back(-1.0);
    L.soc_dim.push_back(rows + 2);
    L.soc_src.push_back(-1);
  }

  if (h.empty()) {  // fully unconstrained in the cone part: add a vacuous row
    h.push_back(1.0);
    L.l = 1;
    L.lp_src.push_back({Lowered::RowSrc::ineq, -1});
  }

  L.G.resize(static_cast<Eigen::Index>(h.size()), L.n);
  L.G.setFromTriplets(tg.begin(), tg.end());
  L.h = Eigen::Map<Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
  return L;
}

namespace detail {

/// KKT system [ dI  A'  G' ; A  -dI  0 ; G  0  -W^2-dI ] with refinement
/// against the unregularized matrix.
class KktSolver {
 public:
  KktSolver(const Lowered& L, const ConeLayout& K, double reg)
      : L_(L), K_(K), reg_(reg), n_(L.n), p_(static_cast<int>(L.b.size())), m_(K.m) {
    At_ = L.A.transpose();
    Gt_ = L.G.transpose();
    dim_ = n_ + p_ + m_;
  }

  bool factorize(const Scaling& W) {
    W_ = &W;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<std::size_t>(L_.A.nonZeros() + L_.G.nonZeros() + dim_) + soc_nnz());
    for (int i = 0; i < n_; ++i) t.emplace_back(i, i, reg_);
    for (int k = 0; k < L_.A.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(L_.A, k); it; ++it)
        t.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < p_; ++i) t.emplace_back(n_ + i, n_ + i, -reg_);
    for (int k = 0; k < L_.G.outerSize(); ++k)
      for (Eigen::SparseMatrix<double>::InnerIterator it(L_.G, k); it; ++it)
        t.emplace_back(n_ + p_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < K_.l; ++i)
      t.emplace_back(n_ + p_ + i, n_ + p_ + i, -W.lp_w2[i] - reg_);
    for (std::size_t c = 0; c < K_.soc_dim.size(); ++c) {
      const int o = n_ + p_ + K_.soc_start[c], d = K_.soc_dim[c];
      for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j)
          t.emplace_back(o + i, o + j, -W.W2[c](i, j) - (i == j ? reg_ : 0.0));
    }
    Eigen::SparseMatrix<double> Kmat(dim_, dim_);
    Kmat.setFromTriplets(t.begin(), t.end());
    if (!analyzed_) {
      ldlt_.analyzePattern(Kmat);
      analyzed_ = true;
    }
    ldlt_.factorize(Kmat);
    return ldlt_.info() == Eigen::Success;
  }

  /// Solve the (unregularized) KKT system with iterative refinement.
  void solve(const Eigen::VectorXd& rx, const Eigen::VectorXd& ry, const Eigen::VectorXd& rz,
             Eigen::VectorXd& dx, Eigen::VectorXd& dy, Eigen::VectorXd& dz, int refine) const {
    Eigen::VectorXd rhs(dim_);
    rhs << rx, ry, rz;
    Eigen::VectorXd sol = ldlt_.solve(rhs);
    for (int it = 0; it < refine; ++it) {
      Eigen::VectorXd res = rhs - apply_exact(sol);
      if (res.lpNorm<Eigen::Infinity>() < 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
      sol += ldlt_.solve(res);
    }
    dx = sol.head(n_);
    dy = sol.segment(n_, p_);
    dz = sol.tail(m_);
  }

 private:
  std::size_t soc_nnz() const {
    std::size_t s = 0;
    for (int d : K_.soc_dim) s += static_cast<std::size_t>(d) * (d + 1) / 2;
    return s;
  }

  Eigen::VectorXd apply_exact(const Eigen::VectorXd& v) const {
    Eigen::VectorXd out(dim_);
    const auto x = v.head(n_);
    const auto y = v.segment(n_, p_);
    const auto z = v.tail(m_);
    out.head(n_) = At_ * y + Gt_ * z;
    out.segment(n_, p_) = L_.A * x;
    Eigen::VectorXd w2z;
    mul_W2(K_, *W_, z, w2z);
    out.tail(m_) = L_.G * x - w2z;
    return out;
  }

  const Lowered& L_;
  const ConeLayout& K_;
  double reg_;
  int n_, p_, m_, dim_ = 0;
  Eigen::SparseMatrix<double> At_, Gt_;
  const Scaling* W_ = nullptr;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> ldlt_;
  bool analyzed_ = false;
};

}  // namespace detail

/// Interior-point solve of the lowered standard form.
inline SolveResult solve_lowered(const Program& p, const Lowered& L, const SolveOptions& opt) {
  using namespace detail;
  SolveResult R;
  const int n = L.n, pE = static_cast<int>(L.b.size()), m = static_cast<int>(L.h.size());

  ConeLayout K;
  K.l = L.l;
  K.soc_dim = L.soc_dim;
  int off = L.l;
  for (int d : L.soc_dim) {
    K.soc_start.push_back(off);
    off += d;
  }
  K.m = m;

  const double cn = std::max(1.0, L.c.norm());
  const double bn = std::max(1.0, L.b.norm());
  const double hn = std::max(1.0, L.h.norm());

  // initial point from two KKT solves at identity scaling
  Scaling W;
  W.lp_w2 = Eigen::VectorXd::Ones(K.l);
  W.lambda = Eigen::VectorXd::Zero(m);
  W.eta.assign(K.soc_dim.size(), 1.0);
  W.wbar.resize(K.soc_dim.size());
  W.W2.resize(K.soc_dim.size());
  for (std::size_t c = 0; c < K.soc_dim.size(); ++c) {
    W.wbar[c] = Eigen::VectorXd::Zero(K.soc_dim[c]);
    W.wbar[c][0] = 1.0;
    W.W2[c] = Eigen::MatrixXd::Identity(K.soc_dim[c], K.soc_dim[c]);
  }
  double reg = opt.static_reg;
  auto kkt = std::make_unique<KktSolver>(L, K, reg);
  for (int tries = 0; !kkt->factorize(W); ++tries) {
    if (tries >= 3) return R;
    reg *= 100;
    kkt = std::make_unique<KktSolver>(L, K, reg);
  }

  Eigen::VectorXd x(n), y(pE), s(m), z(m), tmpx, tmpy, tmpz;
  kkt->solve(Eigen::VectorXd::Zero(n), L.b, L.h, x, y, tmpz, opt.refine_steps);
  s = -tmpz;
  shift_into_cone(K, s);
  kkt->solve(-L.c, Eigen::VectorXd::Zero(pE), Eigen::VectorXd::Zero(m), tmpx, y, z,
             opt.refine_steps);
  shift_into_cone(K, z);
  double tau = 1.0, kappa = 1.0;

  const Eigen::VectorXd e = cone_identity(K);
  const int degree = K.degree();

  Eigen::VectorXd Rx(n), Ry(pE), Rz(m);
  Eigen::VectorXd ux, uy, uz, vx, vy, vz;
  Eigen::VectorXd dx(n), dy(pE), dz(m), ds(m), dsa(m), dza(m);
  Eigen::VectorXd dc(m), lam_dc(m), wldc(m), corr1(m), corr2(m), corr(m);

  auto record_metrics = [&](double& pres, double& dres, double& gap_abs, double& gap_rel,
                            double& pcost, double& dcost) {
    const double cx = L.c.dot(x), by = L.b.dot(y), hz = L.h.dot(z);
    pcost = cx / tau;
    dcost = -(by + hz) / tau;
    gap_abs = s.dot(z) / (tau * tau);
    const double denom = std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));
    gap_rel = gap_abs / denom;
    pres = std::max((L.A * x - L.b * tau).norm() / bn, (L.G * x + s - L.h * tau).norm() / hn) / tau;
    Eigen::VectorXd rx = L.A.transpose() * y + L.G.transpose() * z + L.c * tau;
    dres = rx.norm() / cn / tau;
  };

  SolveStatus status = SolveStatus::numerical_failure;
  int iter = 0;
  int stalled = 0;  // consecutive iterations with no useful progress

  // Best iterate seen, by worst tolerance ratio.  Endgame steps at the limits
  // of double precision can degrade an already-converged point, so failure
  // exits fall back on this snapshot instead of the final iterate.
  double best_merit = std::numeric_limits<double>::infinity();
  Eigen::VectorXd bx, byv, bzv, bsv;
  double btau = 1.0, bkap = 1.0;

  for (; iter < opt.max_iterations; ++iter) {
    double pres, dres, gap_abs, gap_rel, pcost, dcost;
    record_metrics(pres, dres, gap_abs, gap_rel, pcost, dcost);
    R.trace.push_back({(s.dot(z) + tau * kappa) / (degree + 1), pres, dres, gap_abs, 0.0});

    if (!std::isfinite(pres) || !std::isfinite(gap_abs)) break;
    const double merit = std::max({pres / opt.feas_tol, dres / opt.feas_tol,
                                   gap_rel / opt.stall_gap_tol});
    if (merit < best_merit) {
      best_merit = merit;
      bx = x;
      byv = y;
      bzv = z;
      bsv = s;
      btau = tau;
      bkap = kappa;
    }
    if (pres <= opt.feas_tol && dres <= opt.feas_tol &&
        (gap_abs <= opt.abs_gap_tol || gap_rel <= opt.rel_gap_tol)) {
      status = SolveStatus::optimal;
      break;
    }
    if (stalled >= 5) break;
    const double by_hz = L.b.dot(y) + L.h.dot(z);
    if (by_hz < -1e-12) {
      const double sc = -1.0 / by_hz;
      const double res = (L.A.transpose() * (y * sc) + L.G.transpose() * (z * sc)).norm() / cn;
      if (res <= opt.feas_tol) {
        status = SolveStatus::infeasible;
        break;
      }
    }
    const double cx = L.c.dot(x);
    if (cx < -1e-12) {
      const double sc = -1.0 / cx;
      const double res = std::max((L.A * (x * sc)).norm() / bn, (L.G * (x * sc) + s * sc).norm() / hn);
      if (res <= opt.feas_tol) {
        status = SolveStatus::unbounded;
        break;
      }
    }

    if (!compute_scaling(K, s, z, W)) break;
    bool ok = kkt->factorize(W);
    if (!ok) {
      reg *= 100;
      kkt = std::make_unique<KktSolver>(L, K, reg);
      if (!kkt->factorize(W)) break;
    }

    const double mu = (s.dot(z) + tau * kappa) / (degree + 1);

    // residuals
    Rx = L.A.transpose() * y + L.G.transpose() * z + L.c * tau;
    Ry = L.A * x - L.b * tau;
    Rz = L.G * x + s - L.h * tau;
    const double Rt = L.c.dot(x) + L.b.dot(y) + L.h.dot(z) + kappa;

    kkt->solve(-L.c, L.b, L.h, ux, uy, uz, opt.refine_steps);
    const double U = L.c.dot(ux) + L.b.dot(uy) + L.h.dot(uz);

    auto direction = [&](double scale, const Eigen::VectorXd& dcone, double dkap,
                         Eigen::VectorXd& ox, Eigen::VectorXd& oy, Eigen::VectorXd& oz,
                         Eigen::VectorXd& os, double& otau, double& okap) {
      jordan_solve(K, W.lambda, dcone, lam_dc);
      mul_W(K, W, lam_dc, wldc);
      kkt->solve(-scale * Rx, -scale * Ry, -scale * Rz - wldc, vx, vy, vz, opt.refine_steps);
      const double V = L.c.dot(vx) + L.b.dot(vy) + L.h.dot(vz);
      otau = (-scale * Rt - dkap / tau - V) / (U - kappa / tau);
      ox = vx + otau * ux;
      oy = vy + otau * uy;
      oz = vz + otau * uz;
      os = -scale * Rz - L.G * ox + L.h * otau;
      okap = (dkap - kappa * otau) / tau;
    };

    // affine direction
    jordan_mul(K, W.lambda, W.lambda, dc);
    dc = -dc;
    double dtau_a, dkap_a;
    direction(1.0, dc, -tau * kappa, dx, dy, dz, dsa, dtau_a, dkap_a);
    double alpha_a = max_step(K, s, dsa, 10.0);
    alpha_a = std::min(alpha_a, max_step(K, z, dz, 10.0));
    if (dtau_a < 0) alpha_a = std::min(alpha_a, -tau / dtau_a);
    if (dkap_a < 0) alpha_a = std::min(alpha_a, -kappa / dkap_a);
    alpha_a = std::min(alpha_a, 1.0);
    const double sigma = std::pow(1.0 - alpha_a, 3);

    // combined direction with Mehrotra correction
    dza = dz;
    mul_Winv(K, W, dsa, corr1);
    mul_W(K, W, dza, corr2);
    jordan_mul(K, corr1, corr2, corr);
    jordan_mul(K, W.lambda, W.lambda, dc);
    dc = -dc - corr + sigma * mu * e;
    const double dkap_c = -tau * kappa - dtau_a * dkap_a + sigma * mu;
    double dtau, dkap;
    direction(1.0 - sigma, dc, dkap_c, dx, dy, dz, ds, dtau, dkap);

    double alpha = max_step(K, s, ds, 10.0);
    alpha = std::min(alpha, max_step(K, z, dz, 10.0));
    if (dtau < 0) alpha = std::min(alpha, -tau / dtau);
    if (dkap < 0) alpha = std::min(alpha, -kappa / dkap);
    alpha = std::min(0.99 * alpha, 1.0);

    // Multiple centrality correctors: when the step is short, pull outlier
    // orthant pairs back toward the central path at a trial step and keep the
    // augmented direction if it lengthens the step.  Stabilizes the endgame,
    // where lopsided complementarity products otherwise force tiny steps.
    for (int round = 0; round < 2 && alpha < 0.9; ++round) {
      const double at = std::min(1.0, alpha + 0.3);
      const double mu_t = std::max(sigma * mu, 1e-300);
      mul_W(K, W, dz, corr2);    // λ-space dz
      mul_Winv(K, W, ds, corr1); // λ-space ds
      Eigen::VectorXd dc_aug = dc;
      for (int i = 0; i < K.l; ++i) {
        const double v = (W.lambda[i] + at * corr2[i]) * (W.lambda[i] + at * corr1[i]);
        if (v < 0.1 * mu_t)
          dc_aug[i] += 0.1 * mu_t - v;
        else if (v > 10.0 * mu_t)
          dc_aug[i] += 10.0 * mu_t - v;
      }
      double dtau_g, dkap_g;
      direction(1.0 - sigma, dc_aug, dkap_c, vx, vy, vz, corr, dtau_g, dkap_g);
      double alpha_g = max_step(K, s, corr, 10.0);
      alpha_g = std::min(alpha_g, max_step(K, z, vz, 10.0));
      if (dtau_g < 0) alpha_g = std::min(alpha_g, -tau / dtau_g);
      if (dkap_g < 0) alpha_g = std::min(alpha_g, -kappa / dkap_g);
      alpha_g = std::min(0.99 * alpha_g, 1.0);
      if (!std::isfinite(alpha_g) || alpha_g <= alpha + 0.01) break;
      dx = vx;
      dy = vy;
      dz = vz;
      ds = corr;
      dtau = dtau_g;
      dkap = dkap_g;
      dc = dc_aug;
      alpha = alpha_g;
    }
    R.trace.back().step = alpha;

    if (!std::isfinite(alpha)) break;
    if (alpha <= 1e-9) {  // no movement; let the stall check above decide
      ++stalled;
      continue;
    }

    x += alpha * dx;
    y += alpha * dy;
    z += alpha * dz;
    s += alpha * ds;
    tau += alpha * dtau;
    kappa += alpha * dkap;
    if (tau <= 0 || kappa < 0) break;

    const double mu_after = (s.dot(z) + tau * kappa) / (degree + 1);
    stalled = (alpha <= 0.05 || mu_after >= 0.9 * mu) ? stalled + 1 : 0;
  }

  // The search stopped short of the primary tolerances (stall, scaling or
  // factorization breakdown, iteration cap).  If the best point seen is
  // feasible to tolerance and within the relaxed gap bound, report it as the
  // optimum with its true residuals; otherwise fail.
  if (status == SolveStatus::numerical_failure && best_merit <= 1.0) {
    x = bx;
    y = byv;
    z = bzv;
    s = bsv;
    tau = btau;
    kappa = bkap;
    status = SolveStatus::optimal;
  }

  R.iterations = iter;
  R.status = status;
  R.tau = tau;
  R.kappa = kappa;
  if (status == SolveStatus::optimal) {
    R.x_std = x / tau;
    R.s_std = s / tau;
    R.y_std = y / tau;
    R.z_std = z / tau;
    R.x = R.x_std.head(L.n_user);
    R.objective = p.objective_at(R.x);
    double pc, dc2;
    record_metrics(R.primal_residual, R.dual_residual, R.gap_abs, R.gap_rel, pc, dc2);
  } else {
    R.x_std = x;
    R.s_std = s;
    R.y_std = y;
    R.z_std = z;
    R.x = x.head(L.n_user) / std::max(tau, 1e-300);
    R.objective = std::numeric_limits<double>::quiet_NaN();
  }
  return R;
}

inline SolveResult solve(const Program& p, const SolveOptions& opt = {}) {
  const Lowered L = lower(p);
  SolveResult r = solve_lowered(p, L, opt);
  if (r.status != SolveStatus::numerical_failure) return r;
  // The attainable endgame gap sits near the double-precision floor and is
  // sensitive to the regularization path; when a run stalls short of the
  // tolerances, deterministic retries with shifted settings usually converge.
  for (int attempt = 0; attempt < 3; ++attempt) {
    SolveOptions o = opt;
    o.refine_steps = opt.refine_steps + 2;
    if (attempt == 1) o.static_reg = opt.static_reg * 0.1;
    if (attempt == 2) o.static_reg = opt.static_reg * 10.0;
    SolveResult r2 = solve_lowered(p, L, o);
    if (r2.status != SolveStatus::numerical_failure) return r2;
    if (r2.gap_abs < r.gap_abs) r = std::move(r2);
  }
  return r;
}

struct CertifyReport {
  bool ok = false;
  double max_eq_residual = 0;
  double max_ineq_violation = 0;
  double max_soc_violation = 0;
  double gap_rel = std::numeric_limits<double>::infinity();
  double dual_residual = 0;
  std::vector<std::string> failures;
};

/// Recompute feasibility residuals and the duality gap from scratch.
inline CertifyReport certify(const Program& p, const SolveResult& r, double tol = 1e-7) {
  CertifyReport out;
  const Lowered L = lower(p);

  if (r.status == SolveStatus::infeasible) {
    const double by_hz = L.b.dot(r.y_std) + L.h.dot(r.z_std);
    if (by_hz >= 0) {
      out.failures.push_back("infeasibility certificate: b'y + h'z not negative");
      return out;
    }
    const double sc = -1.0 / by_hz;
    const double res =
        (L.A.transpose() * (r.y_std * sc) + L.G.transpose() * (r.z_std * sc)).norm() /
        std::max(1.0, L.c.norm());
    out.dual_residual = res;
    out.ok = res <= tol;
    if (!out.ok) out.failures.push_back("infeasibility certificate residual above tolerance");
    return out;
  }
  if (r.status != SolveStatus::optimal) {
    out.failures.push_back(std::string("status ") + to_string(r.status));
    return out;
  }

  const Eigen::VectorXd& x = r.x_std;
  // equalities
  const auto& eqs = p.equalities();
  Eigen::VectorXd eqres = L.A * x - L.b;
  for (int i = 0; i < eqres.size(); ++i) {
    const double v = std::abs(eqres[i]);
    out.max_eq_residual = std::max(out.max_eq_residual, v);
    if (v > tol)
      out.failures.push_back("equality " + std::to_string(i) +
                             (eqs[static_cast<std::size_t>(i)].label.empty()
                                  ? std::string()
                                  : " (" + eqs[static_cast<std::size_t>(i)].label + ")") +
                             " residual " + std::to_string(v));
  }
  // cone rows
  Eigen::VectorXd slack = L.h - L.G * x;
  for (int i = 0; i < L.l; ++i) {
    const double viol = std::max(0.0, -slack[i]);
    out.max_ineq_violation = std::max(out.max_ineq_violation, viol);
    if (viol > tol) {
      const auto& src = L.lp_src[static_cast<std::size_t>(i)];
      std::string what = src.kind == Lowered::RowSrc::var_lb   ? "lower bound on var "
                         : src.kind == Lowered::RowSrc::var_ub ? "upper bound on var "
                                                               : "inequality ";
      std::string lbl;
      if (src.kind == Lowered::RowSrc::ineq && src.index >= 0 &&
          !p.inequalities()[static_cast<std::size_t>(src.index)].label.empty())
        lbl = " (" + p.inequalities()[static_cast<std::size_t>(src.index)].label + ")";
      out.failures.push_back(what + std::to_string(src.index) + lbl + " violated by " +
                             std::to_string(viol));
    }
  }
  int o = L.l;
  for (std::size_t c = 0; c < L.soc_dim.size(); ++c) {
    const int d = L.soc_dim[c];
    const double viol =
        std::max(0.0, slack.segment(o + 1, d - 1).norm() - slack[o]);
    out.max_soc_violation = std::max(out.max_soc_violation, viol);
    if (viol > tol) {
      std::string lbl = L.soc_src[c] < 0
                            ? "objective epigraph"
                            : "soc block " + std::to_string(L.soc_src[c]) +
                                  (p.soc_blocks()[static_cast<std::size_t>(L.soc_src[c])].label.empty()
                                       ? std::string()
                                       : " (" + p.soc_blocks()[static_cast<std::size_t>(L.soc_src[c])].label + ")");
      out.failures.push_back(lbl + " violated by " + std::to_string(viol));
    }
    o += d;
  }
  // duality gap and dual feasibility
  const double pcost = L.c.dot(x);
  const double dcost = -(L.b.dot(r.y_std) + L.h.dot(r.z_std));
  out.gap_rel = std::abs(pcost - dcost) / std::max(1.0, std::min(std::abs(pcost), std::abs(dcost)));
  if (out.gap_rel > tol) out.failures.push_back("duality gap above tolerance");
  out.dual_residual = (L.A.transpose() * r.y_std + L.G.transpose() * r.z_std + L.c).norm() /
                      std::max(1.0, L.c.norm());
  if (out.dual_residual > 10 * tol) out.failures.push_back("dual residual above tolerance");

  out.ok = out.failures.empty();
  return out;
}

}  // namespace mgdr::conic
