#include "dr/qp.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "dr/miqp.hpp"

namespace dr {

namespace {
// DR_QP_DUMP=<path>: save the problem a failed solve was given, for replay
void dump_failed(const QpProblem& p, const char* path) {
  std::ofstream os(path);
  if (!os) return;
  MiqpProblem wrap;
  wrap.base = p;
  dump_problem(wrap, os);
}
}  // namespace

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::node_limit: return "node_limit";
    case SolveStatus::time_limit: return "time_limit";
  }
  return "?";
}

double KktReport::max_residual() const {
  return std::max(std::max(stationarity, primal),
                  std::max(dual_sign, complementarity));
}

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kFixEps = 1e-12;      // bound gap below which a var is fixed
constexpr int kMaxIter = 200;

struct Inner {
  // min 1/2 z'diag(q)z + c'z + c0  s.t. A z = b, lb <= z <= ub
  int n = 0, m = 0;
  std::vector<double> q, c, lb, ub, b;
  double c0 = 0.0;
  std::vector<Triplet> at;  // triplets of A (m x n)
};

struct InnerResult {
  bool converged = false;
  std::vector<double> z, y, zl, zu;
  double mu = kInf, rp_inf = kInf, rd_inf = kInf;
  int iterations = 0;
};

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

// Active-set cleanup for a near-converged iterate. Mehrotra steps lose their
// accuracy once some bound pairs are far tighter than others: the corrector
// divides by vanishing widths and the dual residual can blow up late in the
// run. Pinning the bounds the primal-dual indicator calls active and solving
// the remaining equality-constrained QP directly gives machine-accurate
// stationarity and exactly zero complementarity; a few repair passes release
// wrongly pinned bounds (negative multiplier) or pin newly violated ones.
// Leaves res untouched and returns false when no clean guess emerges.
bool polish(const Inner& in, InnerResult& res, double eps_feas) {
  const int n = in.n, m = in.m;
  if (n == 0) return false;
  std::vector<int> state(n, 0);  // 0 free, 1 at lower, 2 at upper
  for (int j = 0; j < n; ++j) {
    bool hl = std::isfinite(in.lb[j]), hu = std::isfinite(in.ub[j]);
    double wl = hl ? std::max(res.z[j] - in.lb[j], 0.0) : kInf;
    double wu = hu ? std::max(in.ub[j] - res.z[j], 0.0) : kInf;
    bool al = hl && wl < res.zl[j];
    bool au = hu && wu < res.zu[j];
    if (al && au) {
      if (res.zl[j] >= res.zu[j]) au = false;
      else al = false;
    }
    state[j] = al ? 1 : au ? 2 : 0;
  }

  SpMat A(m, n);
  A.setFromTriplets(in.at.begin(), in.at.end());
  std::vector<double> z(n), y(m), rd(n), rp(m);
  const double reg = 1e-12;

  // degenerate vertices make the repair cycle (a variable sits exactly on its
  // bound with a ~0 multiplier, so pin and release keep flipping); keep the
  // best pass by total defect and fall back on it when no pass settles
  double best_score = kInf;
  double b_rp = kInf, b_box = kInf, b_rdfree = kInf, b_sign = kInf;
  std::vector<double> bz, by, brd;
  std::vector<int> bstate;
  // cycling also splits the evidence across two adjacent active sets: one
  // pass comes out primal-clean, its neighbour dual-clean, and their
  // difference is a null direction. When that direction carries no
  // curvature, the primal of one with the multipliers of the other is an
  // exact KKT pair; the cross stationarity check proves or refutes it.
  std::vector<double> pv_z, pv_y;
  std::vector<int> pv_state;
  double pv_rp = kInf, pv_box = kInf;
  auto try_splice = [&](const std::vector<double>& Pz, double Prp, double Pbox,
                        const std::vector<double>& Dy,
                        const std::vector<int>& Dstate) {
    std::vector<double> rdx(n);
    for (int j = 0; j < n; ++j) rdx[j] = in.q[j] * Pz[j] + in.c[j];
    for (const auto& t : in.at) rdx[t.col()] -= t.value() * Dy[t.row()];
    double x_rdfree = 0.0, x_sign = 0.0, x_pin = 0.0;
    for (int j = 0; j < n; ++j) {
      if (Dstate[j] == 0) {
        x_rdfree = std::max(x_rdfree, std::fabs(rdx[j]));
      } else if (Dstate[j] == 1) {
        x_sign = std::max(x_sign, -rdx[j]);
        x_pin = std::max(x_pin, std::fabs(Pz[j] - in.lb[j]));
      } else {
        x_sign = std::max(x_sign, rdx[j]);
        x_pin = std::max(x_pin, std::fabs(in.ub[j] - Pz[j]));
      }
    }
    double xs = std::max(std::max(Prp, std::max(Pbox, x_pin)),
                         std::max(x_rdfree, x_sign));
    if (xs < best_score) {
      if (std::getenv("DR_QP_TRACE"))
        std::fprintf(stderr,
                     "  polish splice: rp=%.2e box=%.2e rdfree=%.2e "
                     "sign=%.2e pin=%.2e\n",
                     Prp, Pbox, x_rdfree, x_sign, x_pin);
      best_score = xs;
      b_rp = Prp;
      b_box = std::max(Pbox, x_pin);
      b_rdfree = x_rdfree;
      b_sign = x_sign;
      bz = Pz;
      by = Dy;
      brd = std::move(rdx);
      bstate = Dstate;
    }
  };

  for (int pass = 0; pass < 8; ++pass) {
    std::vector<int> f_of(n, -1);
    std::vector<int> jf;
    for (int j = 0; j < n; ++j) {
      if (state[j] == 0) {
        f_of[j] = (int)jf.size();
        jf.push_back(j);
      }
      z[j] = state[j] == 1 ? in.lb[j] : state[j] == 2 ? in.ub[j] : 0.0;
    }
    const int nf = (int)jf.size(), dim = nf + m;

    // [diag(q)_F  A_F'; A_F  0] [z_F; t] = [-c_F; b - A z_fix],  y = -t
    // The (1,1) block can be all but zero (slacks carry no curvature), so the
    // system needs a pivoting factorization; LDLT breaks down on it.
    std::vector<Triplet> kt;
    Eigen::VectorXd rhs(dim);
    for (int f = 0; f < nf; ++f) {
      kt.emplace_back(f, f, in.q[jf[f]] + reg);
      rhs[f] = -in.c[jf[f]];
    }
    std::vector<double> bshift(m, 0.0);
    for (const auto& t : in.at) {
      if (f_of[t.col()] >= 0) {
        kt.emplace_back(nf + t.row(), f_of[t.col()], t.value());
        kt.emplace_back(f_of[t.col()], nf + t.row(), t.value());
      } else {
        bshift[t.row()] += t.value() * z[t.col()];
      }
    }
    for (int i = 0; i < m; ++i) {
      kt.emplace_back(nf + i, nf + i, -reg);
      rhs[nf + i] = in.b[i] - bshift[i];
    }
    SpMat K(dim, dim);
    K.setFromTriplets(kt.begin(), kt.end());
    K.makeCompressed();
    Eigen::SparseLU<SpMat> ldlt;
    ldlt.compute(K);
    if (ldlt.info() != Eigen::Success) {
      if (std::getenv("DR_QP_TRACE"))
        std::fprintf(stderr, "  polish pass %d: factorize failed nf=%d m=%d\n",
                     pass, nf, m);
      break;
    }
    Eigen::VectorXd sol = ldlt.solve(rhs);
    auto mult = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
      out.setZero();
      for (int f = 0; f < nf; ++f) out[f] = in.q[jf[f]] * v[f];
      for (const auto& t : in.at) {
        if (f_of[t.col()] < 0) continue;
        out[t.row() + nf] += t.value() * v[f_of[t.col()]];
        out[f_of[t.col()]] += t.value() * v[t.row() + nf];
      }
    };
    Eigen::VectorXd resid(dim), corr(dim);
    for (int ref = 0; ref < 3; ++ref) {
      mult(sol, resid);
      resid = rhs - resid;
      double rn = resid.lpNorm<Eigen::Infinity>();
      if (rn < 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>())) break;
      corr = ldlt.solve(resid);
      Eigen::VectorXd cand = sol + corr;
      mult(cand, resid);
      resid = rhs - resid;
      if (resid.lpNorm<Eigen::Infinity>() < rn) sol = cand;
      else break;
    }
    for (int f = 0; f < nf; ++f) z[jf[f]] = sol[f];
    for (int i = 0; i < m; ++i) y[i] = -sol[nf + i];

    for (int j = 0; j < n; ++j) rd[j] = in.q[j] * z[j] + in.c[j];
    std::fill(rp.begin(), rp.end(), 0.0);
    for (const auto& t : in.at) {
      rd[t.col()] -= t.value() * y[t.row()];
      rp[t.row()] += t.value() * z[t.col()];
    }
    for (int i = 0; i < m; ++i) rp[i] -= in.b[i];

    // defects of this pass, measured before any repair flips: dual residual
    // on the free block, how far outside its box a free variable sits, and
    // how wrong-signed a pinned multiplier is
    double rd_free = 0.0, viol_box = 0.0, viol_sign = 0.0;
    for (int j = 0; j < n; ++j) {
      if (state[j] == 0) {
        rd_free = std::max(rd_free, std::fabs(rd[j]));
        if (std::isfinite(in.lb[j]))
          viol_box = std::max(viol_box, in.lb[j] - z[j]);
        if (std::isfinite(in.ub[j]))
          viol_box = std::max(viol_box, z[j] - in.ub[j]);
      } else if (state[j] == 1) {
        viol_sign = std::max(viol_sign, -rd[j]);
      } else {
        viol_sign = std::max(viol_sign, rd[j]);
      }
    }
    double rp_inf = inf_norm(rp);
    double score = std::max(std::max(rp_inf, rd_free),
                            std::max(viol_box, viol_sign));
    if (score < best_score) {
      best_score = score;
      b_rp = rp_inf;
      b_box = viol_box;
      b_rdfree = rd_free;
      b_sign = viol_sign;
      bz = z;
      by = y;
      brd = rd;
      bstate = state;
    }
    if (!pv_z.empty()) {
      try_splice(z, rp_inf, viol_box, pv_y, pv_state);
      try_splice(pv_z, pv_rp, pv_box, y, state);
    }
    pv_z = z;
    pv_y = y;
    pv_state = state;
    pv_rp = rp_inf;
    pv_box = viol_box;

    // repair: free variables must respect their box, pinned ones their sign
    bool clean = true;
    int n_rel = 0, n_pin = 0;
    for (int j = 0; j < n; ++j) {
      double btol = 1e-11 * (1.0 + std::fabs(z[j]));
      if (state[j] == 0) {
        if (std::isfinite(in.lb[j]) && z[j] < in.lb[j] - btol) {
          state[j] = 1;
          clean = false;
          ++n_pin;
        } else if (std::isfinite(in.ub[j]) && z[j] > in.ub[j] + btol) {
          state[j] = 2;
          clean = false;
          ++n_pin;
        }
      } else {
        double mult_tol = 1e-11 * (1.0 + std::fabs(rd[j]));
        if (state[j] == 1 && rd[j] < -mult_tol) {
          state[j] = 0;
          clean = false;
          ++n_rel;
        } else if (state[j] == 2 && rd[j] > mult_tol) {
          state[j] = 0;
          clean = false;
          ++n_rel;
        }
      }
    }
    if (std::getenv("DR_QP_TRACE"))
      std::fprintf(stderr,
                   "  polish pass %d: nf=%d rp=%.2e rdfree=%.2e viol=%.2e/%.2e "
                   "rel=%d pin=%d\n",
                   pass, nf, rp_inf, rd_free, viol_box, viol_sign, n_rel,
                   n_pin);
    if (clean) break;  // the active set is a fixpoint; no further change
  }

  // Dependent active rows leave y ambiguous, and the regularized solve can
  // land on a y whose leftover sits on a pinned multiplier with the wrong
  // sign; release/pin then cycles between two states forever. When the best
  // pass is primal-exact and only sign-defective, repair the dual directly:
  // the minimum-norm correction w with A_F' w = 0 that zeroes the offending
  // multipliers, accepted only if remeasurement confirms it.
  if (best_score > eps_feas && !bz.empty() &&
      std::max(std::max(b_rp, b_box), b_rdfree) <= eps_feas) {
    for (int round = 0; round < 3 && b_sign > eps_feas; ++round) {
      std::vector<int> r_of(n, -1);
      std::vector<double> tgt;
      for (int j = 0; j < n; ++j) {
        bool bad = (bstate[j] == 1 && brd[j] < 0.0) ||
                   (bstate[j] == 2 && brd[j] > 0.0);
        if (bstate[j] == 0 || bad) {
          r_of[j] = (int)tgt.size();
          tgt.push_back(bstate[j] == 0 ? 0.0 : brd[j]);
        }
      }
      const int k = (int)tgt.size();
      std::vector<Triplet> ct;
      for (const auto& t : in.at) {
        if (r_of[t.col()] >= 0) {
          ct.emplace_back(t.row(), m + r_of[t.col()], t.value());
          ct.emplace_back(m + r_of[t.col()], t.row(), t.value());
        }
      }
      for (int i = 0; i < m; ++i) ct.emplace_back(i, i, 1.0);
      for (int r = 0; r < k; ++r) ct.emplace_back(m + r, m + r, -reg);
      SpMat Kc(m + k, m + k);
      Kc.setFromTriplets(ct.begin(), ct.end());
      Kc.makeCompressed();
      Eigen::SparseLU<SpMat> lu;
      lu.compute(Kc);
      if (lu.info() != Eigen::Success) break;
      Eigen::VectorXd rhs2 = Eigen::VectorXd::Zero(m + k);
      for (int r = 0; r < k; ++r) rhs2[m + r] = tgt[r];
      Eigen::VectorXd w = lu.solve(rhs2);
      for (int i = 0; i < m; ++i) by[i] += w[i];
      for (const auto& t : in.at) brd[t.col()] -= t.value() * w[t.row()];
      b_rdfree = b_sign = 0.0;
      for (int j = 0; j < n; ++j) {
        if (bstate[j] == 0) b_rdfree = std::max(b_rdfree, std::fabs(brd[j]));
        else if (bstate[j] == 1) b_sign = std::max(b_sign, -brd[j]);
        else b_sign = std::max(b_sign, brd[j]);
      }
      if (std::getenv("DR_QP_TRACE"))
        std::fprintf(stderr, "  polish dual fix %d: rdfree=%.2e sign=%.2e\n",
                     round, b_rdfree, b_sign);
      if (b_rdfree > eps_feas) break;  // correction broke the free block
    }
    best_score = std::max(std::max(b_rp, b_box), std::max(b_rdfree, b_sign));
  }
  if (best_score > eps_feas) return false;

  // hand back the best pass. Clamping free variables into their boxes and
  // zeroing wrong-signed multipliers perturbs nothing beyond best_score.
  for (int j = 0; j < n; ++j) {
    res.z[j] = bz[j];
    if (bstate[j] == 0) {
      // keep strictly inside so downstream width computations stay sane
      if (std::isfinite(in.lb[j])) res.z[j] = std::max(res.z[j], in.lb[j]);
      if (std::isfinite(in.ub[j])) res.z[j] = std::min(res.z[j], in.ub[j]);
    }
    res.zl[j] = bstate[j] == 1 ? std::max(brd[j], 0.0) : 0.0;
    res.zu[j] = bstate[j] == 2 ? std::max(-brd[j], 0.0) : 0.0;
  }
  res.y = by;
  res.rp_inf = std::max(b_rp, b_box);
  res.rd_inf = std::max(b_rdfree, b_sign);
  res.mu = 0.0;
  res.converged = true;
  return true;
}

// Mehrotra predictor-corrector on the box-constrained equality form.
// Terminates when scaled residuals and the worst complementarity product
// drop to the requested absolute levels, or when progress dies.
InnerResult ipm_solve(const Inner& in, double eps_feas, double eps_comp) {
  const int n = in.n, m = in.m, dim = n + m;
  InnerResult res;
  res.z.assign(n, 0.0);
  res.y.assign(m, 0.0);
  res.zl.assign(n, 0.0);
  res.zu.assign(n, 0.0);
  if (n == 0) {
    res.converged = inf_norm(in.b) <= eps_feas;
    res.mu = 0.0;
    res.rp_inf = inf_norm(in.b);
    res.rd_inf = 0.0;
    return res;
  }

  std::vector<bool> has_l(n), has_u(n);
  int npairs = 0;
  for (int j = 0; j < n; ++j) {
    has_l[j] = std::isfinite(in.lb[j]);
    has_u[j] = std::isfinite(in.ub[j]);
    npairs += has_l[j] + has_u[j];
  }

  auto& z = res.z;
  auto& y = res.y;
  auto& zl = res.zl;
  auto& zu = res.zu;
  for (int j = 0; j < n; ++j) {
    if (has_l[j] && has_u[j]) z[j] = 0.5 * (in.lb[j] + in.ub[j]);
    else if (has_l[j]) z[j] = in.lb[j] + 1.0 + 0.1 * std::fabs(in.lb[j]);
    else if (has_u[j]) z[j] = in.ub[j] - 1.0 - 0.1 * std::fabs(in.ub[j]);
    if (has_l[j]) zl[j] = 1.0 + std::fabs(in.c[j]);
    if (has_u[j]) zu[j] = 1.0 + std::fabs(in.c[j]);
    // keep a real gap on thin boxes
    if (has_l[j] && has_u[j] && in.ub[j] - in.lb[j] < 2e-8) {
      zl[j] = zu[j] = 1.0;
    }
  }

  SpMat A(m, n);
  A.setFromTriplets(in.at.begin(), in.at.end());
  SpMat At = A.transpose();

  double reg_p = 1e-11, reg_d = 1e-11;
  // KKT = [[diag(q)+D+reg_p, A'], [A, -reg_d I]]; pattern fixed across iters.
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
  bool analyzed = false;

  std::vector<double> wl(n, 0.0), wu(n, 0.0);
  auto widths = [&]() {
    for (int j = 0; j < n; ++j) {
      wl[j] = has_l[j] ? z[j] - in.lb[j] : 1.0;
      wu[j] = has_u[j] ? in.ub[j] - z[j] : 1.0;
    }
  };
  widths();

  Eigen::VectorXd rhs(dim), sol(dim), resid(dim);
  std::vector<double> rd(n), rp(m), dvec(n);

  auto kkt_mult = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out,
                      const std::vector<double>& hdiag) {
    // out = K0 * v with K0 the unregularized KKT matrix
    out.setZero();
    for (int j = 0; j < n; ++j) out[j] = hdiag[j] * v[j];
    for (const auto& t : in.at) {
      out[t.row() + n] += t.value() * v[t.col()];
      out[t.col()] += t.value() * v[t.row() + n];
    }
  };

  // column view of A, for the huge-diagonal back-substitution below
  std::vector<std::vector<std::pair<int, double>>> acols(n);
  for (const auto& t : in.at) acols[t.col()].emplace_back(t.row(), t.value());

  std::vector<double> hdiag(n);
  std::vector<int> huge_idx;  // coords whose barrier diagonal dominates
  double last_solve_resid = 0.0;
  // Variables pinched against a bound carry diagonals ~1/width. The factored
  // solve smears roundoff from other rows into those coordinates, and the
  // dual update later divides by the width again — a 1e-13 slip in dz turns
  // into an O(10) slip in dzl. Their rows are diagonally dominant, so given
  // dy they determine dz to full relative precision; recompute them directly.
  auto apply_inv = [&](const Eigen::VectorXd& r) {
    Eigen::VectorXd u = ldlt.solve(r);
    for (int j : huge_idx) {
      double ay = 0.0;
      for (const auto& [i, a] : acols[j]) ay += a * u[n + i];
      u[j] = (r[j] - ay) / hdiag[j];
    }
    return u;
  };
  auto solve_kkt = [&](Eigen::VectorXd& x_inout) {
    // refine toward the unregularized system; keep steps that help
    Eigen::VectorXd r = x_inout;  // rhs on entry
    sol = apply_inv(r);
    for (int pass = 0; pass < 2; ++pass) {
      kkt_mult(sol, resid, hdiag);
      resid = r - resid;
      double rn = resid.lpNorm<Eigen::Infinity>();
      if (rn < 1e-13 * (1.0 + r.lpNorm<Eigen::Infinity>())) break;
      Eigen::VectorXd corr = apply_inv(resid);
      Eigen::VectorXd cand = sol + corr;
      kkt_mult(cand, resid, hdiag);
      resid = r - resid;
      if (resid.lpNorm<Eigen::Infinity>() < rn) sol = cand;
      else break;
    }
    kkt_mult(sol, resid, hdiag);
    resid = x_inout - resid;
    last_solve_resid = resid.lpNorm<Eigen::Infinity>();
    if (std::getenv("DR_QP_LIN") && last_solve_resid > 1e-8) {
      for (int i = 0; i < dim; ++i)
        if (std::fabs(resid[i]) > 0.1 * last_solve_resid)
          std::fprintf(stderr,
                       "    lin resid[%d] = %.3e (%s) rhs=%.3e sol=%.3e%s\n", i,
                       resid[i], i < n ? "z" : "eq", x_inout[i], sol[i],
                       i < n ? (" hd=" + std::to_string(hdiag[i])).c_str()
                             : "");
    }
    x_inout = sol;
  };

  double mu = 1.0;
  double best_rp = kInf;
  int no_progress = 0;
  const bool trace = std::getenv("DR_QP_TRACE") != nullptr;
  // late Mehrotra steps can regress; remember the best iterate for the polish
  double best_score = kInf;
  InnerResult best;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    res.iterations = iter;
    // residuals
    for (int j = 0; j < n; ++j) rd[j] = in.q[j] * z[j] + in.c[j] - zl[j] + zu[j];
    std::fill(rp.begin(), rp.end(), 0.0);
    for (const auto& t : in.at) {
      rd[t.col()] -= t.value() * y[t.row()];
      rp[t.row()] += t.value() * z[t.col()];
    }
    for (int i = 0; i < m; ++i) rp[i] -= in.b[i];

    double gap = 0.0, worst = 0.0;
    for (int j = 0; j < n; ++j) {
      if (has_l[j]) { gap += wl[j] * zl[j]; worst = std::max(worst, wl[j] * zl[j]); }
      if (has_u[j]) { gap += wu[j] * zu[j]; worst = std::max(worst, wu[j] * zu[j]); }
    }
    mu = npairs > 0 ? gap / npairs : 0.0;
    res.mu = mu;
    res.rp_inf = inf_norm(rp);
    res.rd_inf = inf_norm(rd);
    double score = std::max(std::max(res.rp_inf, res.rd_inf), worst);
    if (score < best_score) {
      best_score = score;
      best = res;
    }
    if (trace) {
      double dm = 0.0;
      for (int j = 0; j < n; ++j)
        dm = std::max(dm, std::max(zl[j], zu[j]));
      std::fprintf(stderr,
                   "ipm %3d rp=%.3e rd=%.3e mu=%.3e worst=%.3e dmag=%.2e "
                   "lin=%.2e reg=%.1e\n",
                   iter, res.rp_inf, res.rd_inf, mu, worst, dm,
                   last_solve_resid, reg_p);}
    if (res.rp_inf <= eps_feas && res.rd_inf <= eps_feas && worst <= eps_comp) {
      res.converged = true;
      return res;
    }
    // infeasible problems: complementarity collapses or duals blow up while
    // the primal residual refuses to move
    if (res.rp_inf < best_rp * 0.95) {
      best_rp = res.rp_inf;
      no_progress = 0;
    } else if (++no_progress > 25 && res.rp_inf > 1e3 * eps_feas) {
      if (trace) std::fprintf(stderr, "ipm exit: primal stall\n");
      break;
    }
    if (npairs > 0 && mu < 1e-13 && res.rp_inf > 1e3 * eps_feas) {
      if (trace) std::fprintf(stderr, "ipm exit: mu collapse\n");
      break;
    }
    double dual_mag = 0.0;
    for (int j = 0; j < n; ++j)
      dual_mag = std::max(dual_mag, std::max(zl[j], zu[j]));
    if (dual_mag > 1e13) {
      if (trace) std::fprintf(stderr, "ipm exit: dual blowup\n");
      break;
    }

    // assemble and factorize
    std::vector<Triplet> kt;
    kt.reserve(in.at.size() + dim);
    huge_idx.clear();
    for (int j = 0; j < n; ++j) {
      double d = in.q[j];
      if (has_l[j]) d += zl[j] / wl[j];
      if (has_u[j]) d += zu[j] / wu[j];
      d = std::min(d, 1e16);
      hdiag[j] = d;
      if (d > 1e8) huge_idx.push_back(j);
      kt.emplace_back(j, j, d + reg_p);
    }
    for (const auto& t : in.at)  // lower triangle: row block below columns
      kt.emplace_back(t.row() + n, t.col(), t.value());
    for (int i = 0; i < m; ++i) kt.emplace_back(n + i, n + i, -reg_d);
    SpMat K(dim, dim);
    K.setFromTriplets(kt.begin(), kt.end());
    if (!analyzed) {
      ldlt.analyzePattern(K);
      analyzed = true;
    }
    ldlt.factorize(K);
    if (ldlt.info() != Eigen::Success) {
      reg_p *= 100.0;
      reg_d *= 100.0;
      if (reg_p > 1e-4) {
        if (trace) std::fprintf(stderr, "ipm exit: factorization\n");
        break;
      }
      continue;
    }

    // affine predictor
    for (int j = 0; j < n; ++j) rhs[j] = -rd[j] - zl[j] + zu[j];
    for (int i = 0; i < m; ++i) rhs[n + i] = -rp[i];
    // ill-conditioned late factorizations poison the step and blow up an
    // almost-converged run; back off to the best iterate and refactorize
    // with stronger regularization instead of stepping on garbage. Gauge
    // solve accuracy against the residuals the step is meant to remove.
    auto solve_bad = [&]() {
      return last_solve_resid >
             1e-8 + 1e-3 * std::max(res.rp_inf, res.rd_inf);
    };
    auto rescue = [&]() -> bool {
      reg_p *= 100.0;
      reg_d *= 100.0;
      if (reg_p > 1e-4) return false;
      z = best.z;
      y = best.y;
      zl = best.zl;
      zu = best.zu;
      widths();
      if (trace)
        std::fprintf(stderr, "ipm rescue: lin=%.2e reg->%.1e\n",
                     last_solve_resid, reg_p);
      return true;
    };
    solve_kkt(rhs);
    if (solve_bad()) {
      if (rescue()) continue;
      if (trace) std::fprintf(stderr, "ipm exit: linear solve\n");
      break;
    }
    auto alpha_pd = [&](const Eigen::VectorXd& dz,
                        const std::vector<double>& dzl,
                        const std::vector<double>& dzu, double* ap, double* ad) {
      double a_p = 1.0, a_d = 1.0;
      for (int j = 0; j < n; ++j) {
        if (has_l[j] && dz[j] < 0) a_p = std::min(a_p, -wl[j] / dz[j]);
        if (has_u[j] && dz[j] > 0) a_p = std::min(a_p, wu[j] / dz[j]);
        if (has_l[j] && dzl[j] < 0) a_d = std::min(a_d, -zl[j] / dzl[j]);
        if (has_u[j] && dzu[j] < 0) a_d = std::min(a_d, -zu[j] / dzu[j]);
      }
      *ap = a_p;
      *ad = a_d;
    };

    std::vector<double> dzl(n, 0.0), dzu(n, 0.0);
    Eigen::VectorXd dz_aff = rhs.head(n);
    for (int j = 0; j < n; ++j) {
      if (has_l[j]) dzl[j] = -zl[j] - zl[j] / wl[j] * dz_aff[j];
      if (has_u[j]) dzu[j] = -zu[j] + zu[j] / wu[j] * dz_aff[j];
    }
    double ap, ad;
    alpha_pd(dz_aff, dzl, dzu, &ap, &ad);
    double mu_aff = 0.0;
    for (int j = 0; j < n; ++j) {
      if (has_l[j]) mu_aff += (wl[j] + ap * dz_aff[j]) * (zl[j] + ad * dzl[j]);
      if (has_u[j]) mu_aff += (wu[j] - ap * dz_aff[j]) * (zu[j] + ad * dzu[j]);
    }
    mu_aff = npairs > 0 ? mu_aff / npairs : 0.0;
    double sigma = mu > 0 ? std::pow(mu_aff / mu, 3) : 0.0;
    sigma = std::min(std::max(sigma, 1e-8), 1.0);

    // corrector
    for (int j = 0; j < n; ++j) {
      double r1 = -rd[j];
      if (has_l[j]) {
        double rcl = wl[j] * zl[j] + dz_aff[j] * dzl[j] - sigma * mu;
        r1 -= rcl / wl[j];
      }
      if (has_u[j]) {
        double rcu = wu[j] * zu[j] - dz_aff[j] * dzu[j] - sigma * mu;
        r1 += rcu / wu[j];
      }
      rhs[j] = r1;
    }
    for (int i = 0; i < m; ++i) rhs[n + i] = -rp[i];
    solve_kkt(rhs);
    if (solve_bad()) {
      if (rescue()) continue;
      if (trace) std::fprintf(stderr, "ipm exit: linear solve\n");
      break;
    }
    Eigen::VectorXd dz = rhs.head(n);
    for (int j = 0; j < n; ++j) {
      if (has_l[j]) {
        double rcl = wl[j] * zl[j] + dz_aff[j] * dzl[j] - sigma * mu;
        dzl[j] = -(rcl + zl[j] * dz[j]) / wl[j];
      }
      if (has_u[j]) {
        double rcu = wu[j] * zu[j] - dz_aff[j] * dzu[j] - sigma * mu;
        dzu[j] = -(rcu - zu[j] * dz[j]) / wu[j];
      }
    }
    alpha_pd(dz, dzl, dzu, &ap, &ad);
    double eta = std::max(0.99, 1.0 - 10.0 * mu);
    ap = std::min(1.0, eta * ap);
    ad = std::min(1.0, eta * ad);
    if (ap < 1e-10 && ad < 1e-10) {
      if (trace) std::fprintf(stderr, "ipm exit: zero step\n");
      break;  // stalled
    }

    for (int j = 0; j < n; ++j) {
      z[j] += ap * dz[j];
      if (has_l[j]) zl[j] = std::max(zl[j] + ad * dzl[j], 1e-300);
      if (has_u[j]) zu[j] = std::max(zu[j] + ad * dzu[j], 1e-300);
    }
    for (int i = 0; i < m; ++i) y[i] += ad * rhs[n + i] * -1.0;
    widths();
  }
  if (best_score < kInf) {
    int iters = res.iterations;
    res = best;
    res.iterations = iters;
  }
  if (!res.converged && res.rp_inf < 1e-6 && res.rd_inf < 1e-2) {
    bool ok = polish(in, res, eps_feas);
    if (trace)
      std::fprintf(stderr, "ipm polish: %s rp=%.3e rd=%.3e\n",
                   ok ? "accepted" : "rejected", res.rp_inf, res.rd_inf);
  }
  return res;
}

// Presolve. Pinned integer variables routinely leave behind rows like
// x <= 0 against a bound x >= 0: feasible, but without a strictly interior
// point, which starves the interior-point method. Folding singleton rows
// into bounds and fixing the variables of forcing rows removes every such
// boundary trap before the solver sees the problem. Each elimination keeps
// enough bookkeeping to reproduce exact multipliers for the original rows.
struct Presolve {
  enum class Fix : unsigned char {
    none,       // still free
    orig,       // input bounds already coincided (multiplier treated as free)
    eq_row,     // pinned by a singleton equality; its residual feeds that row
    collapse,   // tightened bounds met; residual splits by sign
    forced_lo,  // forcing row pushed it to its lower bound
    forced_hi,  // forcing row pushed it to its upper bound
  };
  // One dual-relevant elimination. Replayed newest-first; each event settles
  // the residuals of exactly the variables it fixed, so an absorb can only
  // touch variables whose own events come later in the replay.
  struct Undo {
    enum class Kind : unsigned char { eq_single, forcing, collapse };
    Kind kind;
    int row = -1;           // eq_single: eq row; forcing: ineq row
    int var = -1;           // eq_single / collapse: the variable fixed
    bool at_upper = false;  // forcing: row binds at its upper side
    std::vector<int> vars;  // forcing: every variable this event fixed
  };

  std::vector<int> free_of;     // var -> free index, -1 when fixed
  std::vector<double> fix_val;
  std::vector<int> orig_of;     // free index -> var
  int n_free = 0;
  std::vector<double> wlo, whi;  // working bounds after folding
  std::vector<int> lo_src, hi_src;  // ineq row that set the bound, -1 = input
  std::vector<Fix> fix;
  // 0 kept, 1 dropped (trivially satisfied), 2 eliminated
  std::vector<unsigned char> eq_state, ineq_state;
  std::vector<Undo> undo;  // replayed newest-first during unpack
  bool infeasible = false;
  double violation = 0.0;
};

Presolve presolve_problem(const QpProblem& p) {
  Presolve ps;
  const int n = p.num_vars;
  ps.free_of.assign(n, -1);
  ps.fix_val.assign(n, 0.0);
  ps.wlo = p.lower;
  ps.whi = p.upper;
  ps.lo_src.assign(n, -1);
  ps.hi_src.assign(n, -1);
  ps.fix.assign(n, Presolve::Fix::none);
  ps.eq_state.assign(p.eq_rows.size(), 0);
  ps.ineq_state.assign(p.ineq_rows.size(), 0);

  auto is_fixed = [&](int j) { return ps.fix[j] != Presolve::Fix::none; };
  auto infeas = [&](double excess) {
    ps.infeasible = true;
    ps.violation = std::max(ps.violation, excess);
  };
  auto fix_at = [&](int j, double v, Presolve::Fix kind) {
    double ftol = 1e-9 * (1.0 + std::fabs(v));
    if (v < ps.wlo[j] - ftol || v > ps.whi[j] + ftol) {
      infeas(std::max(ps.wlo[j] - v, v - ps.whi[j]));
      return;
    }
    ps.fix_val[j] = std::min(std::max(v, ps.wlo[j]), ps.whi[j]);
    ps.fix[j] = kind;
  };

  for (int j = 0; j < n; ++j) {
    if (ps.wlo[j] > ps.whi[j] + kFixEps) {
      infeas(ps.wlo[j] - ps.whi[j]);
    } else if (std::isfinite(ps.wlo[j]) && std::isfinite(ps.whi[j]) &&
               ps.whi[j] - ps.wlo[j] <= kFixEps) {
      ps.fix_val[j] = 0.5 * (ps.wlo[j] + ps.whi[j]);
      ps.fix[j] = Presolve::Fix::orig;
    }
  }
  if (ps.infeasible) return ps;

  // entries of the current row with duplicates merged and fixed vars split off
  struct Ent {
    int j;
    double a;
  };
  std::vector<Ent> ents;
  auto gather = [&](const LinearRow& row, double* shift) {
    ents.clear();
    *shift = 0.0;
    for (size_t k = 0; k < row.idx.size(); ++k) {
      int j = row.idx[k];
      double a = row.coef[k];
      if (is_fixed(j)) {
        *shift += a * ps.fix_val[j];
        continue;
      }
      bool merged = false;
      for (auto& e : ents)
        if (e.j == j) {
          e.a += a;
          merged = true;
          break;
        }
      if (!merged) ents.push_back({j, a});
    }
    for (size_t k = 0; k < ents.size();) {
      if (ents[k].a == 0.0) ents.erase(ents.begin() + k);
      else ++k;
    }
  };

  bool changed = true;
  while (changed && !ps.infeasible) {
    changed = false;
    for (size_t r = 0; r < p.eq_rows.size(); ++r) {
      if (ps.eq_state[r] != 0) continue;
      double shift = 0.0;
      gather(p.eq_rows[r], &shift);
      double rhs = p.eq_rhs[r] - shift;
      if (ents.empty()) {
        if (std::fabs(rhs) > 1e-9) infeas(std::fabs(rhs));
        else ps.eq_state[r] = 1;
        changed = true;
      } else if (ents.size() == 1 && std::fabs(ents[0].a) > 1e-12) {
        fix_at(ents[0].j, rhs / ents[0].a, Presolve::Fix::eq_row);
        if (ps.infeasible) return ps;
        ps.eq_state[r] = 2;
        ps.undo.push_back({Presolve::Undo::Kind::eq_single, (int)r, ents[0].j,
                           false, {}});
        changed = true;
      }
    }
    for (size_t r = 0; r < p.ineq_rows.size(); ++r) {
      if (ps.ineq_state[r] != 0) continue;
      double shift = 0.0;
      gather(p.ineq_rows[r], &shift);
      double lo = p.ineq_lower[r], hi = p.ineq_upper[r];
      if (std::isfinite(lo)) lo -= shift;
      if (std::isfinite(hi)) hi -= shift;
      if (ents.empty()) {
        double vio = std::max(std::isfinite(lo) ? lo : -kInf,
                              std::isfinite(hi) ? -hi : -kInf);
        if (vio > 1e-9) infeas(vio);
        else ps.ineq_state[r] = 1;
        changed = true;
        continue;
      }
      if (ents.size() == 1 && std::fabs(ents[0].a) > 1e-12) {
        int j = ents[0].j;
        double a = ents[0].a;
        double il = a > 0 ? lo : hi, ih = a > 0 ? hi : lo;
        il = std::isfinite(il) ? il / a : -kInf;
        ih = std::isfinite(ih) ? ih / a : kInf;
        if (il > ps.wlo[j]) {
          ps.wlo[j] = il;
          ps.lo_src[j] = (int)r;
        }
        if (ih < ps.whi[j]) {
          ps.whi[j] = ih;
          ps.hi_src[j] = (int)r;
        }
        if (ps.wlo[j] > ps.whi[j] + 1e-9) {
          infeas(ps.wlo[j] - ps.whi[j]);
          return ps;
        }
        if (ps.whi[j] - ps.wlo[j] <= kFixEps) {
          ps.fix_val[j] = std::min(std::max(0.5 * (ps.wlo[j] + ps.whi[j]),
                                            ps.wlo[j]), ps.whi[j]);
          ps.fix[j] = Presolve::Fix::collapse;
          ps.undo.push_back({Presolve::Undo::Kind::collapse, -1, j, false, {}});
        }
        ps.ineq_state[r] = 2;
        changed = true;
        continue;
      }
      // forcing: the bound-implied activity range touches a row limit, so
      // every variable must sit at the bound that attains it
      double min_act = 0.0, max_act = 0.0;
      bool min_fin = true, max_fin = true;
      for (const auto& e : ents) {
        double blo = e.a > 0 ? ps.wlo[e.j] : ps.whi[e.j];
        double bhi = e.a > 0 ? ps.whi[e.j] : ps.wlo[e.j];
        if (std::isfinite(blo)) min_act += e.a * blo;
        else min_fin = false;
        if (std::isfinite(bhi)) max_act += e.a * bhi;
        else max_fin = false;
      }
      if (min_fin && std::isfinite(hi) && min_act > hi + 1e-9) {
        infeas(min_act - hi);
        return ps;
      }
      if (max_fin && std::isfinite(lo) && max_act < lo - 1e-9) {
        infeas(lo - max_act);
        return ps;
      }
      bool force_hi = min_fin && std::isfinite(hi) &&
                      min_act >= hi - 1e-11 * (1.0 + std::fabs(hi));
      bool force_lo = !force_hi && max_fin && std::isfinite(lo) &&
                      max_act <= lo + 1e-11 * (1.0 + std::fabs(lo));
      if (force_hi || force_lo) {
        std::vector<int> fixed_here;
        fixed_here.reserve(ents.size());
        for (const auto& e : ents) {
          bool at_lo = (e.a > 0) == force_hi;
          fix_at(e.j, at_lo ? ps.wlo[e.j] : ps.whi[e.j],
                 at_lo ? Presolve::Fix::forced_lo : Presolve::Fix::forced_hi);
          if (ps.infeasible) return ps;
          fixed_here.push_back(e.j);
        }
        ps.ineq_state[r] = 2;
        ps.undo.push_back({Presolve::Undo::Kind::forcing, (int)r, -1, force_hi,
                           std::move(fixed_here)});
        changed = true;
      }
    }
  }

  for (int j = 0; j < n; ++j) {
    if (is_fixed(j)) continue;
    ps.free_of[j] = ps.n_free++;
    ps.orig_of.push_back(j);
  }
  return ps;
}

struct BuildResult {
  Inner inner;
  bool infeasible = false;
  double violation = 0.0;
  int n_eq = 0, n_ineq_slack = 0;
  std::vector<int> slack_row;  // inner row index of each kept ineq row
  std::vector<int> eq_row;     // inner row index of each original eq row
};

// Kept rows with fixed variables substituted; two-sided rows get slack
// variables boxed by the row limits, except zero-width rows, which enter as
// plain equalities so no slack is pinched between coincident bounds.
BuildResult build_inner(const QpProblem& p, const Presolve& ps) {
  BuildResult b;
  Inner& in = b.inner;
  in.n = ps.n_free;
  in.c0 = p.constant;
  in.q.resize(in.n);
  in.c.resize(in.n);
  in.lb.resize(in.n);
  in.ub.resize(in.n);
  for (int f = 0; f < in.n; ++f) {
    int j = ps.orig_of[f];
    in.q[f] = p.quadratic_diag[j];
    in.c[f] = p.linear[j];
    in.lb[f] = ps.wlo[j];
    in.ub[f] = ps.whi[j];
  }
  for (int j = 0; j < p.num_vars; ++j) {
    if (ps.free_of[j] >= 0) continue;
    double v = ps.fix_val[j];
    in.c0 += 0.5 * p.quadratic_diag[j] * v * v + p.linear[j] * v;
  }

  int row = 0;
  std::vector<int> plain;  // rows without a slack column
  b.eq_row.assign(p.eq_rows.size(), -1);
  for (size_t r = 0; r < p.eq_rows.size(); ++r) {
    if (ps.eq_state[r] != 0) continue;
    double rhs = p.eq_rhs[r];
    std::vector<std::pair<int, double>> cols;
    for (size_t k = 0; k < p.eq_rows[r].idx.size(); ++k) {
      int j = p.eq_rows[r].idx[k];
      double a = p.eq_rows[r].coef[k];
      if (ps.free_of[j] >= 0) cols.emplace_back(ps.free_of[j], a);
      else rhs -= a * ps.fix_val[j];
    }
    if (cols.empty()) continue;  // presolve verified it
    b.eq_row[r] = row;
    for (auto& [cj, a] : cols) in.at.emplace_back(row, cj, a);
    in.b.push_back(rhs);
    plain.push_back(row);
    ++row;
  }
  b.n_eq = row;

  b.slack_row.assign(p.ineq_rows.size(), -1);
  for (size_t r = 0; r < p.ineq_rows.size(); ++r) {
    if (ps.ineq_state[r] != 0) continue;
    double lo = p.ineq_lower[r], hi = p.ineq_upper[r];
    std::vector<std::pair<int, double>> cols;
    for (size_t k = 0; k < p.ineq_rows[r].idx.size(); ++k) {
      int j = p.ineq_rows[r].idx[k];
      double a = p.ineq_rows[r].coef[k];
      if (ps.free_of[j] >= 0) cols.emplace_back(ps.free_of[j], a);
      else {
        double shift = a * ps.fix_val[j];
        if (std::isfinite(lo)) lo -= shift;
        if (std::isfinite(hi)) hi -= shift;
      }
    }
    if (cols.empty()) continue;
    b.slack_row[r] = row;
    for (auto& [cj, a] : cols) in.at.emplace_back(row, cj, a);
    if (std::isfinite(lo) && std::isfinite(hi) && hi - lo <= kFixEps) {
      in.b.push_back(0.5 * (lo + hi));
      plain.push_back(row);
    } else {
      int s = in.n;
      in.q.push_back(0.0);
      in.c.push_back(0.0);
      in.lb.push_back(lo);
      in.ub.push_back(hi);
      ++in.n;
      in.at.emplace_back(row, s, -1.0);
      in.b.push_back(0.0);
    }
    ++row;
  }
  in.m = row;
  b.n_ineq_slack = row - b.n_eq;

  // Fixings can leave the slack-free rows linearly dependent (a chain whose
  // interior variables all got pinned collapses onto its neighbours), and a
  // dependent equality block makes the KKT matrix singular along a dual
  // direction the interior-point method can never settle. Slack-bearing rows
  // each own a column nobody else touches, so elimination over the plain
  // rows alone finds every dependency: drop the redundant rows (their
  // multipliers validly move to the rows that span them), and flag a
  // contradictory one as infeasibility.
  if (plain.size() >= 2 && plain.size() <= 256 && in.n <= 4096) {
    const int k = (int)plain.size();
    std::vector<int> of_inner(in.m, -1);
    for (int r = 0; r < k; ++r) of_inner[plain[r]] = r;
    std::vector<std::vector<double>> M(k, std::vector<double>(in.n, 0.0));
    std::vector<double> rv(k), rsc(k);
    for (const auto& t : in.at) {
      int r = of_inner[t.row()];
      if (r >= 0) M[r][t.col()] += t.value();
    }
    for (int r = 0; r < k; ++r) {
      double s = 0.0;
      for (double v : M[r]) s = std::max(s, std::fabs(v));
      rsc[r] = s > 0.0 ? s : 1.0;
      for (double& v : M[r]) v /= rsc[r];
      rv[r] = in.b[plain[r]] / rsc[r];
    }
    std::vector<char> pivoted(k, 0);
    for (int col = 0; col < in.n; ++col) {
      int pr = -1;
      double pm = 1e-9;
      for (int r = 0; r < k; ++r)
        if (!pivoted[r] && std::fabs(M[r][col]) > pm) {
          pm = std::fabs(M[r][col]);
          pr = r;
        }
      if (pr < 0) continue;
      pivoted[pr] = 1;
      for (int r = 0; r < k; ++r) {
        if (pivoted[r] || M[r][col] == 0.0) continue;
        double f = M[r][col] / M[pr][col];
        for (int c2 = 0; c2 < in.n; ++c2) M[r][c2] -= f * M[pr][c2];
        M[r][col] = 0.0;
        rv[r] -= f * rv[pr];
      }
    }
    std::vector<char> drop(in.m, 0);
    int n_drop = 0;
    for (int r = 0; r < k; ++r) {
      if (pivoted[r]) continue;
      double mx = 0.0;
      for (double v : M[r]) mx = std::max(mx, std::fabs(v));
      if (mx > 1e-9) continue;  // not provably redundant; keep the row
      if (std::fabs(rv[r]) > 1e-7) {
        b.infeasible = true;
        b.violation = std::fabs(rv[r]) * rsc[r];
        return b;
      }
      drop[plain[r]] = 1;
      ++n_drop;
    }
    if (n_drop > 0) {
      std::vector<int> remap(in.m, -1);
      int nr = 0;
      for (int i = 0; i < in.m; ++i)
        if (!drop[i]) remap[i] = nr++;
      std::vector<Triplet> at2;
      at2.reserve(in.at.size());
      for (const auto& t : in.at)
        if (remap[t.row()] >= 0)
          at2.emplace_back(remap[t.row()], t.col(), t.value());
      in.at.swap(at2);
      std::vector<double> b2(nr);
      for (int i = 0; i < in.m; ++i)
        if (remap[i] >= 0) b2[remap[i]] = in.b[i];
      in.b.swap(b2);
      in.m = nr;
      int ne = 0;
      for (auto& e : b.eq_row)
        if (e >= 0 && (e = remap[e]) >= 0) ++ne;
      for (auto& e : b.slack_row)
        if (e >= 0) e = remap[e];
      b.n_eq = ne;
      b.n_ineq_slack = nr - ne;
      if (std::getenv("DR_QP_TRACE"))
        std::fprintf(stderr, "presolve: dropped %d dependent rows\n", n_drop);
    }
  }
  return b;
}

// Elastic feasibility: min sum(elastics) with every inner row relaxed.
double phase1_violation(const Inner& main, std::vector<double>* row_violation) {
  Inner ph;
  ph.n = main.n;
  ph.m = main.m;
  ph.q.assign(main.n, 0.0);
  ph.c.assign(main.n, 0.0);
  ph.lb = main.lb;
  ph.ub = main.ub;
  ph.b = main.b;
  ph.at = main.at;
  for (int i = 0; i < main.m; ++i) {
    int pj = ph.n;
    ph.q.push_back(0.0);
    ph.q.push_back(0.0);
    ph.c.push_back(1.0);
    ph.c.push_back(1.0);
    ph.lb.push_back(0.0);
    ph.lb.push_back(0.0);
    ph.ub.push_back(kInf);
    ph.ub.push_back(kInf);
    ph.at.emplace_back(i, pj, 1.0);
    ph.at.emplace_back(i, pj + 1, -1.0);
    ph.n += 2;
  }
  InnerResult r = ipm_solve(ph, 1e-10, 1e-11);
  double total = 0.0;
  row_violation->assign(main.m, 0.0);
  for (int i = 0; i < main.m; ++i) {
    double v = std::max(r.z[main.n + 2 * i], r.z[main.n + 2 * i + 1]);
    (*row_violation)[i] = v;
    total += r.z[main.n + 2 * i] + r.z[main.n + 2 * i + 1];
  }
  return total;
}

void validate(const QpProblem& p) {
  size_t n = (size_t)p.num_vars;
  if (p.quadratic_diag.size() != n || p.linear.size() != n ||
      p.lower.size() != n || p.upper.size() != n)
    throw std::invalid_argument("qp: inconsistent variable arrays");
  for (double q : p.quadratic_diag)
    if (!(q >= 0.0))
      throw std::invalid_argument("qp: quadratic not positive semidefinite");
  if (p.eq_rows.size() != p.eq_rhs.size() ||
      p.ineq_rows.size() != p.ineq_lower.size() ||
      p.ineq_rows.size() != p.ineq_upper.size())
    throw std::invalid_argument("qp: inconsistent constraint arrays");
  auto check_rows = [n](const std::vector<LinearRow>& rows) {
    for (const auto& r : rows) {
      if (r.idx.size() != r.coef.size())
        throw std::invalid_argument("qp: malformed row");
      for (int j : r.idx)
        if (j < 0 || (size_t)j >= n)
          throw std::invalid_argument("qp: row index out of range");
    }
  };
  check_rows(p.eq_rows);
  check_rows(p.ineq_rows);
  for (double v : p.eq_rhs)
    if (!std::isfinite(v)) throw std::invalid_argument("qp: non-finite rhs");
}

}  // namespace

KktReport verify_kkt(const QpProblem& p, const QpSolution& s) {
  KktReport rep;
  if (s.x.size() != (size_t)p.num_vars) {
    rep.stationarity = kInf;
    return rep;
  }
  const double y_zero = 1e-14;
  std::vector<double> grad(p.num_vars);
  for (int j = 0; j < p.num_vars; ++j)
    grad[j] = p.quadratic_diag[j] * s.x[j] + p.linear[j];
  for (size_t r = 0; r < p.eq_rows.size(); ++r) {
    double act = p.eq_rows[r].activity(s.x);
    rep.primal = std::max(rep.primal, std::fabs(act - p.eq_rhs[r]));
    for (size_t k = 0; k < p.eq_rows[r].idx.size(); ++k)
      grad[p.eq_rows[r].idx[k]] -= p.eq_rows[r].coef[k] * s.dual_eq[r];
  }
  for (size_t r = 0; r < p.ineq_rows.size(); ++r) {
    double act = p.ineq_rows[r].activity(s.x);
    double lo = p.ineq_lower[r], hi = p.ineq_upper[r];
    if (std::isfinite(lo)) rep.primal = std::max(rep.primal, lo - act);
    if (std::isfinite(hi)) rep.primal = std::max(rep.primal, act - hi);
    double yr = s.dual_ineq[r];
    for (size_t k = 0; k < p.ineq_rows[r].idx.size(); ++k)
      grad[p.ineq_rows[r].idx[k]] -= p.ineq_rows[r].coef[k] * yr;
    if (yr > y_zero) {
      if (std::isfinite(lo))
        rep.complementarity = std::max(rep.complementarity, yr * (act - lo));
      else
        rep.dual_sign = std::max(rep.dual_sign, yr);
    } else if (yr < -y_zero) {
      if (std::isfinite(hi))
        rep.complementarity = std::max(rep.complementarity, -yr * (hi - act));
      else
        rep.dual_sign = std::max(rep.dual_sign, -yr);
    }
  }
  for (int j = 0; j < p.num_vars; ++j) {
    double lo = p.lower[j], hi = p.upper[j];
    if (std::isfinite(lo)) rep.primal = std::max(rep.primal, lo - s.x[j]);
    if (std::isfinite(hi)) rep.primal = std::max(rep.primal, s.x[j] - hi);
    bool fixed = std::isfinite(lo) && std::isfinite(hi) && hi - lo <= kFixEps;
    if (fixed) continue;  // multiplier free when both bounds coincide
    double zlb = s.dual_lb[j], zub = s.dual_ub[j];
    rep.dual_sign = std::max(rep.dual_sign, std::max(-zlb, -zub));
    grad[j] -= zlb;
    grad[j] += zub;
    rep.stationarity = std::max(rep.stationarity, std::fabs(grad[j]));
    if (zlb > y_zero) {
      if (std::isfinite(lo))
        rep.complementarity = std::max(rep.complementarity, zlb * (s.x[j] - lo));
      else
        rep.dual_sign = std::max(rep.dual_sign, zlb);
    }
    if (zub > y_zero) {
      if (std::isfinite(hi))
        rep.complementarity = std::max(rep.complementarity, zub * (hi - s.x[j]));
      else
        rep.dual_sign = std::max(rep.dual_sign, zub);
    }
  }
  return rep;
}

QpSolution solve_qp(const QpProblem& p, double tol) {
  validate(p);
  QpSolution out;
  out.x.assign(p.num_vars, 0.0);
  out.dual_eq.assign(p.eq_rows.size(), 0.0);
  out.dual_ineq.assign(p.ineq_rows.size(), 0.0);
  out.dual_lb.assign(p.num_vars, 0.0);
  out.dual_ub.assign(p.num_vars, 0.0);

  Presolve ps = presolve_problem(p);
  if (ps.infeasible) {
    out.status = SolveStatus::infeasible;
    out.max_violation = ps.violation;
    return out;
  }
  BuildResult built = build_inner(p, ps);
  if (built.infeasible) {
    out.status = SolveStatus::infeasible;
    out.max_violation = built.violation;
    return out;
  }

  if (std::getenv("DR_QP_TRACE"))
    std::fprintf(stderr, "presolve: %d free of %d, inner %d vars %d rows\n",
                 ps.n_free, p.num_vars, built.inner.n, built.inner.m);
  double eps_feas = std::min(1e-9, 0.05 * tol);
  double eps_comp = 0.25 * tol;
  InnerResult ir = ipm_solve(built.inner, eps_feas, eps_comp);

  // summed coefficient of var j in a row (rows may repeat an index)
  auto coef_in = [](const LinearRow& row, int j) {
    double a = 0.0;
    for (size_t k = 0; k < row.idx.size(); ++k)
      if (row.idx[k] == j) a += row.coef[k];
    return a;
  };

  auto unpack = [&](const InnerResult& r) {
    std::fill(out.dual_lb.begin(), out.dual_lb.end(), 0.0);
    std::fill(out.dual_ub.begin(), out.dual_ub.end(), 0.0);
    for (int j = 0; j < p.num_vars; ++j) {
      int f = ps.free_of[j];
      double v = f >= 0 ? r.z[f] : ps.fix_val[j];
      if (std::isfinite(ps.wlo[j])) v = std::max(v, ps.wlo[j]);
      if (std::isfinite(ps.whi[j])) v = std::min(v, ps.whi[j]);
      out.x[j] = v;
    }
    for (size_t r2 = 0; r2 < p.eq_rows.size(); ++r2)
      out.dual_eq[r2] = built.eq_row[r2] >= 0 ? r.y[built.eq_row[r2]] : 0.0;
    for (size_t r2 = 0; r2 < p.ineq_rows.size(); ++r2)
      out.dual_ineq[r2] = built.slack_row[r2] >= 0 ? r.y[built.slack_row[r2]] : 0.0;

    // bound multipliers of surviving variables; a side that presolve
    // tightened belongs to the row that implied it, scaled by its coefficient
    for (int f = 0; f < ps.n_free; ++f) {
      int j = ps.orig_of[f];
      if (ps.lo_src[j] >= 0) {
        double a = coef_in(p.ineq_rows[ps.lo_src[j]], j);
        if (std::fabs(a) > 1e-12) out.dual_ineq[ps.lo_src[j]] += r.zl[f] / a;
      } else {
        out.dual_lb[j] = r.zl[f];
      }
      if (ps.hi_src[j] >= 0) {
        double a = coef_in(p.ineq_rows[ps.hi_src[j]], j);
        if (std::fabs(a) > 1e-12) out.dual_ineq[ps.hi_src[j]] -= r.zu[f] / a;
      } else {
        out.dual_ub[j] = r.zu[f];
      }
    }

    // stationarity residuals of the eliminated variables under current duals
    std::vector<double> resid(p.num_vars, 0.0);
    for (int j = 0; j < p.num_vars; ++j)
      if (ps.free_of[j] < 0)
        resid[j] = p.quadratic_diag[j] * out.x[j] + p.linear[j];
    auto absorb = [&](const LinearRow& row, double y) {
      if (y == 0.0) return;
      for (size_t k = 0; k < row.idx.size(); ++k)
        if (ps.free_of[row.idx[k]] < 0)
          resid[row.idx[k]] -= row.coef[k] * y;
    };
    for (size_t r2 = 0; r2 < p.eq_rows.size(); ++r2)
      absorb(p.eq_rows[r2], out.dual_eq[r2]);
    for (size_t r2 = 0; r2 < p.ineq_rows.size(); ++r2)
      absorb(p.ineq_rows[r2], out.dual_ineq[r2]);

    // a fixed variable's leftover lands on the row that implied its active
    // bound, or failing that on the bound multiplier itself
    auto settle = [&](int j, bool at_lo) {
      double rr = resid[j];
      int src = at_lo ? ps.lo_src[j] : ps.hi_src[j];
      if (src >= 0) {
        double a = coef_in(p.ineq_rows[src], j);
        if (std::fabs(a) > 1e-12) {
          out.dual_ineq[src] += rr / a;
          absorb(p.ineq_rows[src], rr / a);  // zeroes resid[j] on the way
          return;
        }
      }
      if (at_lo) out.dual_lb[j] += rr;
      else out.dual_ub[j] -= rr;
      resid[j] = 0.0;
    };

    // replay eliminations newest-first. Each event settles exactly the
    // variables it fixed, so its absorbs only disturb variables whose own
    // events are older — i.e. still ahead in this loop.
    for (auto it = ps.undo.rbegin(); it != ps.undo.rend(); ++it) {
      switch (it->kind) {
        case Presolve::Undo::Kind::eq_single: {
          const LinearRow& row = p.eq_rows[it->row];
          double a = coef_in(row, it->var);
          if (std::fabs(a) < 1e-12) break;
          double dy = resid[it->var] / a;
          out.dual_eq[it->row] += dy;
          absorb(row, dy);
          break;
        }
        case Presolve::Undo::Kind::forcing: {
          const LinearRow& row = p.ineq_rows[it->row];
          // the clamped extreme ratio keeps the row dual on the right side
          // and leaves every leftover with the sign its bound dual needs
          double dy = 0.0;
          bool first = true;
          for (int j : it->vars) {
            double a = coef_in(row, j);
            if (std::fabs(a) < 1e-12) continue;
            double ratio = resid[j] / a;
            if (first) dy = ratio;
            else dy = it->at_upper ? std::min(dy, ratio) : std::max(dy, ratio);
            first = false;
          }
          dy = it->at_upper ? std::min(0.0, dy) : std::max(0.0, dy);
          out.dual_ineq[it->row] += dy;
          absorb(row, dy);
          for (int j : it->vars)
            settle(j, ps.fix[j] == Presolve::Fix::forced_lo);
          break;
        }
        case Presolve::Undo::Kind::collapse:
          settle(it->var, resid[it->var] >= 0.0);
          break;
      }
    }
    out.objective = p.objective_at(out.x);
    out.iterations = r.iterations;
  };

  // accept whenever the independent verification passes, converged or not
  bool retried = false;
  for (;;) {
    unpack(ir);
    KktReport rep = verify_kkt(p, out);
    out.kkt_residual = rep.max_residual();
    if (std::getenv("DR_QP_TRACE")) {
      std::fprintf(stderr,
                   "verify: stat=%.3e primal=%.3e sign=%.3e comp=%.3e\n",
                   rep.stationarity, rep.primal, rep.dual_sign,
                   rep.complementarity);
      std::vector<double> g(p.num_vars);
      for (int j = 0; j < p.num_vars; ++j)
        g[j] = p.quadratic_diag[j] * out.x[j] + p.linear[j] - out.dual_lb[j] +
               out.dual_ub[j];
      for (size_t r = 0; r < p.eq_rows.size(); ++r)
        for (size_t k = 0; k < p.eq_rows[r].idx.size(); ++k)
          g[p.eq_rows[r].idx[k]] -= p.eq_rows[r].coef[k] * out.dual_eq[r];
      for (size_t r = 0; r < p.ineq_rows.size(); ++r)
        for (size_t k = 0; k < p.ineq_rows[r].idx.size(); ++k)
          g[p.ineq_rows[r].idx[k]] -= p.ineq_rows[r].coef[k] * out.dual_ineq[r];
      for (int j = 0; j < p.num_vars; ++j) {
        bool fixed = std::isfinite(p.lower[j]) && std::isfinite(p.upper[j]) &&
                     p.upper[j] - p.lower[j] <= kFixEps;
        if (!fixed && std::fabs(g[j]) > 1e-6)
          std::fprintf(stderr,
                       "  stat[%d]=%.3e fix=%d lo_src=%d hi_src=%d x=%.6g "
                       "bounds=[%.6g,%.6g]\n",
                       j, g[j], (int)ps.fix[j], ps.lo_src[j], ps.hi_src[j],
                       out.x[j], p.lower[j], p.upper[j]);
      }
    }
    if (out.kkt_residual <= tol) {
      out.status = SolveStatus::optimal;
      return out;
    }
    if (retried || !ir.converged) break;  // non-convergence: likely infeasible
    retried = true;
    ir = ipm_solve(built.inner, eps_feas * 0.01, eps_comp * 0.01);
  }

  // certify feasibility or report the best-attempt violation
  std::vector<double> row_vio;
  double total_vio = phase1_violation(built.inner, &row_vio);
  double feas_tol = 1e-8 * (1.0 + inf_norm(built.inner.b));
  if (total_vio > feas_tol) {
    out.status = SolveStatus::infeasible;
    out.max_violation = 0.0;
    for (double v : row_vio) out.max_violation = std::max(out.max_violation, v);
    return out;
  }
  if (const char* path = std::getenv("DR_QP_DUMP")) dump_failed(p, path);
  throw std::runtime_error("qp: interior point failed on a feasible problem");
}

}  // namespace dr
