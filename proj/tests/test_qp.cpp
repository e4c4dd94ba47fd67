#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>

#include "dr/miqp.hpp"
#include "dr/qp.hpp"

using namespace dr;

namespace {

// independent 1-D oracle: coarse grid then ternary refinement
double grid_min_1d(double lo, double hi, const std::function<double(double)>& f,
                   double* argmin) {
  int N = 100000;
  double best = kInf, bx = lo;
  for (int i = 0; i <= N; ++i) {
    double x = lo + (hi - lo) * i / N;
    double v = f(x);
    if (v < best) {
      best = v;
      bx = x;
    }
  }
  double a = std::max(lo, bx - (hi - lo) / N), b = std::min(hi, bx + (hi - lo) / N);
  for (int it = 0; it < 200; ++it) {
    double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
    if (f(m1) < f(m2)) b = m2;
    else a = m1;
  }
  *argmin = 0.5 * (a + b);
  return f(*argmin);
}

// test-side KKT check, written against the solver's documented convention
double kkt_residual_check(const QpProblem& p, const QpSolution& s) {
  double worst = 0.0;
  std::vector<double> g(p.num_vars);
  for (int j = 0; j < p.num_vars; ++j)
    g[j] = p.quadratic_diag[j] * s.x[j] + p.linear[j];
  for (size_t r = 0; r < p.eq_rows.size(); ++r) {
    worst = std::max(worst, std::fabs(p.eq_rows[r].activity(s.x) - p.eq_rhs[r]));
    for (size_t k = 0; k < p.eq_rows[r].idx.size(); ++k)
      g[p.eq_rows[r].idx[k]] -= p.eq_rows[r].coef[k] * s.dual_eq[r];
  }
  for (size_t r = 0; r < p.ineq_rows.size(); ++r) {
    double act = p.ineq_rows[r].activity(s.x);
    double lo = p.ineq_lower[r], hi = p.ineq_upper[r], y = s.dual_ineq[r];
    if (std::isfinite(lo)) worst = std::max(worst, lo - act);
    if (std::isfinite(hi)) worst = std::max(worst, act - hi);
    for (size_t k = 0; k < p.ineq_rows[r].idx.size(); ++k)
      g[p.ineq_rows[r].idx[k]] -= p.ineq_rows[r].coef[k] * y;
    if (y > 0) worst = std::max(worst, std::isfinite(lo) ? y * (act - lo) : y);
    if (y < 0) worst = std::max(worst, std::isfinite(hi) ? -y * (hi - act) : -y);
  }
  for (int j = 0; j < p.num_vars; ++j) {
    double lo = p.lower[j], hi = p.upper[j];
    if (std::isfinite(lo)) worst = std::max(worst, lo - s.x[j]);
    if (std::isfinite(hi)) worst = std::max(worst, s.x[j] - hi);
    if (std::isfinite(lo) && std::isfinite(hi) && hi - lo < 1e-12) continue;
    double zl = s.dual_lb[j], zu = s.dual_ub[j];
    worst = std::max(worst, std::max(-zl, -zu));
    worst = std::max(worst, std::fabs(g[j] - zl + zu));
    if (zl > 0)
      worst = std::max(worst, std::isfinite(lo) ? zl * (s.x[j] - lo) : zl);
    if (zu > 0)
      worst = std::max(worst, std::isfinite(hi) ? zu * (hi - s.x[j]) : zu);
  }
  return worst;
}

}  // namespace

TEST_CASE("monotone objective on a box") {
  QpProblem p;
  p.add_var(1.0, 2.0, 2.0, 0.0);  // x^2
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.kkt_residual <= 1e-8);
}

TEST_CASE("interior vertex clipped by the box") {
  // (x-1.5)^2 = x^2 - 3x + 2.25 over [0,1]
  QpProblem p;
  p.add_var(0.0, 1.0, 2.0, -3.0);
  p.constant = 2.25;
  double ax = 0.0;
  double oracle = grid_min_1d(0.0, 1.0, [](double x) {
    return (x - 1.5) * (x - 1.5);
  }, &ax);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(oracle).epsilon(1e-6));
  CHECK(s.objective == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(s.x[0] == doctest::Approx(ax).epsilon(1e-5));
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("symmetric equality-constrained pair") {
  QpProblem p;
  p.add_var(-kInf, kInf, 2.0, 0.0);
  p.add_var(-kInf, kInf, 2.0, 0.0);
  LinearRow r;
  r.add(0, 1.0);
  r.add(1, 1.0);
  p.add_eq(r, 2.0);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(s.x[1] == doctest::Approx(1.0).epsilon(1e-7));
  // stationarity: 2x = y  =>  y = 2
  CHECK(s.dual_eq[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(kkt_residual_check(p, s) <= 1e-8);
}

TEST_CASE("two-sided inequality row") {
  QpProblem p;
  int x = p.add_var(-kInf, kInf, 2.0, -4.0);  // (x-2)^2 - 4 + const
  p.constant = 4.0;
  int y = p.add_var(0.0, 0.2, 0.0, 0.0);
  LinearRow r;
  r.add(x, 1.0);
  r.add(y, 1.0);
  p.add_ineq(r, 0.0, 1.0);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.x[x] == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(kkt_residual_check(p, s) <= 1e-8);
}

TEST_CASE("infeasible bounds vs equality") {
  QpProblem p;
  p.add_var(0.0, 0.5, 2.0, 0.0);
  p.add_var(0.0, 0.5, 2.0, 0.0);
  LinearRow r;
  r.add(0, 1.0);
  r.add(1, 1.0);
  p.add_eq(r, 2.0);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::infeasible);
  CHECK(s.max_violation >= 0.9);  // best attempt still misses by ~1
}

TEST_CASE("crossed bounds short-circuit") {
  QpProblem p;
  p.add_var(1.0, 0.0, 2.0, 0.0);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::infeasible);
  CHECK(s.max_violation >= 0.99);
}

TEST_CASE("fixed variables substituted exactly") {
  QpProblem p;
  int x = p.add_var(1.0, 1.0, 2.0, 0.0);
  int y = p.add_var(0.0, 10.0, 2.0, -2.0);
  LinearRow r;
  r.add(x, 1.0);
  r.add(y, 1.0);
  p.add_ineq(r, -kInf, 1.5);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.x[x] == 1.0);
  CHECK(s.x[y] == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(kkt_residual_check(p, s) <= 1e-8);
}

TEST_CASE("redundant duplicate equality rows") {
  QpProblem p;
  p.add_var(-kInf, kInf, 2.0, 0.0);
  p.add_var(-kInf, kInf, 2.0, 0.0);
  for (int k = 0; k < 2; ++k) {
    LinearRow r;
    r.add(0, 1.0);
    r.add(1, 1.0);
    p.add_eq(r, 2.0);
  }
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("non-PSD quadratic rejected") {
  QpProblem p;
  p.add_var(0.0, 1.0, -1.0, 0.0);
  CHECK_THROWS_AS(solve_qp(p), std::invalid_argument);
}

TEST_CASE("empty problem returns the constant") {
  QpProblem p;
  p.constant = 3.5;
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == 3.5);
}

TEST_CASE("singleton row pinches a variable against its bound") {
  // (x-1)^2 over [0,1], plus a row x <= 0: the feasible set is the point 0
  // and the pull toward 1 has to show up as a row or bound multiplier
  QpProblem p;
  int x = p.add_var(0.0, 1.0, 2.0, -2.0);
  p.constant = 1.0;
  LinearRow r;
  r.add(x, 1.0);
  p.add_ineq(r, -kInf, 0.0);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.x[x] == doctest::Approx(0.0));
  CHECK(s.objective == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(kkt_residual_check(p, s) <= 1e-8);
}

TEST_CASE("row cap reachable only at a vertex fixes every variable") {
  SUBCASE("same-sign row against the objective pull") {
    // x+y <= 0 with x,y in [0,1]: activity spans [0,2], cap met only at (0,0)
    QpProblem p;
    int x = p.add_var(0.0, 1.0, 2.0, -2.0);
    int y = p.add_var(0.0, 1.0, 2.0, -2.0);
    LinearRow r;
    r.add(x, 1.0);
    r.add(y, 1.0);
    p.add_ineq(r, -kInf, 0.0);
    QpSolution s = solve_qp(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.x[x] == doctest::Approx(0.0));
    CHECK(s.x[y] == doctest::Approx(0.0));
    CHECK(kkt_residual_check(p, s) <= 1e-8);
  }
  SUBCASE("mixed signs, floor met only at opposite corners") {
    // x-y >= 1 with x,y in [0,1] forces x=1, y=0
    QpProblem p;
    int x = p.add_var(0.0, 1.0, 2.0, 0.0);
    int y = p.add_var(0.0, 1.0, 2.0, -2.0);
    LinearRow r;
    r.add(x, 1.0);
    r.add(y, -1.0);
    p.add_ineq(r, 1.0, kInf);
    QpSolution s = solve_qp(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(s.x[x] == doctest::Approx(1.0));
    CHECK(s.x[y] == doctest::Approx(0.0));
    CHECK(kkt_residual_check(p, s) <= 1e-8);
  }
}

TEST_CASE("equality singletons cascade through a chain") {
  QpProblem p;
  int a = p.add_var(-kInf, kInf, 2.0, 0.0);
  int b = p.add_var(-kInf, kInf, 2.0, 0.0);
  int c = p.add_var(-kInf, kInf, 2.0, 0.0);
  LinearRow r0;
  r0.add(a, 1.0);
  p.add_eq(r0, 1.0);
  LinearRow r1;
  r1.add(a, 1.0);
  r1.add(b, 1.0);
  p.add_eq(r1, 3.0);
  LinearRow r2;
  r2.add(b, 1.0);
  r2.add(c, 1.0);
  p.add_eq(r2, 5.0);
  QpSolution s = solve_qp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.x[a] == doctest::Approx(1.0));
  CHECK(s.x[b] == doctest::Approx(2.0));
  CHECK(s.x[c] == doctest::Approx(3.0));
  // chain peels back to front: y2 = 6, then y1 = 4-6, then y0 = 2-(-2)
  CHECK(s.dual_eq[2] == doctest::Approx(6.0));
  CHECK(s.dual_eq[1] == doctest::Approx(-2.0));
  CHECK(s.dual_eq[0] == doctest::Approx(4.0));
  CHECK(kkt_residual_check(p, s) <= 1e-8);
}

TEST_CASE("bound-vs-row contradictions are certified without a solve") {
  SUBCASE("singleton row crosses the box") {
    QpProblem p;
    int x = p.add_var(0.0, 1.0, 2.0, 0.0);
    LinearRow r;
    r.add(x, 1.0);
    p.add_ineq(r, -kInf, -1.0);
    QpSolution s = solve_qp(p);
    REQUIRE(s.status == SolveStatus::infeasible);
    CHECK(s.max_violation >= 0.9);
  }
  SUBCASE("row unreachable from the box") {
    QpProblem p;
    int x = p.add_var(0.0, 1.0, 2.0, 0.0);
    int y = p.add_var(0.0, 1.0, 2.0, 0.0);
    LinearRow r;
    r.add(x, 1.0);
    r.add(y, 1.0);
    p.add_ineq(r, -kInf, -1.0);
    QpSolution s = solve_qp(p);
    REQUIRE(s.status == SolveStatus::infeasible);
    CHECK(s.max_violation >= 0.9);
  }
  SUBCASE("two equality singletons disagree") {
    QpProblem p;
    int x = p.add_var(-kInf, kInf, 2.0, 0.0);
    for (double rhs : {1.0, 2.0}) {
      LinearRow r;
      r.add(x, 1.0);
      p.add_eq(r, rhs);
    }
    QpSolution s = solve_qp(p);
    REQUIRE(s.status == SolveStatus::infeasible);
    CHECK(s.max_violation >= 0.9);
  }
}

TEST_CASE("ill-conditioned scheduling node solves to certificate accuracy") {
  // captured relaxation whose central path stalls just short of tolerance;
  // the solver has to finish it off from the best interior iterate
  std::ifstream is(DR_TEST_DATA_DIR "/hard_node.qp");
  REQUIRE(is.good());
  MiqpProblem mp = load_problem(is);
  REQUIRE(mp.base.num_vars == 90);
  QpSolution s = solve_qp(mp.base);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(2.3590551712).epsilon(1e-7));
  CHECK(kkt_residual_check(mp.base, s) <= 1e-8);
}

TEST_CASE("deep elimination cascade recovers exact multipliers") {
  // captured node where branching collapses a chain of indicators; the dual
  // postsolve has to settle collapse, forcing and singleton events in strict
  // reverse order or the certificate falls apart
  std::ifstream is(DR_TEST_DATA_DIR "/collapse_node.qp");
  REQUIRE(is.good());
  MiqpProblem mp = load_problem(is);
  REQUIRE(mp.base.num_vars == 41);
  QpSolution s = solve_qp(mp.base);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(7.29246325612).epsilon(1e-7));
  CHECK(kkt_residual_check(mp.base, s) <= 1e-8);
}

TEST_CASE("random feasible problems pass independent KKT check") {
  std::mt19937_64 rng(7);
  auto U = [&](double a, double b) {
    return a + (b - a) * std::uniform_real_distribution<double>(0, 1)(rng);
  };
  for (int trial = 0; trial < 120; ++trial) {
    int n = 2 + (int)(U(0, 1) * 10);
    QpProblem p;
    std::vector<double> x0(n);
    for (int j = 0; j < n; ++j) {
      double lo = U(-3, 0), hi = lo + U(0.5, 4);
      double q = U(0, 1) < 0.25 ? 0.0 : U(0.1, 4);
      if (q > 0) {  // one-sided boxes only where the objective is coercive
        int style = (int)(U(0, 3));
        if (style == 1) hi = kInf;
        if (style == 2) lo = -kInf;
      }
      p.add_var(lo, hi, q, U(-2, 2));
      double flo = std::isfinite(lo) ? lo : -3, fhi = std::isfinite(hi) ? hi : 3;
      x0[j] = U(flo, fhi);
    }
    int m_eq = (int)(U(0, 1) * std::min(3, n - 1));
    for (int r = 0; r < m_eq; ++r) {
      LinearRow row;
      for (int j = 0; j < n; ++j)
        if (U(0, 1) < 0.6) row.add(j, U(-2, 2));
      if (row.idx.empty()) row.add(r % n, 1.0);
      p.add_eq(row, row.activity(x0));  // feasible by construction
    }
    int m_in = (int)(U(0, 1) * 4);
    for (int r = 0; r < m_in; ++r) {
      LinearRow row;
      for (int j = 0; j < n; ++j)
        if (U(0, 1) < 0.5) row.add(j, U(-2, 2));
      if (row.idx.empty()) row.add((r + 1) % n, 1.0);
      double act = row.activity(x0);
      double lo = act - U(0, 2), hi = act + U(0, 2);
      int style = (int)(U(0, 3));
      if (style == 1) hi = kInf;
      if (style == 2) lo = -kInf;
      p.add_ineq(row, lo, hi);
    }
    QpSolution s = solve_qp(p);
    REQUIRE(s.status == SolveStatus::optimal);
    CHECK(kkt_residual_check(p, s) <= 1e-8);
    CHECK(s.kkt_residual <= 1e-8);
  }
}

TEST_CASE("random infeasible problems are certified") {
  std::mt19937_64 rng(11);
  auto U = [&](double a, double b) {
    return a + (b - a) * std::uniform_real_distribution<double>(0, 1)(rng);
  };
  for (int trial = 0; trial < 40; ++trial) {
    int n = 2 + (int)(U(0, 1) * 6);
    QpProblem p;
    for (int j = 0; j < n; ++j) p.add_var(0.0, 1.0, U(0, 2), U(-1, 1));
    LinearRow row;
    for (int j = 0; j < n; ++j) row.add(j, 1.0);
    double excess = U(0.5, 3.0);
    p.add_eq(row, n + excess);  // beyond the reachable sum
    QpSolution s = solve_qp(p);
    REQUIRE(s.status == SolveStatus::infeasible);
    CHECK(s.max_violation >= 0.5 * excess);
  }
}
