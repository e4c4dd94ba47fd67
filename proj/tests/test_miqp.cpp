#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dr/miqp.hpp"

using namespace dr;

namespace {

// circular on/off toy: three slots, prices {1,3,2}, two slots of energy,
// minimum run of two slots. u are the on flags, v the startup flags.
MiqpProblem on_run_toy() {
  MiqpProblem p;
  QpProblem& b = p.base;
  double price[3] = {1.0, 3.0, 2.0};
  for (int t = 0; t < 3; ++t) b.add_var(0.0, 1.0, 0.0, price[t]);  // u
  for (int t = 0; t < 3; ++t) b.add_var(0.0, 1.0, 0.0, 0.0);       // v
  LinearRow energy;
  for (int t = 0; t < 3; ++t) energy.add(t, 1.0);
  b.add_eq(energy, 2.0);
  for (int t = 0; t < 3; ++t) {
    LinearRow start;  // v_t >= u_t - u_{t-1}
    start.add(3 + t, 1.0);
    start.add(t, -1.0);
    start.add((t + 2) % 3, 1.0);
    b.add_ineq(start, 0.0, kInf);
    LinearRow run;  // v_{t-1} + v_t <= u_t
    run.add(3 + (t + 2) % 3, 1.0);
    run.add(3 + t, 1.0);
    run.add(t, -1.0);
    b.add_ineq(run, -kInf, 0.0);
  }
  p.integer_vars = {0, 1, 2};
  return p;
}

struct RandomMiqp {
  MiqpProblem p;
  bool built_feasible;
};

RandomMiqp random_miqp(std::mt19937_64& rng, int max_bin, bool force_infeasible) {
  auto U = [&](double a, double b) {
    return a + (b - a) * std::uniform_real_distribution<double>(0, 1)(rng);
  };
  int nb = 1 + (int)(U(0, 1) * max_bin);
  if (nb > max_bin) nb = max_bin;
  int nc = (int)(U(0, 1) * 4);
  RandomMiqp out;
  QpProblem& b = out.p.base;
  std::vector<double> x0;
  for (int j = 0; j < nb; ++j) {
    b.add_var(0.0, 1.0, U(0, 1) < 0.3 ? 0.0 : U(0.2, 3), U(-2, 2));
    out.p.integer_vars.push_back(j);
    x0.push_back(U(0, 1) < 0.5 ? 0.0 : 1.0);
  }
  for (int j = 0; j < nc; ++j) {
    double lo = U(-2, 0), hi = lo + U(0.5, 3);
    b.add_var(lo, hi, U(0.1, 3), U(-2, 2));
    x0.push_back(U(lo, hi));
  }
  int n = nb + nc;
  int rows = (int)(U(0, 1) * 4);
  for (int r = 0; r < rows; ++r) {
    LinearRow row;
    for (int j = 0; j < n; ++j)
      if (U(0, 1) < 0.5) row.add(j, U(-2, 2));
    if (row.idx.empty()) row.add(r % n, 1.0);
    double act = row.activity(x0);
    if (U(0, 1) < 0.3) b.add_eq(row, act);
    else {
      double lo = act - U(0, 1.5), hi = act + U(0, 1.5);
      b.add_ineq(row, lo, hi);
    }
  }
  out.built_feasible = !force_infeasible;
  if (force_infeasible) {
    LinearRow all;
    for (int j = 0; j < nb; ++j) all.add(j, 1.0);
    b.add_eq(all, nb + U(0.5, 2.0));  // beyond any 0/1 assignment
  }
  return out;
}

}  // namespace

TEST_CASE("single binary picks the nearer point") {
  // (x - 0.4)^2 over {0,1}
  MiqpProblem p;
  p.base.add_var(0.0, 1.0, 2.0, -0.8);
  p.base.constant = 0.16;
  p.integer_vars = {0};
  MiqpSolution oracle = enumerate_oracle(p);
  REQUIRE(oracle.status == SolveStatus::optimal);
  CHECK(oracle.objective == doctest::Approx(0.16).epsilon(1e-12));
  CHECK(oracle.x[0] == doctest::Approx(0.0).epsilon(1e-9));
  MiqpSolution s = solve_miqp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(0.16).epsilon(1e-9));
  CHECK(s.x[0] == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(s.bound <= s.objective + 1e-9);
  CHECK(s.gap <= 1e-6);
}

TEST_CASE("all binaries pinned reduces to the continuous solve") {
  MiqpProblem p;
  p.base.add_var(1.0, 1.0, 2.0, 0.0);
  p.base.add_var(0.0, 0.0, 2.0, 1.0);
  int w = p.base.add_var(-5.0, 5.0, 2.0, -2.0);
  p.integer_vars = {0, 1};
  LinearRow r;
  r.add(0, 1.0);
  r.add(w, 1.0);
  p.base.add_ineq(r, -kInf, 1.4);
  MiqpSolution s = solve_miqp(p);
  QpSolution q = solve_qp(p.base);
  REQUIRE(s.status == SolveStatus::optimal);
  REQUIRE(q.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(q.objective).epsilon(1e-10));
  CHECK(s.x[w] == doctest::Approx(q.x[w]).epsilon(1e-8));
  MiqpSolution oracle = enumerate_oracle(p);
  CHECK(oracle.objective == doctest::Approx(q.objective).epsilon(1e-10));
}

TEST_CASE("wrapped on-run toy schedules the cheap pair") {
  MiqpProblem p = on_run_toy();
  MiqpSolution oracle = enumerate_oracle(p);
  REQUIRE(oracle.status == SolveStatus::optimal);
  CHECK(oracle.objective == doctest::Approx(3.0).epsilon(1e-9));
  MiqpSolution s = solve_miqp(p);
  REQUIRE(s.status == SolveStatus::optimal);
  CHECK(s.objective == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(s.x[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.x[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(s.x[2] == doctest::Approx(1.0).epsilon(1e-6));
  // startup flag forced only where the run begins
  CHECK(s.x[5] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s.x[3] + s.x[4] <= 1e-6);
  // root relaxation is a lower bound
  QpProblem relax = p.base;
  QpSolution root = solve_qp(relax);
  REQUIRE(root.status == SolveStatus::optimal);
  CHECK(root.objective <= s.objective + 1e-9);
}

TEST_CASE("branch and bound matches enumeration") {
  std::mt19937_64 rng(21);
  int infeasible_seen = 0;
  for (int trial = 0; trial < 50; ++trial) {
    int max_bin = trial < 44 ? 8 : 12;
    RandomMiqp rm = random_miqp(rng, max_bin, trial % 9 == 8);
    MiqpSolution oracle = enumerate_oracle(rm.p);
    MiqpSolution s = solve_miqp(rm.p);
    REQUIRE(s.status == oracle.status);
    if (oracle.status == SolveStatus::optimal) {
      double scale = std::max(1.0, std::fabs(oracle.objective));
      CHECK(std::fabs(s.objective - oracle.objective) <= 1e-6 * scale);
      CHECK(s.bound <= s.objective + 1e-7 * scale);
      CHECK(s.gap <= 1e-5);
      for (size_t k = 1; k < s.incumbents.size(); ++k)
        CHECK(s.incumbents[k] < s.incumbents[k - 1]);
      // every declared binary lands on an integer point
      for (int j : rm.p.integer_vars)
        CHECK(std::fabs(s.x[j] - std::round(s.x[j])) <= 1e-6);
    } else {
      ++infeasible_seen;
    }
  }
  CHECK(infeasible_seen >= 4);
}

TEST_CASE("integer infeasibility with a feasible relaxation") {
  MiqpProblem p;
  p.base.add_var(0.0, 1.0, 2.0, 0.0);
  p.base.add_var(0.0, 1.0, 2.0, 0.0);
  p.integer_vars = {0, 1};
  LinearRow r;
  r.add(0, 1.0);
  r.add(1, 1.0);
  p.base.add_eq(r, 0.5);  // no 0/1 pair sums to one half
  QpSolution root = solve_qp(p.base);
  REQUIRE(root.status == SolveStatus::optimal);  // relaxation is fine
  MiqpSolution oracle = enumerate_oracle(p);
  CHECK(oracle.status == SolveStatus::infeasible);
  MiqpSolution s = solve_miqp(p);
  CHECK(s.status == SolveStatus::infeasible);
}

TEST_CASE("node limit reports a partial run") {
  MiqpProblem p = on_run_toy();
  MiqpOptions opts;
  opts.node_limit = 1;
  opts.rounding_probe = false;
  MiqpSolution s = solve_miqp(p, opts);
  MiqpSolution oracle = enumerate_oracle(p);
  if (s.status == SolveStatus::node_limit) {
    CHECK(s.bound <= oracle.objective + 1e-9);
  } else {
    // root relaxation may already be integral on this toy
    CHECK(s.status == SolveStatus::optimal);
    CHECK(s.objective == doctest::Approx(oracle.objective).epsilon(1e-9));
  }
}

TEST_CASE("problem dump round-trips") {
  MiqpProblem p = on_run_toy();
  std::stringstream ss;
  dump_problem(p, ss);
  MiqpProblem q = load_problem(ss);
  REQUIRE(q.base.num_vars == p.base.num_vars);
  REQUIRE(q.integer_vars == p.integer_vars);
  MiqpSolution a = solve_miqp(p);
  MiqpSolution b = solve_miqp(q);
  CHECK(a.objective == b.objective);
  CHECK(a.nodes == b.nodes);
}

TEST_CASE("non-binary integer declarations rejected") {
  MiqpProblem p;
  p.base.add_var(0.0, 2.0, 2.0, 0.0);
  p.integer_vars = {0};
  CHECK_THROWS_AS(solve_miqp(p), std::invalid_argument);
  MiqpProblem q;
  q.base.add_var(0.0, 1.0, 2.0, 0.0);
  q.integer_vars = {1};
  CHECK_THROWS_AS(solve_miqp(q), std::invalid_argument);
}
