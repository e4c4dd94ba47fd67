#pragma once

#include <limits>
#include <string>
#include <vector>

namespace dr {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Sparse constraint row: sum_k coef[k] * x[idx[k]].
struct LinearRow {
  std::vector<int> idx;
  std::vector<double> coef;

  void add(int j, double a) {
    idx.push_back(j);
    coef.push_back(a);
  }
  double activity(const std::vector<double>& x) const {
    double s = 0.0;
    for (size_t k = 0; k < idx.size(); ++k) s += coef[k] * x[idx[k]];
    return s;
  }
};

// min 1/2 sum_j quadratic_diag[j]*x_j^2 + linear.x + constant
// s.t. eq_rows[r].x == eq_rhs[r]
//      ineq_lower[r] <= ineq_rows[r].x <= ineq_upper[r]   (either side may be inf)
//      lower <= x <= upper
// quadratic_diag must be >= 0 (convex); violations are rejected.
struct QpProblem {
  int num_vars = 0;
  std::vector<double> quadratic_diag;
  std::vector<double> linear;
  double constant = 0.0;
  std::vector<LinearRow> eq_rows;
  std::vector<double> eq_rhs;
  std::vector<LinearRow> ineq_rows;
  std::vector<double> ineq_lower, ineq_upper;
  std::vector<double> lower, upper;

  int add_var(double lb, double ub, double q = 0.0, double c = 0.0) {
    quadratic_diag.push_back(q);
    linear.push_back(c);
    lower.push_back(lb);
    upper.push_back(ub);
    return num_vars++;
  }
  void add_eq(LinearRow row, double rhs) {
    eq_rows.push_back(std::move(row));
    eq_rhs.push_back(rhs);
  }
  void add_ineq(LinearRow row, double lo, double hi) {
    ineq_rows.push_back(std::move(row));
    ineq_lower.push_back(lo);
    ineq_upper.push_back(hi);
  }
  double objective_at(const std::vector<double>& x) const {
    double s = constant;
    for (int j = 0; j < num_vars; ++j)
      s += 0.5 * quadratic_diag[j] * x[j] * x[j] + linear[j] * x[j];
    return s;
  }
};

enum class SolveStatus { optimal, infeasible, node_limit, time_limit };

std::string to_string(SolveStatus s);

struct QpSolution {
  SolveStatus status = SolveStatus::infeasible;
  double objective = kInf;
  std::vector<double> x;
  // Multipliers, sign convention: stationarity reads
  //   Qx + c - A_eq'y_eq - A_in'y_in - z_lb + z_ub = 0,  z_lb, z_ub >= 0.
  std::vector<double> dual_eq, dual_ineq, dual_lb, dual_ub;
  double kkt_residual = kInf;
  double max_violation = 0.0;  // infeasible: max violation of best attempt
  int iterations = 0;
};

struct KktReport {
  double stationarity = 0.0;
  double primal = 0.0;        // eq/ineq/bound violation
  double dual_sign = 0.0;     // negative parts of z_lb/z_ub, wrong-sided y_in
  double complementarity = 0.0;
  double max_residual() const;
};

// Primal-dual interior point with Mehrotra correction; terminal iterates are
// re-verified so that status == optimal implies verify_kkt <= tol. Infeasible
// inputs get an elastic phase-1 certificate (max_violation). Unbounded or
// numerically hopeless inputs throw std::runtime_error.
QpSolution solve_qp(const QpProblem& p, double tol = 1e-8);

KktReport verify_kkt(const QpProblem& p, const QpSolution& s);

}  // namespace dr
