#pragma once

#include <iosfwd>

#include "dr/qp.hpp"

namespace dr {

// Convex QP plus binary declarations: every var in integer_vars must have
// bounds inside [0,1] and take an integer value at a solution.
struct MiqpProblem {
  QpProblem base;
  std::vector<int> integer_vars;
};

struct MiqpOptions {
  double mip_gap_tol = 1e-6;     // relative: (incumbent-bound)/max(1,|incumbent|)
  double integrality_tol = 1e-6;
  long node_limit = 2000000;
  double time_limit_sec = kInf;
  double qp_tol = 1e-8;
  bool rounding_probe = true;    // fix-and-solve probe for early incumbents
};

struct MiqpSolution {
  SolveStatus status = SolveStatus::infeasible;
  double objective = kInf;       // incumbent value (inf if none found)
  std::vector<double> x;
  double bound = -kInf;          // proven lower bound
  double gap = kInf;
  long nodes = 0;
  double max_violation = 0.0;    // infeasible: from the root relaxation
  std::vector<double> incumbents;  // objective after each improvement
};

// Best-bound-first branch and bound; node relaxations via solve_qp, branching
// on the most fractional binary (ties: lowest index), deterministic node
// ordering. Integral relaxations are re-solved with binaries fixed so the
// incumbent is exactly integral.
MiqpSolution solve_miqp(const MiqpProblem& p, const MiqpOptions& opts = {});

// Exhaustive reference: enumerates every assignment of the (<= 20) binaries
// and solves the continuous QP for each. Used by tests as the ground truth.
MiqpSolution enumerate_oracle(const MiqpProblem& p, double qp_tol = 1e-8);

// Debug dump/load, plain text, round-trips exactly (17 significant digits).
// Format is incidental and carries no stability promise.
void dump_problem(const MiqpProblem& p, std::ostream& os);
MiqpProblem load_problem(std::istream& is);

}  // namespace dr
