#pragma once

#include "dr/subproblem.hpp"

namespace dr {

// Every household's scheduling constraints plus grid purchase variables and
// the per-slot coupling sum_i x_i^t = x_g^t, as one MIQP.
struct CentralProblem {
  std::vector<HouseholdModel> models;
  MiqpProblem miqp;
  std::vector<int> offset;    // first variable of each household
  std::vector<int> grid_var;  // x_g, one per slot
};

CentralProblem assemble_central(const Scenario& sc);

// Benchmark solve. Scale guidance: proven optimality is realistic up to
// roughly 80 declared binaries; beyond that expect a gap-limited result
// (status suboptimal with the achieved bound) under the node/time budget.
MiqpSolution solve_central(const CentralProblem& p, const MiqpOptions& opts = {});

// Integrality dropped. Lower-bounds the mixed-integer optimum; also the
// reference optimum for relaxed-system runs.
QpSolution solve_relaxation(const CentralProblem& p, double tol = 1e-8);

// Split a central solution vector into per-household schedules.
std::vector<ScheduleSolution> decode_central(const CentralProblem& p,
                                             const std::vector<double>& x);

// Size and outcome summary, one line per field (variables, binaries,
// constraints, objective, bound, gap, nodes).
struct CentralReport {
  int variables = 0;
  int binaries = 0;
  int constraints = 0;
  double objective = kInf;
  double bound = -kInf;
  double gap = kInf;
  long nodes = 0;
  double wall_sec = 0.0;
};
CentralReport report(const CentralProblem& p, const MiqpSolution& s,
                     double wall_sec);

}  // namespace dr
