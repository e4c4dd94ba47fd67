#pragma once

#include <iosfwd>

#include "dr/runtime.hpp"

namespace dr {

// Two-phase dual ascent parameters. The smoothing weights are expressed as
// multiples of the squared coupling-operator norm: mu1 = alpha1*(I+1),
// mu_min = alpha_min*(I+1), unless alpha_is_absolute, in which case alpha1
// and alpha_min are used as mu values directly.
struct AlgorithmConfig {
  std::vector<double> lambda_init;  // empty = zeros
  double kappa1 = 50.0;             // dual regularization start
  double kappa_min = 1e-5;
  double alpha1 = 8e-4;
  double alpha_min = 5e-6;
  bool alpha_is_absolute = false;
  int maxiter1 = 30;                // fast-gradient rounds
  int maxiter2 = 30;                // plain-gradient rounds
  double rho = 0.3;                 // phase-2 mu = rho * mu_J
  double sigma = 2.0;               // phase-2 nu = sigma * mu_J
  MiqpOptions solver;               // household subproblem settings
};

// phase: 1 and 2 for the two algorithm phases, 0 for the plain subgradient
// baseline trace.
struct IterateRecord {
  int k = 0;  // 1-based
  int phase = 1;
  std::vector<double> lambda_hat;
  double mu = 0.0, nu = 0.0, kappa = 0.0;
  double dual_value = 0.0;
  std::vector<double> grad;          // kWh per slot
  double grad_norm = 0.0;            // ||grad||_2
  double primal_recovered = 0.0;     // $P_r^k
  bool grid_feasible = false;
  bool projection_active = false;    // nonnegativity projection clipped
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<IterateRecord> trace;
  int J = 0;                          // best feasible fast-gradient round
  int S = 0;                          // best feasible round overall
  double primal_S = kInf;
  std::vector<double> lambda_S;
  std::vector<std::vector<double>> net_demand_S;  // per household, at round S
  std::vector<ScheduleSolution> schedules_S;      // in-process runs only
};

// ||A_c||^2 for the coupling operator stacking I household identities against
// the grid column: rows are mutually orthogonal with I entries +1 and one -1,
// so the squared spectral norm is exactly I+1.
double coupling_norm_sq(int num_households);

// grad D(lambda) = (sum_i x_i - x0) - kappa*lambda, elementwise.
std::vector<double> dual_gradient(const std::vector<double>& demand_sum,
                                  const std::vector<double>& x0, double kappa,
                                  const std::vector<double>& lambda);

// One fast-gradient ascent step with momentum beta = (sqrt(L)-sqrt(kappa)) /
// (sqrt(L)+sqrt(kappa)) and projection onto lambda >= 0:
//   lambda_next = max(0, lambda_hat + grad/L)
//   lambda_hat_next = lambda_next + beta*(lambda_next - lambda)
// Updates lambda and lambda_hat in place; returns true when the projection
// clipped any coordinate. Throws std::invalid_argument for L <= 0.
bool phase1_step(std::vector<double>& lambda, std::vector<double>& lambda_hat,
                 const std::vector<double>& grad, double L, double kappa);

// Per-round geometric decay factors: mu reaches its floor after 2*maxiter1
// rounds, kappa after 3*maxiter1 (both only in the limit of the schedule,
// never below the floor during a run).
double mu_decay_factor(double mu1, double mu_min, int maxiter1);
double kappa_decay_factor(double kappa1, double kappa_min, int maxiter1);

// Forced-coupling primal recovery: x_g := sum_i x_i, feasible iff every slot
// satisfies 0 <= x_g <= grid_limit*slot_hours. The value is computed two
// ways -- grid cost plus household dissatisfaction, and the itemized form
// value_i - <prices,x_i> - (mu/2)||x_i||^2 - (nu/2)||x_i - x_prev_i||^2
// summed against the grid cost -- and the two must agree to 1e-6.
// x_prev rows may be empty when b.nu == 0.
std::pair<double, bool> recover_primal(
    const AggregatorSpec& agg, const Horizon& h, const Broadcast& b,
    const std::vector<RoundReply>& replies,
    const std::vector<std::vector<double>>& x_prev);

// The full two-phase run over any transport. Phase 1 runs maxiter1 fast
// gradient rounds on the doubly smoothed dual; round J is the feasible round
// with the lowest recovered primal; phase 2 restarts from lambda_hat_J with
// fixed mu = rho*mu_J, nu = sigma*mu_J, step 1/L_J, and no dual
// regularization. S is the best feasible round overall (ties to the earliest
// round). Throws std::runtime_error when no round is grid-feasible.
RunResult run_algorithm(const Scenario& sc, const AlgorithmConfig& cfg,
                        Transport& transport);
// Convenience: serial in-process transport.
RunResult run_algorithm(const Scenario& sc, const AlgorithmConfig& cfg);

// Plain projected subgradient ascent on the unsmoothed dual (mu = nu =
// kappa = 0) with a constant step; the comparison baseline. Trace records
// carry phase 0.
RunResult subgradient_baseline(const Scenario& sc, double step, int iters,
                               Transport& transport,
                               const MiqpOptions& opts = {});

// sum_i min { 0.5*||x_i||^2 : x_i feasible }, each household by exhaustive
// enumeration; only tractable for toy scenarios.
double compute_DX(const Scenario& sc);

// k,phase,mu,nu,kappa,dual_value,grad_norm,primal_recovered,grid_feasible,
// wall_ms -- numbers with 17 significant digits so equal runs emit equal
// bytes (wall_ms excepted; strip it before comparing runs).
void write_trace_csv(const std::vector<IterateRecord>& trace, std::ostream& os);

}  // namespace dr
