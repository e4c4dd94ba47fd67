#pragma once

#include <utility>
#include <vector>

#include "dr/household.hpp"
#include "dr/miqp.hpp"
#include "dr/schedule.hpp"

namespace dr {

// Priced, smoothed household query: minimize over the household's feasible set
//   sum_t prices[t]*x_i[t] + dissatisfaction
//   + (mu/2)*||x_i||^2 + (nu/2)*||x_i - x_prev||^2
// where x_i is the net demand vector. x_prev may be empty when nu == 0.
struct SmoothedQuery {
  std::vector<double> prices;  // $/kWh, length T
  double mu = 0.0;             // $/kWh^2
  double nu = 0.0;             // $/kWh^2
  std::vector<double> x_prev;  // kWh per slot
};

struct AgentResponse {
  double value = 0.0;                  // optimal objective of the query
  std::vector<double> net_demand;      // kWh per slot
  double dissatisfaction_total = 0.0;  // $ over horizon, re-evaluated
  ScheduleSolution schedule;
};

// One household's scheduling MIQP, built once; per-query only the net-demand
// objective coefficients change. Type 1 loads and PV are folded into the
// net-demand balance rows as constants. Declared binaries: type 2/3 mode
// indicators, storage charge/discharge flags, thermal on flags when the
// device has a positive minimum power. On/startup indicators stay continuous
// (their integrality is implied), which keeps the branching set small.
class HouseholdModel {
 public:
  HouseholdModel(const Horizon& h, const EnvironmentProfile& env,
                 const HouseholdSpec& hh);

  // Solve for the given prices/smoothing. Throws std::runtime_error if the
  // household's feasible set is empty.
  AgentResponse solve(const SmoothedQuery& q, const MiqpOptions& opts = {}) const;

  // Fixed part (dissatisfaction objective + all constraints); variables are
  // 0-based within this model. Used by the central assembly.
  const MiqpProblem& structure() const { return proto_; }
  int num_vars() const { return proto_.base.num_vars; }
  int num_binaries() const { return (int)proto_.integer_vars.size(); }
  int net_var(int t) const { return x_net_[t]; }

  // Interpret a raw solution vector (offset into a larger assembly) as device
  // schedules: reconstructs device energies from mode indicators and replaces
  // startup labels with their canonical values.
  ScheduleSolution decode(const std::vector<double>& x, int offset = 0) const;

  const HouseholdSpec& household() const { return hh_; }

 private:
  Horizon h_;
  EnvironmentProfile env_;
  HouseholdSpec hh_;
  MiqpProblem proto_;
  std::vector<int> x_net_;  // per slot

  struct T2Vars {
    std::vector<std::vector<int>> ul;  // [mode][window j]
  };
  struct T3Vars {
    std::vector<std::vector<int>> ul;  // [mode][t], all slots
    std::vector<int> u, v;             // [t]
  };
  struct StoVars {
    std::vector<int> u, uch, udis, xch, xdis, soc;  // [window j]
  };
  struct T6Vars {
    std::vector<int> u, x, tin;  // [window j]; u empty when p_min == 0
  };
  struct DeviceVars {
    int kind = 0;  // device_type_tag
    T2Vars t2;
    T3Vars t3;
    StoVars st;
    T6Vars t6;
  };
  std::vector<DeviceVars> dev_;
  std::vector<double> t1_energy_;  // folded must-run kWh per slot

  void build();
};

// Convenience single-shot solve.
AgentResponse household_subproblem(const Horizon& h,
                                   const EnvironmentProfile& env,
                                   const HouseholdSpec& hh,
                                   const SmoothedQuery& q);

// Closed-form aggregator best response: per slot
// x_g[t] = clamp((prices[t]-c1[t])/(2 c2[t]), 0, grid_limit*slot_hours),
// value = sum_t (c2 x^2 + c1 x + c0 - prices[t] x).
std::pair<double, std::vector<double>> aggregator_subproblem(
    const AggregatorSpec& agg, const std::vector<double>& prices,
    const Horizon& h);

// Unsmoothed household dual term (mu = nu = 0).
double exact_dual_term(const Horizon& h, const EnvironmentProfile& env,
                       const HouseholdSpec& hh,
                       const std::vector<double>& prices);

}  // namespace dr
