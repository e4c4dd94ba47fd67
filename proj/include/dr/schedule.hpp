#pragma once

#include <string>
#include <vector>

#include "dr/household.hpp"

namespace dr {

// Per-device trajectories. All series have length horizon.num_slots and are
// zero outside the device's window; soc / t_in are meaningful only at window
// slots. Unused series for a given type stay empty.
struct DeviceSchedule {
  std::vector<double> x;        // net device energy per slot, kWh
  std::vector<double> u;        // on/off (or mode-sum) indicator
  std::vector<std::vector<double>> u_modes;  // [mode][slot], types 2/3
  std::vector<double> v;        // startup labels, type 3
  std::vector<double> x_ch, x_dis, u_ch, u_dis;  // storage
  std::vector<double> soc;      // kWh, storage
  std::vector<double> t_in;     // degC, type 6
};

struct ScheduleSolution {
  std::vector<DeviceSchedule> devices;
  std::vector<double> net_demand;  // x_i^t, kWh per slot
};

struct Violation {
  std::string constraint;  // family id, e.g. "t3_min_on"
  int device = -1;         // -1: household-level
  int slot = -1;
  double residual = 0.0;
  std::string detail;
};

// Device total minus PV energy: sum_a x_a^t - pv[t]*slot_hours.
std::vector<double> net_demand(const Horizon& h, const HouseholdSpec& hh,
                               const ScheduleSolution& sol);

// Every constraint family for every device plus the household coupling and
// breaker bounds; binary integrality within tol. Empty result = feasible.
std::vector<Violation> check_feasible(const Horizon& h,
                                      const EnvironmentProfile& env,
                                      const HouseholdSpec& hh,
                                      const ScheduleSolution& sol,
                                      double tol = 1e-6);

// Dissatisfaction in $ per slot for one device schedule (zero outside the
// device window except type 3, whose soft window penalizes any on-slot).
std::vector<double> dissatisfaction_type2(const Horizon& h,
                                          const DeviceType2& d,
                                          const DeviceSchedule& s);
std::vector<double> dissatisfaction_type3(const Horizon& h,
                                          const DeviceType3& d,
                                          const DeviceSchedule& s);
std::vector<double> dissatisfaction_type6(const Horizon& h,
                                          const DeviceType6& d,
                                          const DeviceSchedule& s);

// Household total over all devices (types 1/4/5 contribute none).
double dissatisfaction_total(const Horizon& h, const HouseholdSpec& hh,
                             const ScheduleSolution& sol);

// Type 3 soft-window cost coefficient on u^t: 0 inside the padded window
// {start .. end+pi-1}; outside, the cheaper of delay_weight * slots-past-end
// and advance_weight * slots-before-start, distances circular.
double t3_slot_cost(const Horizon& h, const DeviceType3& d, int t);

// One step of the thermal recursion, then the full indoor trajectory along
// the window (length window.length) given per-slot energies x (length T).
double thermal_step(double t_in_prev, double heat_rate, double x,
                    double loss_rate, double t_out_prev);
std::vector<double> thermal_trajectory(const Horizon& h,
                                       const EnvironmentProfile& env,
                                       const DeviceType6& d,
                                       const std::vector<double>& x);

}  // namespace dr
