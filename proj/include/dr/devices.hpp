#pragma once

#include <string>
#include <variant>
#include <vector>

#include "dr/horizon.hpp"

namespace dr {

// Units: power kW, energy kWh, prices $/kWh, temperature degC.
// Device windows are circular (Window); storage/thermal state chains run
// along the window's slot order, anchored just before its first slot.

// Must-run base load: x^t = base_power * slot_hours at every slot.
struct DeviceType1 {
  double base_power = 0.1;
};

// Interruptible appliance with discrete operating modes. Off outside the
// window (hard); inside, exactly one of the L levels when on.
// Per-slot dissatisfaction in window: off_weight*(1-u) + sum_l mode_weights[l]*u_l.
struct DeviceType2 {
  std::vector<double> power_levels;   // e_l, kW, one per mode
  double off_weight = 0.0;            // gamma^0, $ per slot spent off
  std::vector<double> mode_weights;   // gamma^l, $ per slot in mode l
  Window window;
};

// Non-interruptible task: must consume total_energy over the horizon and stay
// on at least min_on_slots once started. The window is soft: running outside
// it costs delay_weight (late) or advance_weight (early) per slot-distance.
struct DeviceType3 {
  std::vector<double> power_levels;   // e_l, kW
  double total_energy = 0.0;          // E, kWh over the whole horizon
  int min_on_slots = 1;               // pi, in slots
  double delay_weight = 0.0;          // gamma-bar, $ per slot late
  double advance_weight = 0.0;        // gamma-underbar, $ per slot early
  Window window;
};

// Storage (EV or stationary battery). Charging/discharging are exclusive;
// state of charge follows soc_{j} = soc_{j-1} + eta_ch*x_ch - x_dis/eta_dis
// along the window, starting from soc_initial before the first window slot.
// EVs: window is the plugged-in period, final SoC met with equality.
// Batteries: window is the whole horizon, final SoC is a lower bound.
struct StorageSpec {
  bool is_ev = false;
  double p_ch_min = 0.0, p_ch_max = 0.0;    // kW while charging
  double p_dis_min = 0.0, p_dis_max = 0.0;  // kW while discharging
  double eta_ch = 1.0, eta_dis = 1.0;
  double soc_min = 0.0, soc_max = 0.0;      // kWh bounds
  double soc_initial = 0.0;                 // kWh just before window start
  double soc_final = 0.0;                   // kWh at window end
  bool final_equality = true;               // true: ==, false: >=
  Window window;
};

// Thermostatic load (AC / heat pump). Indoor temperature follows
// t_in^t = t_in^{t-1} + heat_rate*x^t + loss_rate*(t_out^{t-1} - t_in^{t-1})
// inside the window, from t_in_initial. Comfort band is hard; per-slot
// dissatisfaction comfort_weight*(t_in - t_comfort)^2.
struct DeviceType6 {
  double p_min = 0.0, p_max = 0.0;    // kW while on
  double heat_rate = 0.0;             // psi, degC per kWh (negative = cooling)
  double loss_rate = 0.0;             // zeta, per slot
  double t_in_min = 18.0, t_in_max = 25.0;
  double t_comfort = 22.5;
  double comfort_weight = 0.0;        // gamma^th, $ per degC^2 per slot
  double t_in_initial = 22.5;         // state just before window start
  Window window;
};

using DeviceSpec =
    std::variant<DeviceType1, DeviceType2, DeviceType3, StorageSpec, DeviceType6>;

struct Device {
  std::string name;
  DeviceSpec spec;
};

// 1-based like the model family numbering; storage splits on is_ev.
inline int device_type_tag(const DeviceSpec& s) {
  struct V {
    int operator()(const DeviceType1&) const { return 1; }
    int operator()(const DeviceType2&) const { return 2; }
    int operator()(const DeviceType3&) const { return 3; }
    int operator()(const StorageSpec& st) const { return st.is_ev ? 4 : 5; }
    int operator()(const DeviceType6&) const { return 6; }
  };
  return std::visit(V{}, s);
}

}  // namespace dr
