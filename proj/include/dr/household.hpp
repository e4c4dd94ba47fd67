#pragma once

#include <string>
#include <vector>

#include "dr/devices.hpp"
#include "dr/horizon.hpp"

namespace dr {

// One household (agent i). Net demand per slot is the device total minus PV,
// clipped by the physical limits 0 <= x_i^t <= breaker_limit*slot_hours
// (no export: excess PV must be consumed or curtailed).
struct HouseholdSpec {
  int id = 0;
  double breaker_limit = 10.0;        // P_i^max, kW
  std::vector<double> pv_profile;     // kW available per slot, empty = no PV
  std::vector<Device> devices;
};

// Aggregator-side market data: per-slot quadratic energy cost
// C^t(x) = c2[t]*x^2 + c1[t]*x + c0[t], purchase bounded by the grid limit.
struct AggregatorSpec {
  std::vector<double> c2;             // $/kWh^2
  std::vector<double> c1;             // $/kWh
  std::vector<double> c0;             // $
  double grid_limit = 1e9;            // G^max, kW
};

struct EnvironmentProfile {
  std::vector<double> t_out;          // outdoor degC per slot
};

struct Scenario {
  Horizon horizon;
  AggregatorSpec aggregator;
  EnvironmentProfile environment;
  std::vector<HouseholdSpec> households;
};

}  // namespace dr
