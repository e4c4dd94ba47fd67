#include "dr/fleet.hpp"

#include <algorithm>
#include <cmath>

namespace dr {

namespace {

// Hourly summer outdoor temperature, degC, hour 0..23. Stays above 18 so the
// comfort band's floor is never crossed passively. Stand-in curve, not
// measured data; scenarios may override.
const double kTout24[24] = {26.0, 25.4, 24.9, 24.5, 24.2, 24.0, 24.3, 25.1,
                            26.3, 27.8, 29.4, 30.9, 32.2, 33.2, 33.8, 34.0,
                            33.6, 32.7, 31.4, 29.9, 28.6, 27.6, 26.9, 26.4};

// Hourly PV availability shape, kW, peak 1.2 around noon; per-household
// output is this shape times a drawn scale factor.
const double kPv24[24] = {0.0,  0.0,  0.0,  0.0,  0.0,  0.02, 0.10, 0.32,
                          0.55, 0.78, 0.98, 1.12, 1.20, 1.18, 1.05, 0.86,
                          0.62, 0.38, 0.16, 0.04, 0.0,  0.0,  0.0,  0.0};

// Thermal archetypes (heat_rate degC/kWh, loss_rate per slot). Cooling units;
// each pair keeps |heat_rate| * 2 kW >= loss_rate * (36 - 18) degC so even the
// weakest drawn compressor can hold the band against the hottest hour.
const double kAcArchetype[10][2] = {
    {-1.3, 0.08}, {-1.6, 0.10}, {-1.9, 0.12}, {-2.2, 0.15}, {-2.6, 0.18},
    {-3.0, 0.21}, {-3.3, 0.24}, {-3.7, 0.28}, {-4.2, 0.32}, {-4.7, 0.35}};

// Time-of-day energy cost curvature bands, $/kWh^2 by clock hour.
double c2_band(double hour) {
  double h = std::fmod(hour, 24.0);
  if (h < 0) h += 24.0;
  if (h < 5.0) return 0.003;
  if (h < 8.0) return 0.004;
  if (h < 14.0) return 0.007;
  if (h < 19.0) return 0.004;
  return 0.01;
}

// Mean of an hourly step curve over slot t's clock interval.
double resample_hourly(const double* table, const Horizon& h, int t) {
  double a = h.hour_of(t), b = a + h.slot_hours;
  double sum = 0.0;
  // integrate hour by hour; intervals of a 24h-periodic step function
  double lo = a;
  while (lo < b - 1e-12) {
    double edge = std::floor(lo + 1e-12) + 1.0;
    double hi = std::min(b, edge);
    double mid = std::fmod(0.5 * (lo + hi), 24.0);
    if (mid < 0) mid += 24.0;
    sum += table[(int)mid] * (hi - lo);
    lo = hi;
  }
  return sum / h.slot_hours;
}

// Window whose start is a clock hour; length given in hours.
Window clock_window(const Horizon& h, double start_hour, double hours) {
  int len = std::max(1, (int)std::lround(hours / h.slot_hours));
  len = std::min(len, h.num_slots);
  int start = h.wrap((int)std::lround(start_hour / h.slot_hours) - h.start_slot);
  return Window{start, len};
}

// One independent draw stream per (seed, household); whitened twice so
// adjacent households decorrelate and growing the fleet never reshuffles
// anyone's parameters.
SplitMix64 household_stream(std::uint64_t seed, int i) {
  SplitMix64 r{seed};
  std::uint64_t a = r.next();
  r.state = a ^ ((std::uint64_t)i * 0x9e3779b97f4a7c15ull);
  r.next();
  return r;
}

std::vector<double> draw_levels(SplitMix64& r, int count, double lo, double hi) {
  std::vector<double> v(count);
  for (double& x : v) x = r.uniform(lo, hi);
  std::sort(v.begin(), v.end());
  for (int l = 1; l < count; ++l)  // strictly increasing
    if (v[l] <= v[l - 1]) v[l] = v[l - 1] * (1.0 + 1e-9) + 1e-12;
  return v;
}

DeviceType2 draw_type2(SplitMix64& r, const Horizon& h, int max_modes) {
  DeviceType2 d;
  int L = 1 + (max_modes > 1 ? r.pick(max_modes) : 0);
  d.power_levels = draw_levels(r, L, 0.1, 0.275);
  d.off_weight = r.uniform(0.001, 0.15);
  d.mode_weights.resize(L);
  for (double& w : d.mode_weights) w = r.uniform(0.001, 0.15);
  int len = std::max(2, h.num_slots / 4 + r.pick(std::max(1, h.num_slots / 2)));
  d.window = Window{r.pick(h.num_slots), std::min(len, h.num_slots)};
  return d;
}

DeviceType3 draw_type3(SplitMix64& r, const Horizon& h, int max_modes) {
  DeviceType3 d;
  int L = 1 + (max_modes > 1 ? r.pick(max_modes) : 0);
  d.power_levels = draw_levels(r, L, 0.7, 4.0);
  d.min_on_slots = 2 + r.pick(2);
  int run = d.min_on_slots + r.pick(2);
  run = std::min(run, h.num_slots);
  // total energy as an exact run of the top level, so the requirement is
  // attainable and meets E >= pi * slot_hours * max level
  d.total_energy = run * h.slot_hours * d.power_levels.back();
  d.delay_weight = r.uniform(0.001, 0.15);
  d.advance_weight = 1.5 * d.delay_weight;
  int len = std::max(d.min_on_slots,
                     h.num_slots / 3 + r.pick(std::max(1, h.num_slots / 3)));
  d.window = Window{r.pick(h.num_slots), std::min(len, h.num_slots)};
  return d;
}

StorageSpec draw_ev(SplitMix64& r, const Horizon& h) {
  StorageSpec d;
  d.is_ev = true;
  d.soc_max = r.uniform(9.0, 16.0);
  d.soc_min = 0.25 * d.soc_max;
  d.soc_initial = 0.4 * d.soc_max;
  d.soc_final = d.soc_max;
  d.final_equality = true;
  d.p_ch_min = r.uniform(0.1, 0.6);
  d.p_ch_max = r.uniform(1.1, 3.3);
  d.p_dis_min = r.uniform(0.1, 0.6);
  d.p_dis_max = r.uniform(1.1, 3.3);
  d.eta_ch = 0.87;
  d.eta_dis = 0.9;
  d.window = clock_window(h, 19.0, 12.0);  // plugged in 7pm-7am
  return d;
}

StorageSpec draw_battery(SplitMix64& r, const Horizon& h) {
  StorageSpec d;
  d.is_ev = false;
  d.soc_max = r.uniform(8.0, 11.0);
  d.soc_min = 0.25 * d.soc_max;
  d.soc_initial = 0.3 * d.soc_max;
  d.soc_final = d.soc_initial;
  d.final_equality = false;  // end at least as full as it began
  d.p_ch_min = r.uniform(0.1, 0.6);
  d.p_ch_max = r.uniform(1.1, 3.3);
  d.p_dis_min = r.uniform(0.1, 0.6);
  d.p_dis_max = r.uniform(1.1, 3.3);
  d.eta_ch = 0.91;
  d.eta_dis = 0.95;
  d.window = Window{0, h.num_slots};
  return d;
}

DeviceType6 draw_ac(SplitMix64& r, const Horizon& h, bool zero_min) {
  DeviceType6 d;
  const double* arch = kAcArchetype[r.pick(10)];
  d.heat_rate = arch[0];
  d.loss_rate = arch[1];
  d.p_min = zero_min ? 0.0 : r.uniform(0.1, 1.0);
  d.p_max = r.uniform(2.0, 5.0);
  d.t_in_min = 18.0;
  d.t_in_max = 25.0;
  d.t_comfort = 22.5;
  d.t_in_initial = 22.5;
  d.comfort_weight = r.uniform(0.001, 0.15);
  // two occupancy cohorts: midday vs evening
  d.window = r.pick(2) == 0 ? clock_window(h, 11.0, 6.0)
                            : clock_window(h, 18.0, 6.0);
  return d;
}

}  // namespace

bool penetration_member(int household, double fraction) {
  auto cum = [&](int n) { return std::floor(n * fraction + 0.5); };
  return cum(household + 1) - cum(household) >= 0.5;
}

Scenario generate(const FleetConfig& cfg) {
  const Horizon& h = cfg.horizon;
  Scenario sc;
  sc.horizon = h;

  sc.environment.t_out.resize(h.num_slots);
  for (int t = 0; t < h.num_slots; ++t)
    sc.environment.t_out[t] = resample_hourly(kTout24, h, t);

  sc.aggregator.c2.resize(h.num_slots);
  sc.aggregator.c1.assign(h.num_slots, 0.0);
  sc.aggregator.c0.assign(h.num_slots, 0.0);
  for (int t = 0; t < h.num_slots; ++t)
    sc.aggregator.c2[t] = c2_band(h.hour_of(t) + 0.5 * h.slot_hours);
  sc.aggregator.grid_limit = 5.0 * cfg.num_households;

  std::vector<double> pv_shape(h.num_slots);
  for (int t = 0; t < h.num_slots; ++t)
    pv_shape[t] = resample_hourly(kPv24, h, t);

  sc.households.reserve(cfg.num_households);
  for (int i = 0; i < cfg.num_households; ++i) {
    SplitMix64 r = household_stream(cfg.seed, i);
    HouseholdSpec hh;
    hh.id = i;
    hh.breaker_limit = 10.0;

    if (cfg.compact) {
      hh.devices.push_back({"modal1", draw_type2(r, h, 1)});
      hh.devices.push_back({"task1", draw_type3(r, h, 1)});
      hh.devices.push_back({"ac", draw_ac(r, h, true)});
      sc.households.push_back(std::move(hh));
      continue;
    }

    for (int n = 0; n < cfg.num_type1; ++n)
      hh.devices.push_back(
          {cfg.num_type1 > 1 ? "base" + std::to_string(n + 1) : "base",
           DeviceType1{r.uniform(0.08, 0.15)}});
    for (int n = 0; n < cfg.num_type2; ++n)
      hh.devices.push_back({"modal" + std::to_string(n + 1), draw_type2(r, h, 3)});
    for (int n = 0; n < cfg.num_type3; ++n)
      hh.devices.push_back({"task" + std::to_string(n + 1), draw_type3(r, h, 3)});
    if (penetration_member(i, cfg.ev_fraction))
      hh.devices.push_back({"ev", draw_ev(r, h)});
    if (penetration_member(i, cfg.pv_battery_fraction)) {
      hh.devices.push_back({"battery", draw_battery(r, h)});
      double scale = r.uniform(0.8, 1.5);
      hh.pv_profile.resize(h.num_slots);
      for (int t = 0; t < h.num_slots; ++t)
        hh.pv_profile[t] = scale * pv_shape[t];
    }
    if (penetration_member(i, cfg.ac_fraction))
      hh.devices.push_back({"ac", draw_ac(r, h, false)});
    sc.households.push_back(std::move(hh));
  }
  return sc;
}

Scenario replicate(const Scenario& base, int factor) {
  Scenario out = base;
  out.aggregator.grid_limit = base.aggregator.grid_limit * factor;
  out.households.clear();
  out.households.reserve(base.households.size() * factor);
  int id = 0;
  for (int rep = 0; rep < factor; ++rep)
    for (const HouseholdSpec& hh : base.households) {
      out.households.push_back(hh);
      out.households.back().id = id++;
    }
  return out;
}

}  // namespace dr
