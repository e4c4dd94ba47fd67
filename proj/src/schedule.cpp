#include "dr/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dr {

namespace {

double series_at(const std::vector<double>& v, int t) {
  return t < (int)v.size() ? v[t] : 0.0;
}

std::string slot_msg(const char* what, double lhs, double rhs) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s: %.12g vs %.12g", what, lhs, rhs);
  return buf;
}

}  // namespace

std::vector<double> net_demand(const Horizon& h, const HouseholdSpec& hh,
                               const ScheduleSolution& sol) {
  std::vector<double> out(h.num_slots, 0.0);
  for (const auto& ds : sol.devices)
    for (int t = 0; t < h.num_slots; ++t) out[t] += series_at(ds.x, t);
  for (int t = 0; t < h.num_slots; ++t) {
    double pv = t < (int)hh.pv_profile.size() ? hh.pv_profile[t] : 0.0;
    out[t] -= pv * h.slot_hours;
  }
  return out;
}

double t3_slot_cost(const Horizon& h, const DeviceType3& d, int t) {
  // Padded window: running during the task or its minimum-on tail is free.
  int padded = std::min(h.num_slots, d.window.length + d.min_on_slots - 1);
  int into = h.wrap(t - d.window.start);
  if (into < padded) return 0.0;
  int end_pad = h.wrap(d.window.start + padded - 1);
  double late = d.delay_weight * h.wrap(t - end_pad);
  double early = d.advance_weight * h.wrap(d.window.start - t);
  return std::min(late, early);
}

std::vector<double> dissatisfaction_type2(const Horizon& h,
                                          const DeviceType2& d,
                                          const DeviceSchedule& s) {
  std::vector<double> cost(h.num_slots, 0.0);
  for (int j = 0; j < d.window.length; ++j) {
    int t = d.window.slot(h, j);
    cost[t] = d.off_weight * (1.0 - series_at(s.u, t));
    for (size_t l = 0; l < d.power_levels.size(); ++l)
      if (l < s.u_modes.size())
        cost[t] += d.mode_weights[l] * series_at(s.u_modes[l], t);
  }
  return cost;
}

std::vector<double> dissatisfaction_type3(const Horizon& h,
                                          const DeviceType3& d,
                                          const DeviceSchedule& s) {
  std::vector<double> cost(h.num_slots, 0.0);
  for (int t = 0; t < h.num_slots; ++t)
    cost[t] = t3_slot_cost(h, d, t) * series_at(s.u, t);
  return cost;
}

std::vector<double> dissatisfaction_type6(const Horizon& h,
                                          const DeviceType6& d,
                                          const DeviceSchedule& s) {
  std::vector<double> cost(h.num_slots, 0.0);
  for (int j = 0; j < d.window.length; ++j) {
    int t = d.window.slot(h, j);
    double dev = series_at(s.t_in, t) - d.t_comfort;
    cost[t] = d.comfort_weight * dev * dev;
  }
  return cost;
}

namespace {
double vec_sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}
}  // namespace

double dissatisfaction_total(const Horizon& h, const HouseholdSpec& hh,
                             const ScheduleSolution& sol) {
  double total = 0.0;
  for (size_t a = 0; a < hh.devices.size(); ++a) {
    const DeviceSpec& spec = hh.devices[a].spec;
    const DeviceSchedule& s = sol.devices[a];
    if (auto* d2 = std::get_if<DeviceType2>(&spec))
      total += vec_sum(dissatisfaction_type2(h, *d2, s));
    else if (auto* d3 = std::get_if<DeviceType3>(&spec))
      total += vec_sum(dissatisfaction_type3(h, *d3, s));
    else if (auto* d6 = std::get_if<DeviceType6>(&spec))
      total += vec_sum(dissatisfaction_type6(h, *d6, s));
  }
  return total;
}

double thermal_step(double t_in_prev, double heat_rate, double x,
                    double loss_rate, double t_out_prev) {
  return t_in_prev + heat_rate * x + loss_rate * (t_out_prev - t_in_prev);
}

std::vector<double> thermal_trajectory(const Horizon& h,
                                       const EnvironmentProfile& env,
                                       const DeviceType6& d,
                                       const std::vector<double>& x) {
  std::vector<double> traj(d.window.length, 0.0);
  double t_in = d.t_in_initial;
  for (int j = 0; j < d.window.length; ++j) {
    int t = d.window.slot(h, j);
    double t_out_prev = env.t_out[h.prev(t)];
    t_in = thermal_step(t_in, d.heat_rate, series_at(x, t), d.loss_rate,
                        t_out_prev);
    traj[j] = t_in;
  }
  return traj;
}

namespace {

struct Checker {
  const Horizon& h;
  const EnvironmentProfile& env;
  const HouseholdSpec& hh;
  const ScheduleSolution& sol;
  double tol;
  std::vector<Violation> out;

  void add(const std::string& family, int dev, int slot, double residual,
           std::string detail = {}) {
    if (residual > tol)
      out.push_back({family, dev, slot, residual, std::move(detail)});
  }

  void binary(const std::string& family, int dev, int slot, double v) {
    add(family, dev, slot, std::fabs(v - std::round(v)),
        slot_msg("not integral", v, std::round(v)));
  }

  void range01(const std::string& family, int dev, int slot, double v) {
    add(family, dev, slot, std::max(-v, v - 1.0));
  }

  void check_type1(int a, const DeviceType1& d, const DeviceSchedule& s) {
    double e = d.base_power * h.slot_hours;
    for (int t = 0; t < h.num_slots; ++t)
      add("t1_fixed", a, t, std::fabs(series_at(s.x, t) - e));
  }

  void check_modes(const std::string& prefix, int a,
                   const std::vector<double>& levels, const DeviceSchedule& s,
                   int t) {
    double usum = 0.0, xsum = 0.0;
    for (size_t l = 0; l < levels.size(); ++l) {
      double ul = l < s.u_modes.size() ? series_at(s.u_modes[l], t) : 0.0;
      binary(prefix + "_mode_binary", a, t, ul);
      range01(prefix + "_mode_range", a, t, ul);
      usum += ul;
      xsum += levels[l] * ul * h.slot_hours;
    }
    add(prefix + "_mode_sum", a, t, std::fabs(usum - series_at(s.u, t)));
    add(prefix + "_energy_def", a, t, std::fabs(xsum - series_at(s.x, t)));
    range01(prefix + "_on_range", a, t, series_at(s.u, t));
  }

  void check_type2(int a, const DeviceType2& d, const DeviceSchedule& s) {
    for (int t = 0; t < h.num_slots; ++t) {
      if (!d.window.contains(h, t)) {
        add("t2_off_outside", a, t, std::fabs(series_at(s.x, t)));
        add("t2_off_outside", a, t, std::fabs(series_at(s.u, t)));
        continue;
      }
      check_modes("t2", a, d.power_levels, s, t);
    }
  }

  void check_type3(int a, const DeviceType3& d, const DeviceSchedule& s) {
    double energy = 0.0;
    for (int t = 0; t < h.num_slots; ++t) {
      check_modes("t3", a, d.power_levels, s, t);
      energy += series_at(s.x, t);
      range01("t3_startup_range", a, t, series_at(s.v, t));
      // v^t >= u^t - u^{t-1}, previous slot circular.
      double dtur = series_at(s.u, t) - series_at(s.u, h.prev(t));
      add("t3_startup_def", a, t, dtur - series_at(s.v, t));
    }
    add("t3_total_energy", a, -1, d.total_energy - energy,
        slot_msg("energy short", energy, d.total_energy));
    // Once started, on for at least min_on_slots: startups within the
    // lookback window cannot exceed u^t. Declared for every t, circular.
    for (int t = 0; t < h.num_slots; ++t) {
      double vsum = 0.0;
      for (int q = 0; q < d.min_on_slots; ++q)
        vsum += series_at(s.v, h.wrap(t - q));
      add("t3_min_on", a, t, vsum - series_at(s.u, t));
    }
  }

  void check_storage(int a, const StorageSpec& d, const DeviceSchedule& s) {
    for (int t = 0; t < h.num_slots; ++t) {
      if (!d.window.contains(h, t)) {
        add("storage_off_outside", a, t,
            std::fabs(series_at(s.x, t)) + std::fabs(series_at(s.x_ch, t)) +
                std::fabs(series_at(s.x_dis, t)));
      }
    }
    double soc = d.soc_initial;
    for (int j = 0; j < d.window.length; ++j) {
      int t = d.window.slot(h, j);
      double uch = series_at(s.u_ch, t), udis = series_at(s.u_dis, t);
      double u = series_at(s.u, t);
      binary("storage_ch_binary", a, t, uch);
      binary("storage_dis_binary", a, t, udis);
      add("storage_exclusive", a, t, std::fabs(uch + udis - u));
      add("storage_on_range", a, t, u - 1.0);
      add("storage_on_range", a, t, -u);
      double xch = series_at(s.x_ch, t), xdis = series_at(s.x_dis, t);
      add("storage_ch_lb", a, t, uch * d.p_ch_min * h.slot_hours - xch);
      add("storage_ch_ub", a, t, xch - uch * d.p_ch_max * h.slot_hours);
      add("storage_dis_lb", a, t, udis * d.p_dis_min * h.slot_hours - xdis);
      add("storage_dis_ub", a, t, xdis - udis * d.p_dis_max * h.slot_hours);
      add("storage_energy_def", a, t,
          std::fabs(series_at(s.x, t) - (xch - xdis)));
      soc += d.eta_ch * xch - xdis / d.eta_dis;
      add("storage_soc_recursion", a, t, std::fabs(series_at(s.soc, t) - soc),
          slot_msg("soc", series_at(s.soc, t), soc));
      add("storage_soc_lb", a, t, d.soc_min - soc);
      add("storage_soc_ub", a, t, soc - d.soc_max);
    }
    if (d.window.length > 0) {
      if (d.final_equality)
        add("storage_soc_final", a, -1, std::fabs(soc - d.soc_final),
            slot_msg("final soc", soc, d.soc_final));
      else
        add("storage_soc_final", a, -1, d.soc_final - soc,
            slot_msg("final soc short", soc, d.soc_final));
    }
  }

  void check_type6(int a, const DeviceType6& d, const DeviceSchedule& s) {
    for (int t = 0; t < h.num_slots; ++t)
      if (!d.window.contains(h, t))
        add("t6_off_outside", a, t, std::fabs(series_at(s.x, t)));
    double t_in = d.t_in_initial;
    for (int j = 0; j < d.window.length; ++j) {
      int t = d.window.slot(h, j);
      double u = series_at(s.u, t), x = series_at(s.x, t);
      binary("t6_on_binary", a, t, u);
      range01("t6_on_range", a, t, u);
      add("t6_power_lb", a, t, u * d.p_min * h.slot_hours - x);
      add("t6_power_ub", a, t, x - u * d.p_max * h.slot_hours);
      t_in = thermal_step(t_in, d.heat_rate, x, d.loss_rate,
                          env.t_out[h.prev(t)]);
      add("t6_thermal_recursion", a, t, std::fabs(series_at(s.t_in, t) - t_in),
          slot_msg("t_in", series_at(s.t_in, t), t_in));
      add("t6_comfort_lb", a, t, d.t_in_min - t_in);
      add("t6_comfort_ub", a, t, t_in - d.t_in_max);
    }
  }

  void run() {
    for (size_t a = 0; a < hh.devices.size(); ++a) {
      const DeviceSpec& spec = hh.devices[a].spec;
      const DeviceSchedule& s = sol.devices[a];
      if (auto* d = std::get_if<DeviceType1>(&spec)) check_type1((int)a, *d, s);
      else if (auto* d2 = std::get_if<DeviceType2>(&spec)) check_type2((int)a, *d2, s);
      else if (auto* d3 = std::get_if<DeviceType3>(&spec)) check_type3((int)a, *d3, s);
      else if (auto* st = std::get_if<StorageSpec>(&spec)) check_storage((int)a, *st, s);
      else if (auto* d6 = std::get_if<DeviceType6>(&spec)) check_type6((int)a, *d6, s);
    }
    std::vector<double> expect = net_demand(h, hh, sol);
    double cap = hh.breaker_limit * h.slot_hours;
    for (int t = 0; t < h.num_slots; ++t) {
      add("household_net_def", -1, t,
          std::fabs(series_at(sol.net_demand, t) - expect[t]),
          slot_msg("net demand", series_at(sol.net_demand, t), expect[t]));
      add("household_net_lb", -1, t, -series_at(sol.net_demand, t));
      add("household_net_ub", -1, t, series_at(sol.net_demand, t) - cap);
    }
  }
};

}  // namespace

std::vector<Violation> check_feasible(const Horizon& h,
                                      const EnvironmentProfile& env,
                                      const HouseholdSpec& hh,
                                      const ScheduleSolution& sol,
                                      double tol) {
  Checker c{h, env, hh, sol, tol, {}};
  c.run();
  return c.out;
}

}  // namespace dr
