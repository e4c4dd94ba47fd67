#include "dr/subproblem.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dr {

HouseholdModel::HouseholdModel(const Horizon& h, const EnvironmentProfile& env,
                               const HouseholdSpec& hh)
    : h_(h), env_(env), hh_(hh) {
  build();
}

void HouseholdModel::build() {
  const int T = h_.num_slots;
  const double dt = h_.slot_hours;
  QpProblem& b = proto_.base;

  t1_energy_.assign(T, 0.0);
  for (const auto& dev : hh_.devices)
    if (auto* d1 = std::get_if<DeviceType1>(&dev.spec))
      for (int t = 0; t < T; ++t) t1_energy_[t] += d1->base_power * dt;

  x_net_.resize(T);
  for (int t = 0; t < T; ++t)
    x_net_[t] = b.add_var(0.0, hh_.breaker_limit * dt, 0.0, 0.0);

  // net-demand balance rows, one per slot; device terms subtracted as the
  // devices are built:  x_net[t] - sum_a x_a[t] = t1_energy[t] - pv[t]*dt
  std::vector<LinearRow> balance(T);
  for (int t = 0; t < T; ++t) balance[t].add(x_net_[t], 1.0);

  dev_.resize(hh_.devices.size());
  for (size_t a = 0; a < hh_.devices.size(); ++a) {
    const DeviceSpec& spec = hh_.devices[a].spec;
    DeviceVars& dv = dev_[a];
    dv.kind = device_type_tag(spec);

    if (auto* d = std::get_if<DeviceType2>(&spec)) {
      const int L = (int)d->power_levels.size();
      dv.t2.ul.assign(L, std::vector<int>(d->window.length, -1));
      b.constant += d->off_weight * d->window.length;
      for (int j = 0; j < d->window.length; ++j) {
        int t = d->window.slot(h_, j);
        LinearRow pick;  // at most one mode on
        for (int l = 0; l < L; ++l) {
          int u = b.add_var(0.0, 1.0, 0.0, d->mode_weights[l] - d->off_weight);
          dv.t2.ul[l][j] = u;
          proto_.integer_vars.push_back(u);
          pick.add(u, 1.0);
          balance[t].add(u, -d->power_levels[l] * dt);
        }
        b.add_ineq(pick, -kInf, 1.0);
      }
    } else if (auto* d = std::get_if<DeviceType3>(&spec)) {
      const int L = (int)d->power_levels.size();
      dv.t3.ul.assign(L, std::vector<int>(T, -1));
      dv.t3.u.resize(T);
      dv.t3.v.resize(T);
      LinearRow energy;
      for (int t = 0; t < T; ++t) {
        // soft window: the task may run in any slot, priced by distance
        dv.t3.u[t] = b.add_var(0.0, 1.0, 0.0, t3_slot_cost(h_, *d, t));
        dv.t3.v[t] = b.add_var(0.0, 1.0, 0.0, 0.0);
        LinearRow def;  // u[t] = sum_l ul[l][t]
        def.add(dv.t3.u[t], 1.0);
        for (int l = 0; l < L; ++l) {
          int u = b.add_var(0.0, 1.0, 0.0, 0.0);
          dv.t3.ul[l][t] = u;
          proto_.integer_vars.push_back(u);
          def.add(u, -1.0);
          balance[t].add(u, -d->power_levels[l] * dt);
          energy.add(u, d->power_levels[l] * dt);
        }
        b.add_eq(def, 0.0);
      }
      b.add_eq(energy, d->total_energy);
      for (int t = 0; t < T; ++t) {
        LinearRow start;  // v[t] >= u[t] - u[t-1]
        start.add(dv.t3.v[t], 1.0);
        start.add(dv.t3.u[t], -1.0);
        start.add(dv.t3.u[h_.prev(t)], 1.0);
        b.add_ineq(start, 0.0, kInf);
        LinearRow run;  // startups within lookback pi must keep it on
        for (int q = 0; q < d->min_on_slots; ++q)
          run.add(dv.t3.v[h_.wrap(t - q)], 1.0);
        run.add(dv.t3.u[t], -1.0);
        b.add_ineq(run, -kInf, 0.0);
      }
    } else if (auto* d = std::get_if<StorageSpec>(&spec)) {
      const int W = d->window.length;
      dv.st.u.resize(W);
      dv.st.uch.resize(W);
      dv.st.udis.resize(W);
      dv.st.xch.resize(W);
      dv.st.xdis.resize(W);
      dv.st.soc.resize(W);
      for (int j = 0; j < W; ++j) {
        int t = d->window.slot(h_, j);
        dv.st.u[j] = b.add_var(0.0, 1.0, 0.0, 0.0);
        dv.st.uch[j] = b.add_var(0.0, 1.0, 0.0, 0.0);
        dv.st.udis[j] = b.add_var(0.0, 1.0, 0.0, 0.0);
        proto_.integer_vars.push_back(dv.st.uch[j]);
        proto_.integer_vars.push_back(dv.st.udis[j]);
        dv.st.xch[j] = b.add_var(0.0, std::max(0.0, d->p_ch_max * dt), 0.0, 0.0);
        dv.st.xdis[j] =
            b.add_var(0.0, std::max(0.0, d->p_dis_max * dt), 0.0, 0.0);
        double slo = d->soc_min, shi = d->soc_max;
        if (j == W - 1) {
          if (d->final_equality) slo = shi = d->soc_final;
          else slo = std::max(slo, d->soc_final);
        }
        dv.st.soc[j] = b.add_var(slo, shi, 0.0, 0.0);

        LinearRow onoff;  // u = uch + udis (and u <= 1 via bounds)
        onoff.add(dv.st.u[j], 1.0);
        onoff.add(dv.st.uch[j], -1.0);
        onoff.add(dv.st.udis[j], -1.0);
        b.add_eq(onoff, 0.0);
        LinearRow clo;  // p_ch_min*dt*uch <= xch <= p_ch_max*dt*uch
        clo.add(dv.st.xch[j], 1.0);
        clo.add(dv.st.uch[j], -d->p_ch_min * dt);
        b.add_ineq(clo, 0.0, kInf);
        LinearRow chi;
        chi.add(dv.st.xch[j], 1.0);
        chi.add(dv.st.uch[j], -d->p_ch_max * dt);
        b.add_ineq(chi, -kInf, 0.0);
        LinearRow dlo;
        dlo.add(dv.st.xdis[j], 1.0);
        dlo.add(dv.st.udis[j], -d->p_dis_min * dt);
        b.add_ineq(dlo, 0.0, kInf);
        LinearRow dhi;
        dhi.add(dv.st.xdis[j], 1.0);
        dhi.add(dv.st.udis[j], -d->p_dis_max * dt);
        b.add_ineq(dhi, -kInf, 0.0);

        LinearRow soc;  // soc_j - soc_{j-1} = eta_ch*xch - xdis/eta_dis
        soc.add(dv.st.soc[j], 1.0);
        soc.add(dv.st.xch[j], -d->eta_ch);
        soc.add(dv.st.xdis[j], 1.0 / d->eta_dis);
        if (j > 0) {
          soc.add(dv.st.soc[j - 1], -1.0);
          b.add_eq(soc, 0.0);
        } else {
          b.add_eq(soc, d->soc_initial);
        }

        balance[t].add(dv.st.xch[j], -1.0);
        balance[t].add(dv.st.xdis[j], 1.0);
      }
    } else if (auto* d = std::get_if<DeviceType6>(&spec)) {
      const int W = d->window.length;
      const bool gated = d->p_min > 1e-12;
      dv.t6.x.resize(W);
      dv.t6.tin.resize(W);
      if (gated) dv.t6.u.resize(W);
      for (int j = 0; j < W; ++j) {
        int t = d->window.slot(h_, j);
        dv.t6.x[j] = b.add_var(0.0, d->p_max * dt, 0.0, 0.0);
        // comfort cost gamma*(t_in - t_comf)^2 expanded on the t_in variable
        dv.t6.tin[j] =
            b.add_var(d->t_in_min, d->t_in_max, 2.0 * d->comfort_weight,
                      -2.0 * d->comfort_weight * d->t_comfort);
        b.constant += d->comfort_weight * d->t_comfort * d->t_comfort;
        if (gated) {
          dv.t6.u[j] = b.add_var(0.0, 1.0, 0.0, 0.0);
          proto_.integer_vars.push_back(dv.t6.u[j]);
          LinearRow xlo;
          xlo.add(dv.t6.x[j], 1.0);
          xlo.add(dv.t6.u[j], -d->p_min * dt);
          b.add_ineq(xlo, 0.0, kInf);
          LinearRow xhi;
          xhi.add(dv.t6.x[j], 1.0);
          xhi.add(dv.t6.u[j], -d->p_max * dt);
          b.add_ineq(xhi, -kInf, 0.0);
        }
        LinearRow th;  // t_in_j = (1-zeta) t_in_{j-1} + psi x + zeta t_out
        th.add(dv.t6.tin[j], 1.0);
        th.add(dv.t6.x[j], -d->heat_rate);
        double t_out_prev = env_.t_out[h_.prev(t)];
        if (j > 0) {
          th.add(dv.t6.tin[j - 1], -(1.0 - d->loss_rate));
          b.add_eq(th, d->loss_rate * t_out_prev);
        } else {
          b.add_eq(th, (1.0 - d->loss_rate) * d->t_in_initial +
                           d->loss_rate * t_out_prev);
        }
        balance[t].add(dv.t6.x[j], -1.0);
      }
    }
  }

  double pv_at;
  for (int t = 0; t < T; ++t) {
    pv_at = t < (int)hh_.pv_profile.size() ? hh_.pv_profile[t] : 0.0;
    b.add_eq(balance[t], t1_energy_[t] - pv_at * dt);
  }
}

ScheduleSolution HouseholdModel::decode(const std::vector<double>& x,
                                        int offset) const {
  const int T = h_.num_slots;
  const double dt = h_.slot_hours;
  auto at = [&](int j) { return x[offset + j]; };
  auto bin = [&](int j) { return std::round(at(j)); };

  ScheduleSolution sol;
  sol.devices.resize(hh_.devices.size());
  for (size_t a = 0; a < hh_.devices.size(); ++a) {
    const DeviceSpec& spec = hh_.devices[a].spec;
    const DeviceVars& dv = dev_[a];
    DeviceSchedule& s = sol.devices[a];
    if (auto* d1 = std::get_if<DeviceType1>(&spec)) {
      s.x.assign(T, d1->base_power * dt);
    } else if (auto* d = std::get_if<DeviceType2>(&spec)) {
      const int L = (int)d->power_levels.size();
      s.x.assign(T, 0.0);
      s.u.assign(T, 0.0);
      s.u_modes.assign(L, std::vector<double>(T, 0.0));
      for (int j = 0; j < d->window.length; ++j) {
        int t = d->window.slot(h_, j);
        for (int l = 0; l < L; ++l) {
          double u = bin(dv.t2.ul[l][j]);
          s.u_modes[l][t] = u;
          s.u[t] += u;
          s.x[t] += d->power_levels[l] * dt * u;
        }
      }
    } else if (auto* d = std::get_if<DeviceType3>(&spec)) {
      const int L = (int)d->power_levels.size();
      s.x.assign(T, 0.0);
      s.u.assign(T, 0.0);
      s.v.assign(T, 0.0);
      s.u_modes.assign(L, std::vector<double>(T, 0.0));
      for (int t = 0; t < T; ++t) {
        for (int l = 0; l < L; ++l) {
          double u = bin(dv.t3.ul[l][t]);
          s.u_modes[l][t] = u;
          s.u[t] += u;
          s.x[t] += d->power_levels[l] * dt * u;
        }
      }
      // canonical startup labels; the solved ones are only feasible
      for (int t = 0; t < T; ++t)
        s.v[t] = std::max(0.0, s.u[t] - s.u[h_.prev(t)]);
    } else if (auto* d = std::get_if<StorageSpec>(&spec)) {
      s.x.assign(T, 0.0);
      s.u.assign(T, 0.0);
      s.u_ch.assign(T, 0.0);
      s.u_dis.assign(T, 0.0);
      s.x_ch.assign(T, 0.0);
      s.x_dis.assign(T, 0.0);
      s.soc.assign(T, 0.0);
      for (int j = 0; j < d->window.length; ++j) {
        int t = d->window.slot(h_, j);
        s.u_ch[t] = bin(dv.st.uch[j]);
        s.u_dis[t] = bin(dv.st.udis[j]);
        s.u[t] = s.u_ch[t] + s.u_dis[t];
        s.x_ch[t] = at(dv.st.xch[j]);
        s.x_dis[t] = at(dv.st.xdis[j]);
        s.x[t] = s.x_ch[t] - s.x_dis[t];
        s.soc[t] = at(dv.st.soc[j]);
      }
    } else if (auto* d = std::get_if<DeviceType6>(&spec)) {
      s.x.assign(T, 0.0);
      s.t_in.assign(T, 0.0);
      s.u.assign(T, 0.0);
      for (int j = 0; j < d->window.length; ++j) {
        int t = d->window.slot(h_, j);
        s.x[t] = at(dv.t6.x[j]);
        s.t_in[t] = at(dv.t6.tin[j]);
        // without a minimum power there is no gate; report always-on
        s.u[t] = dv.t6.u.empty() ? 1.0 : bin(dv.t6.u[j]);
      }
    }
  }
  sol.net_demand.resize(T);
  for (int t = 0; t < T; ++t) sol.net_demand[t] = at(x_net_[t]);
  return sol;
}

AgentResponse HouseholdModel::solve(const SmoothedQuery& q,
                                    const MiqpOptions& opts) const {
  const int T = h_.num_slots;
  if ((int)q.prices.size() != T)
    throw std::invalid_argument("household solve: price vector length");
  if (q.nu > 0 && (int)q.x_prev.size() != T)
    throw std::invalid_argument("household solve: x_prev length");

  MiqpProblem p = proto_;
  for (int t = 0; t < T; ++t) {
    int j = x_net_[t];
    p.base.quadratic_diag[j] = q.mu + q.nu;
    double c = q.prices[t];
    if (q.nu > 0) {
      c -= q.nu * q.x_prev[t];
      p.base.constant += 0.5 * q.nu * q.x_prev[t] * q.x_prev[t];
    }
    p.base.linear[j] = c;
  }

  MiqpSolution s = solve_miqp(p, opts);
  if (s.status == SolveStatus::infeasible)
    throw std::runtime_error("household " + std::to_string(hh_.id) +
                             ": infeasible device constraints");
  if (s.status != SolveStatus::optimal)
    throw std::runtime_error("household " + std::to_string(hh_.id) +
                             ": solve hit " + to_string(s.status));

  AgentResponse r;
  r.value = s.objective;
  r.schedule = decode(s.x);
  r.net_demand.resize(T);
  for (int t = 0; t < T; ++t) r.net_demand[t] = s.x[x_net_[t]];
  r.dissatisfaction_total = dissatisfaction_total(h_, hh_, r.schedule);
  return r;
}

AgentResponse household_subproblem(const Horizon& h,
                                   const EnvironmentProfile& env,
                                   const HouseholdSpec& hh,
                                   const SmoothedQuery& q) {
  return HouseholdModel(h, env, hh).solve(q);
}

std::pair<double, std::vector<double>> aggregator_subproblem(
    const AggregatorSpec& agg, const std::vector<double>& prices,
    const Horizon& h) {
  const int T = h.num_slots;
  std::vector<double> x(T);
  double value = 0.0;
  double cap = agg.grid_limit * h.slot_hours;
  for (int t = 0; t < T; ++t) {
    double g = (prices[t] - agg.c1[t]) / (2.0 * agg.c2[t]);
    g = std::min(std::max(g, 0.0), cap);
    x[t] = g;
    value += agg.c2[t] * g * g + agg.c1[t] * g + agg.c0[t] - prices[t] * g;
  }
  return {value, x};
}

double exact_dual_term(const Horizon& h, const EnvironmentProfile& env,
                       const HouseholdSpec& hh,
                       const std::vector<double>& prices) {
  SmoothedQuery q;
  q.prices = prices;
  return HouseholdModel(h, env, hh).solve(q).value;
}

}  // namespace dr
