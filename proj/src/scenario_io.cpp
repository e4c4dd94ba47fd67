#include "dr/scenario_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dr/devices.hpp"

namespace dr {

namespace {

using json = nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ScenarioError(where + ": " + what);
}

const json& field(const json& j, const std::string& where, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) fail(where, std::string("missing field '") + key + "'");
  return *it;
}

double num(const json& j, const std::string& where, const char* key) {
  const json& v = field(j, where, key);
  if (!v.is_number()) fail(where + "." + key, "expected a number");
  return v.get<double>();
}

int integer(const json& j, const std::string& where, const char* key) {
  const json& v = field(j, where, key);
  if (!v.is_number_integer()) fail(where + "." + key, "expected an integer");
  return v.get<int>();
}

std::vector<double> vec(const json& j, const std::string& where,
                        const char* key, int want_len) {
  const json& v = field(j, where, key);
  if (!v.is_array()) fail(where + "." + key, "expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number()) fail(where + "." + key, "expected numbers");
    out.push_back(e.get<double>());
  }
  if (want_len >= 0 && (int)out.size() != want_len)
    fail(where + "." + key, "expected length " + std::to_string(want_len) +
                                ", got " + std::to_string(out.size()));
  return out;
}

json window_json(const Window& w) {
  return json{{"start", w.start}, {"length", w.length}};
}

Window window_from(const json& j, const std::string& where, const Horizon& h) {
  const json& v = field(j, where, "window");
  Window w;
  w.start = integer(v, where + ".window", "start");
  w.length = integer(v, where + ".window", "length");
  if (w.start < 0 || w.start >= h.num_slots)
    fail(where + ".window", "start out of range");
  if (w.length < 1 || w.length > h.num_slots)
    fail(where + ".window", "length out of range");
  return w;
}

json device_json(const Device& d) {
  json j;
  j["name"] = d.name;
  j["type"] = device_type_tag(d.spec);
  if (auto* t1 = std::get_if<DeviceType1>(&d.spec)) {
    j["base_power"] = t1->base_power;
  } else if (auto* t2 = std::get_if<DeviceType2>(&d.spec)) {
    j["power_levels"] = t2->power_levels;
    j["off_weight"] = t2->off_weight;
    j["mode_weights"] = t2->mode_weights;
    j["window"] = window_json(t2->window);
  } else if (auto* t3 = std::get_if<DeviceType3>(&d.spec)) {
    j["power_levels"] = t3->power_levels;
    j["total_energy"] = t3->total_energy;
    j["min_on_slots"] = t3->min_on_slots;
    j["delay_weight"] = t3->delay_weight;
    j["advance_weight"] = t3->advance_weight;
    j["window"] = window_json(t3->window);
  } else if (auto* st = std::get_if<StorageSpec>(&d.spec)) {
    j["p_ch_min"] = st->p_ch_min;
    j["p_ch_max"] = st->p_ch_max;
    j["p_dis_min"] = st->p_dis_min;
    j["p_dis_max"] = st->p_dis_max;
    j["eta_ch"] = st->eta_ch;
    j["eta_dis"] = st->eta_dis;
    j["soc_min"] = st->soc_min;
    j["soc_max"] = st->soc_max;
    j["soc_initial"] = st->soc_initial;
    j["soc_final"] = st->soc_final;
    j["final_equality"] = st->final_equality;
    j["window"] = window_json(st->window);
  } else if (auto* t6 = std::get_if<DeviceType6>(&d.spec)) {
    j["p_min"] = t6->p_min;
    j["p_max"] = t6->p_max;
    j["heat_rate"] = t6->heat_rate;
    j["loss_rate"] = t6->loss_rate;
    j["t_in_min"] = t6->t_in_min;
    j["t_in_max"] = t6->t_in_max;
    j["t_comfort"] = t6->t_comfort;
    j["t_in_initial"] = t6->t_in_initial;
    j["comfort_weight"] = t6->comfort_weight;
    j["window"] = window_json(t6->window);
  }
  return j;
}

Device device_from(const json& j, const std::string& where, const Horizon& h) {
  Device d;
  const json& name = field(j, where, "name");
  if (!name.is_string()) fail(where + ".name", "expected a string");
  d.name = name.get<std::string>();
  int tag = integer(j, where, "type");
  switch (tag) {
    case 1: {
      DeviceType1 t;
      t.base_power = num(j, where, "base_power");
      if (t.base_power <= 0) fail(where, "base_power must be positive");
      d.spec = t;
      break;
    }
    case 2: {
      DeviceType2 t;
      t.power_levels = vec(j, where, "power_levels", -1);
      t.off_weight = num(j, where, "off_weight");
      t.mode_weights = vec(j, where, "mode_weights", -1);
      t.window = window_from(j, where, h);
      if (t.power_levels.empty()) fail(where, "power_levels empty");
      for (size_t l = 0; l < t.power_levels.size(); ++l) {
        if (t.power_levels[l] <= 0) fail(where, "power levels must be positive");
        if (l && t.power_levels[l] <= t.power_levels[l - 1])
          fail(where, "power_levels must be strictly increasing");
      }
      if (t.mode_weights.size() != t.power_levels.size())
        fail(where, "mode_weights length must match power_levels");
      if (t.off_weight < 0) fail(where, "off_weight must be nonnegative");
      for (double w : t.mode_weights)
        if (w < 0) fail(where, "mode_weights must be nonnegative");
      d.spec = t;
      break;
    }
    case 3: {
      DeviceType3 t;
      t.power_levels = vec(j, where, "power_levels", -1);
      t.total_energy = num(j, where, "total_energy");
      t.min_on_slots = integer(j, where, "min_on_slots");
      t.delay_weight = num(j, where, "delay_weight");
      t.advance_weight = num(j, where, "advance_weight");
      t.window = window_from(j, where, h);
      if (t.power_levels.empty()) fail(where, "power_levels empty");
      for (size_t l = 0; l < t.power_levels.size(); ++l) {
        if (t.power_levels[l] <= 0) fail(where, "power levels must be positive");
        if (l && t.power_levels[l] <= t.power_levels[l - 1])
          fail(where, "power_levels must be strictly increasing");
      }
      if (t.min_on_slots < 1) fail(where, "min_on_slots must be >= 1");
      if (t.delay_weight <= 0 || t.advance_weight <= 0)
        fail(where, "delay/advance weights must be positive");
      double floor_e =
          t.min_on_slots * h.slot_hours * t.power_levels.back() - 1e-9;
      if (t.total_energy < floor_e)
        fail(where, "total_energy below min_on_slots * slot_hours * max level");
      d.spec = t;
      break;
    }
    case 4:
    case 5: {
      StorageSpec t;
      t.is_ev = tag == 4;
      t.p_ch_min = num(j, where, "p_ch_min");
      t.p_ch_max = num(j, where, "p_ch_max");
      t.p_dis_min = num(j, where, "p_dis_min");
      t.p_dis_max = num(j, where, "p_dis_max");
      t.eta_ch = num(j, where, "eta_ch");
      t.eta_dis = num(j, where, "eta_dis");
      t.soc_min = num(j, where, "soc_min");
      t.soc_max = num(j, where, "soc_max");
      t.soc_initial = num(j, where, "soc_initial");
      t.soc_final = num(j, where, "soc_final");
      const json& fe = field(j, where, "final_equality");
      if (!fe.is_boolean()) fail(where + ".final_equality", "expected a bool");
      t.final_equality = fe.get<bool>();
      t.window = window_from(j, where, h);
      if (t.eta_ch <= 0 || t.eta_ch > 1 || t.eta_dis <= 0 || t.eta_dis > 1)
        fail(where, "efficiencies must lie in (0,1]");
      if (t.p_ch_min > t.p_ch_max || t.p_dis_min > t.p_dis_max)
        fail(where, "power min exceeds max");
      if (t.p_ch_min < 0 || t.p_dis_min < 0) fail(where, "negative power bound");
      if (t.soc_min > t.soc_initial || t.soc_initial > t.soc_max ||
          t.soc_min > t.soc_final || t.soc_final > t.soc_max)
        fail(where, "soc initial/final outside [soc_min, soc_max]");
      d.spec = t;
      break;
    }
    case 6: {
      DeviceType6 t;
      t.p_min = num(j, where, "p_min");
      t.p_max = num(j, where, "p_max");
      t.heat_rate = num(j, where, "heat_rate");
      t.loss_rate = num(j, where, "loss_rate");
      t.t_in_min = num(j, where, "t_in_min");
      t.t_in_max = num(j, where, "t_in_max");
      t.t_comfort = num(j, where, "t_comfort");
      t.t_in_initial = num(j, where, "t_in_initial");
      t.comfort_weight = num(j, where, "comfort_weight");
      t.window = window_from(j, where, h);
      if (t.heat_rate == 0) fail(where, "heat_rate must be nonzero");
      if (t.p_min < 0 || t.p_min > t.p_max) fail(where, "bad power range");
      if (!(t.t_in_min <= t.t_comfort && t.t_comfort <= t.t_in_max))
        fail(where, "comfort target outside the band");
      if (t.comfort_weight < 0) fail(where, "comfort_weight must be >= 0");
      d.spec = t;
      break;
    }
    default:
      fail(where, "unknown device type " + std::to_string(tag));
  }
  return d;
}

}  // namespace

void save_scenario(const Scenario& sc, std::ostream& os) {
  json j;
  j["format"] = "dr-scenario-1";
  j["horizon"] = {{"num_slots", sc.horizon.num_slots},
                  {"slot_hours", sc.horizon.slot_hours},
                  {"start_slot", sc.horizon.start_slot}};
  j["aggregator"] = {{"c2", sc.aggregator.c2},
                     {"c1", sc.aggregator.c1},
                     {"c0", sc.aggregator.c0},
                     {"grid_limit", sc.aggregator.grid_limit}};
  j["environment"] = {{"t_out", sc.environment.t_out}};
  json hhs = json::array();
  for (const HouseholdSpec& hh : sc.households) {
    json hj;
    hj["id"] = hh.id;
    hj["breaker_limit"] = hh.breaker_limit;
    if (!hh.pv_profile.empty()) hj["pv_profile"] = hh.pv_profile;
    json devs = json::array();
    for (const Device& d : hh.devices) devs.push_back(device_json(d));
    hj["devices"] = std::move(devs);
    hhs.push_back(std::move(hj));
  }
  j["households"] = std::move(hhs);
  os << j.dump(2) << '\n';
}

void save_scenario(const Scenario& sc, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ScenarioError("cannot open " + path + " for writing");
  save_scenario(sc, os);
  if (!os) throw ScenarioError("write failed on " + path);
}

Scenario load_scenario(std::istream& is) {
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail("document", "expected a JSON object");
  const json& fmt = field(j, "document", "format");
  if (!fmt.is_string() || fmt.get<std::string>() != "dr-scenario-1")
    fail("document.format", "expected \"dr-scenario-1\"");

  Scenario sc;
  const json& hz = field(j, "document", "horizon");
  sc.horizon.num_slots = integer(hz, "horizon", "num_slots");
  sc.horizon.slot_hours = num(hz, "horizon", "slot_hours");
  sc.horizon.start_slot = integer(hz, "horizon", "start_slot");
  if (sc.horizon.num_slots < 1) fail("horizon", "num_slots must be >= 1");
  if (sc.horizon.slot_hours <= 0) fail("horizon", "slot_hours must be > 0");
  int T = sc.horizon.num_slots;

  const json& ag = field(j, "document", "aggregator");
  sc.aggregator.c2 = vec(ag, "aggregator", "c2", T);
  sc.aggregator.c1 = vec(ag, "aggregator", "c1", T);
  sc.aggregator.c0 = vec(ag, "aggregator", "c0", T);
  sc.aggregator.grid_limit = num(ag, "aggregator", "grid_limit");
  for (double c : sc.aggregator.c2)
    if (c <= 0) fail("aggregator.c2", "curvature must be positive");
  if (sc.aggregator.grid_limit <= 0)
    fail("aggregator.grid_limit", "must be positive");

  sc.environment.t_out = vec(field(j, "document", "environment"),
                             "environment", "t_out", T);

  const json& hhs = field(j, "document", "households");
  if (!hhs.is_array()) fail("households", "expected an array");
  for (size_t i = 0; i < hhs.size(); ++i) {
    std::string where = "households[" + std::to_string(i) + "]";
    const json& hj = hhs[i];
    HouseholdSpec hh;
    hh.id = integer(hj, where, "id");
    hh.breaker_limit = num(hj, where, "breaker_limit");
    if (hh.breaker_limit <= 0) fail(where, "breaker_limit must be positive");
    if (hj.contains("pv_profile")) {
      hh.pv_profile = vec(hj, where, "pv_profile", T);
      for (double p : hh.pv_profile)
        if (p < 0) fail(where + ".pv_profile", "negative availability");
    }
    const json& devs = field(hj, where, "devices");
    if (!devs.is_array()) fail(where + ".devices", "expected an array");
    for (size_t a = 0; a < devs.size(); ++a)
      hh.devices.push_back(device_from(
          devs[a], where + ".devices[" + std::to_string(a) + "]", sc.horizon));
    sc.households.push_back(std::move(hh));
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ScenarioError("cannot open " + path);
  return load_scenario(is);
}

}  // namespace dr
