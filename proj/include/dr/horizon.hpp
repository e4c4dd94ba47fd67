#pragma once

#include <cstdint>
#include <vector>

namespace dr {

// Discrete scheduling horizon. Slot t covers hours [start_hour + t*slot_hours,
// start_hour + (t+1)*slot_hours). Index arithmetic is circular: t-1 at t=0
// refers to slot num_slots-1 (the tail of the previous, identical horizon).
struct Horizon {
  int num_slots = 24;
  double slot_hours = 1.0;   // delta_tau, hours per slot
  int start_slot = 0;        // clock hour of slot 0 divided by slot_hours

  int wrap(int t) const {
    int m = t % num_slots;
    return m < 0 ? m + num_slots : m;
  }
  int prev(int t) const { return wrap(t - 1); }
  double hour_of(int t) const { return (start_slot + t) * slot_hours; }
};

// Contiguous circular slot range [start, start+length) mod T.
// length == T means the whole horizon.
struct Window {
  int start = 0;
  int length = 0;

  int slot(const Horizon& h, int j) const { return h.wrap(start + j); }
  bool contains(const Horizon& h, int t) const {
    int d = h.wrap(t - start);
    return d < length;
  }
  // Ordered slot list, start..end following circular order.
  std::vector<int> slots(const Horizon& h) const {
    std::vector<int> out;
    out.reserve(length);
    for (int j = 0; j < length; ++j) out.push_back(slot(h, j));
    return out;
  }
};

inline Window full_window(const Horizon& h) { return Window{0, h.num_slots}; }

}  // namespace dr
