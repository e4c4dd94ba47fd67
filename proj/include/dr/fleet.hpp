#pragma once

#include <cstdint>

#include "dr/household.hpp"

namespace dr {

// Synthetic-population knobs. Generation is a pure function of this struct:
// same config, same bytes, on any platform or thread count.
struct FleetConfig {
  int num_households = 1;
  std::uint64_t seed = 0;
  double pv_battery_fraction = 0.40;
  double ev_fraction = 0.60;
  double ac_fraction = 0.70;
  Horizon horizon{24, 1.0, 0};

  // Per-household device counts for the full profile.
  int num_type1 = 1;
  int num_type2 = 2;
  int num_type3 = 3;

  // Compact profile: one single-level type 2, one single-level type 3, and a
  // zero-minimum AC per household; no storage, no PV. Keeps the declared
  // binary count small enough for exhaustive benchmarking at desk scale.
  bool compact = false;
};

// SplitMix64: tiny public-domain 64-bit generator. Used directly (not via
// <random> distributions) so the sampled streams are identical on every
// platform. Each household draws from its own substream keyed by
// (seed, household index), so growing the fleet never reshuffles
// earlier households.
struct SplitMix64 {
  std::uint64_t state = 0;

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  double uniform() { return (next() >> 11) * 0x1.0p-53; }  // [0,1)
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  int pick(int n) { return (int)(uniform() * n); }         // {0,..,n-1}
};

// Deterministic membership for a penetration fraction f: household i is a
// member iff floor((i+1)f+1/2) - floor(i*f+1/2) >= 1. Exactly round(f*I)
// members among the first I households, independent of I.
bool penetration_member(int household, double fraction);

// Build the synthetic population plus aggregator cost bands and environment
// tables; see docs/scenario_format.md for the resulting document.
Scenario generate(const FleetConfig& cfg);

// Clone every household `factor` times with fresh ids, no parameter jitter
// (larger systems are exact replicas, so equal prices produce equal best
// responses across clones).
Scenario replicate(const Scenario& base, int factor);

}  // namespace dr
