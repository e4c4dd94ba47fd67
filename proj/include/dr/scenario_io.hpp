#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "dr/household.hpp"

namespace dr {

class ScenarioError : public std::runtime_error {
 public:
  explicit ScenarioError(const std::string& what) : std::runtime_error(what) {}
};

// JSON document, schema in docs/scenario_format.md. Serialization is
// deterministic (sorted keys, shortest round-trip numbers): saving the same
// scenario twice yields identical bytes, and load(save(s)) == s exactly.
void save_scenario(const Scenario& sc, std::ostream& os);
void save_scenario(const Scenario& sc, const std::string& path);

// Parses and validates. Malformed JSON, missing fields, wrong-length
// profiles, non-positive cost curvature, bad windows etc. all throw
// ScenarioError naming the offending household/device/field.
Scenario load_scenario(std::istream& is);
Scenario load_scenario(const std::string& path);

}  // namespace dr
