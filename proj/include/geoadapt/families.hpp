#pragma once

#include <array>
#include <string>
#include <vector>

#include "geoadapt/geometry.hpp"

namespace geoadapt {

// One synthetic shape family: exactly 10 DOE parameters with bounds.
struct FamilySpec {
  std::string family_id;   // F1..F5
  std::string archetype;   // superellipse | rounded-box | teardrop | notchback | thick-symmetric-foil
  std::array<std::string, 10> param_names;
  std::array<std::pair<double, double>, 10> param_bounds;

  std::array<double, 10> center_params() const {
    std::array<double, 10> c{};
    for (size_t i = 0; i < 10; ++i)
      c[i] = 0.5 * (param_bounds[i].first + param_bounds[i].second);
    return c;
  }
};

const std::vector<FamilySpec>& five_families();
const FamilySpec& family_by_id(const std::string& id);

// Builds the closed CCW profile for a parameter vector. Parameters must lie
// within the family bounds (ConfigError otherwise); geometric invariant
// violations raise RejectedGeometryError naming the parameter vector.
Profile build_profile(const FamilySpec& spec, const std::array<double, 10>& params,
                      size_t panels = 200);

}  // namespace geoadapt
