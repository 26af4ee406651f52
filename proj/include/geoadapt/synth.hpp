#pragma once

#include <array>
#include <string>
#include <vector>

#include "geoadapt/families.hpp"
#include "geoadapt/metrics.hpp"

namespace geoadapt {

// One geometry instance with its ground-truth surface fields. Only panel
// midpoint data is persisted; nodes live in the Profile during synthesis.
struct SurfaceCase {
  std::string case_id;
  std::string family;
  std::array<double, 10> doe_params{};
  FlowConstants flow;
  std::vector<Vec2> midpoints;
  std::vector<Vec2> normals;
  std::vector<Vec2> tangents;
  std::vector<double> lengths;
  std::vector<double> pressure;  // Pa
  std::vector<Vec2> friction;    // Pa
  double sep_arc_upper = -1.0;
  double sep_arc_lower = -1.0;
  ForceBreakdown forces;

  size_t panel_count() const { return midpoints.size(); }
};

// Runs the full oracle on an arbitrary profile: panel flow, Thwaites
// boundary layer, base-pressure patch (a single constant Cp over the region
// downstream of separation, taken from the separation-point values), force
// integration. apply_base_patch = false keeps the raw inviscid pressure.
SurfaceCase synthesize_fields(const Profile& profile, const FlowConstants& flow,
                              bool apply_base_patch = true);

SurfaceCase synthesize_case(const FamilySpec& spec, const std::array<double, 10>& params,
                            const FlowConstants& flow, size_t panels,
                            bool apply_base_patch = true);

// Ground-truth invariant check used by tests and dataset generation:
// friction tangency, base-region constancy, force re-integration.
void validate_case(const SurfaceCase& c);

}  // namespace geoadapt
