#include "geoadapt/synth.hpp"

#include <cmath>

#include "geoadapt/panel.hpp"
#include "geoadapt/thwaites.hpp"

namespace geoadapt {

SurfaceCase synthesize_fields(const Profile& prof, const FlowConstants& flow,
                              bool apply_base_patch) {
  PanelSolution sol = solve_panel_flow(prof, flow);
  BoundaryLayerResult bl = boundary_layer(prof, sol, flow);

  std::vector<double> cp = sol.cp;
  if (apply_base_patch) {
    // A single base pressure over the whole separated region: the mean of
    // the separation-point Cp values of the surfaces that separated.
    double cp_base = 0.0;
    int n_sep = 0;
    if (bl.upper_separated) {
      cp_base += bl.cp_sep_upper;
      ++n_sep;
    }
    if (bl.lower_separated) {
      cp_base += bl.cp_sep_lower;
      ++n_sep;
    }
    if (n_sep > 0) {
      cp_base /= static_cast<double>(n_sep);
      for (size_t i = 0; i < cp.size(); ++i)
        if (bl.separated_mask[i]) cp[i] = cp_base;
    }
  }

  SurfaceCase c;
  c.flow = flow;
  c.midpoints = prof.midpoints;
  c.normals = prof.normals;
  c.tangents = prof.tangents;
  c.lengths = prof.lengths;
  c.sep_arc_upper = bl.sep_arc_upper;
  c.sep_arc_lower = bl.sep_arc_lower;

  const double q = flow.dynamic_pressure();
  c.pressure.resize(cp.size());
  for (size_t i = 0; i < cp.size(); ++i) c.pressure[i] = q * cp[i] + flow.p_ref;
  c.friction = bl.tau;
  c.forces = integrate_forces(c.pressure, c.friction, c.normals, c.lengths);
  return c;
}

SurfaceCase synthesize_case(const FamilySpec& spec, const std::array<double, 10>& params,
                            const FlowConstants& flow, size_t panels, bool apply_base_patch) {
  Profile prof = build_profile(spec, params, panels);
  SurfaceCase c = synthesize_fields(prof, flow, apply_base_patch);
  c.family = spec.family_id;
  c.doe_params = params;
  return c;
}

void validate_case(const SurfaceCase& c) {
  const size_t p = c.panel_count();
  for (size_t i = 0; i < p; ++i) {
    // Friction is tangent to the surface.
    if (std::abs(c.friction[i].dot(c.normals[i])) > 1e-10)
      throw OracleError("surface case: friction not tangent at panel " + std::to_string(i));
  }
  // Re-integration reproduces stored forces.
  ForceBreakdown fb = integrate_forces(c.pressure, c.friction, c.normals, c.lengths);
  if (std::abs(fb.d_pressure - c.forces.d_pressure) > 1e-9 ||
      std::abs(fb.d_shear - c.forces.d_shear) > 1e-9 ||
      std::abs(fb.d_total - c.forces.d_total) > 1e-9)
    throw OracleError("surface case: stored forces do not match re-integration");
  // Base region (zero-friction panels downstream of separation) holds a
  // single constant pressure.
  double base_p = 0.0;
  bool seen = false;
  for (size_t i = 0; i < p; ++i) {
    const bool in_base = c.friction[i].norm() == 0.0 && c.pressure[i] < 0.0;
    if (!in_base) continue;
    if (!seen) {
      base_p = c.pressure[i];
      seen = true;
    } else if (std::abs(c.pressure[i] - base_p) > 1e-10) {
      throw OracleError("surface case: base pressure not constant");
    }
  }
}

}  // namespace geoadapt
