#pragma once

#include <vector>

#include "geoadapt/geometry.hpp"
#include "geoadapt/panel.hpp"

namespace geoadapt {

// One-surface Thwaites march over an arclength grid starting at s[0].
//   theta^2(s) = 0.45 nu V^-6 * integral of V^5 ds
//   lambda     = theta^2 (dV/ds) / nu, separation at the first lambda < -0.09
//   tau_w      = mu V l(lambda) / theta,  l = (lambda + 0.09)^0.62
// tau_w is zero downstream of separation.
struct ThwaitesMarch {
  std::vector<double> theta;
  std::vector<double> tau_w;
  std::vector<double> lambda;
  bool separated = false;
  size_t sep_index = 0;       // first separated grid point
  double sep_arclength = -1;  // interpolated lambda = -0.09 crossing
};

ThwaitesMarch thwaites_march(const std::vector<double>& s, const std::vector<double>& v_e,
                             const FlowConstants& flow);

// Both-surface boundary layer for a profile: locates the front stagnation
// point from the sign change of the edge velocity, marches each surface,
// and maps wall shear back onto panels oriented with the local flow.
struct BoundaryLayerResult {
  std::vector<Vec2> tau;              // per-panel wall shear vector (Pa)
  std::vector<bool> separated_mask;   // panel lies downstream of separation
  double sep_arc_upper = -1.0;        // arclength from stagnation
  double sep_arc_lower = -1.0;
  double cp_sep_upper = 1.0;          // Cp interpolated at the separation point
  double cp_sep_lower = 1.0;
  bool upper_separated = false;
  bool lower_separated = false;
  double stagnation_arclength = 0.0;  // measured from node 0 along CCW
};

BoundaryLayerResult boundary_layer(const Profile& profile, const PanelSolution& panel_sol,
                                   const FlowConstants& flow);

}  // namespace geoadapt
