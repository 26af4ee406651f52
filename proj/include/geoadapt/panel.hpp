#pragma once

#include <vector>

#include "geoadapt/geometry.hpp"

namespace geoadapt {

struct PanelSolution {
  std::vector<double> sigma;        // source strengths
  std::vector<double> v_tangent;    // signed edge velocity along the CCW tangent
  std::vector<double> cp;           // 1 - (V/U)^2
  double tangency_residual = 0.0;   // max |normal velocity| at midpoints
};

// Constant-strength source panels + uniform stream, dense LU solve.
// Flow tangency is enforced at panel midpoints.
PanelSolution solve_panel_flow(const Profile& profile, const FlowConstants& flow);

}  // namespace geoadapt
