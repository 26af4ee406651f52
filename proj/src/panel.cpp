#include "geoadapt/panel.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace geoadapt {

PanelSolution solve_panel_flow(const Profile& profile, const FlowConstants& flow) {
  const size_t p = profile.panel_count();
  const double u_inf = flow.u_inf;

  Eigen::MatrixXd a_n(p, p);   // normal-velocity influence
  Eigen::MatrixXd a_t(p, p);   // tangential-velocity influence
  Eigen::VectorXd rhs(p);

  for (size_t i = 0; i < p; ++i) {
    const Vec2 m = profile.midpoints[i];
    for (size_t j = 0; j < p; ++j) {
      if (i == j) {
        // Self-induction of a constant source panel at its own midpoint.
        a_n(i, j) = 0.5;
        a_t(i, j) = 0.0;
        continue;
      }
      const Vec2 a = profile.nodes[j];
      const Vec2 t = profile.tangents[j];
      const Vec2 n = profile.normals[j];
      const double len = profile.lengths[j];
      // Panel-local coordinates of the field point.
      const Vec2 rel = m - a;
      const double x = rel.dot(t);
      const double z = rel.dot(n);
      const double r1_sq = x * x + z * z;
      const double dx2 = x - len;
      const double r2_sq = dx2 * dx2 + z * z;
      const double u_loc = (1.0 / (4.0 * M_PI)) * std::log(r1_sq / r2_sq);
      const double w_loc = (1.0 / (2.0 * M_PI)) * (std::atan2(z, dx2) - std::atan2(z, x));
      const Vec2 vel{u_loc * t.x + w_loc * n.x, u_loc * t.y + w_loc * n.y};
      a_n(i, j) = vel.dot(profile.normals[i]);
      a_t(i, j) = vel.dot(profile.tangents[i]);
    }
    rhs(i) = -u_inf * profile.normals[i].x;  // freestream along +x
  }

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a_n);
  Eigen::VectorXd sigma = lu.solve(rhs);
  if (!sigma.allFinite()) throw OracleError("solve_panel_flow: singular influence matrix");

  const double residual = (a_n * sigma - rhs).cwiseAbs().maxCoeff();
  if (residual > 1e-8 * u_inf)
    throw OracleError("solve_panel_flow: tangency residual " + fmt17(residual));

  PanelSolution sol;
  sol.sigma.assign(sigma.data(), sigma.data() + p);
  sol.v_tangent.resize(p);
  sol.cp.resize(p);
  sol.tangency_residual = residual;
  Eigen::VectorXd vt = a_t * sigma;
  for (size_t i = 0; i < p; ++i) {
    const double v = u_inf * profile.tangents[i].x + vt(i);
    sol.v_tangent[i] = v;
    sol.cp[i] = 1.0 - (v / u_inf) * (v / u_inf);
  }
  return sol;
}

}  // namespace geoadapt
