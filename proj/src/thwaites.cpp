#include "geoadapt/thwaites.hpp"

#include <algorithm>
#include <cmath>

namespace geoadapt {

ThwaitesMarch thwaites_march(const std::vector<double>& s, const std::vector<double>& v_e,
                             const FlowConstants& flow) {
  const size_t n = s.size();
  if (n < 2 || v_e.size() != n) throw OracleError("thwaites_march: bad grid");
  const double nu = flow.nu;
  const double mu = flow.mu();
  const double v_tiny = 1e-12 * flow.u_inf;

  std::vector<double> dvds(n);
  for (size_t i = 0; i < n; ++i) {
    if (i == 0)
      dvds[i] = (v_e[1] - v_e[0]) / (s[1] - s[0]);
    else if (i == n - 1)
      dvds[i] = (v_e[i] - v_e[i - 1]) / (s[i] - s[i - 1]);
    else
      dvds[i] = (v_e[i + 1] - v_e[i - 1]) / (s[i + 1] - s[i - 1]);
  }

  ThwaitesMarch out;
  out.theta.assign(n, 0.0);
  out.tau_w.assign(n, 0.0);
  out.lambda.assign(n, 0.0);

  double integral = 0.0;  // running integral of V^5 ds
  double prev_v5 = std::pow(std::max(v_e[0], 0.0), 5);
  for (size_t i = 0; i < n; ++i) {
    if (i > 0) {
      const double v5 = std::pow(std::max(v_e[i], 0.0), 5);
      integral += 0.5 * (prev_v5 + v5) * (s[i] - s[i - 1]);
      prev_v5 = v5;
    }

    if (!out.separated && i > 0 && v_e[i] <= 0.0)
      throw OracleError("thwaites_march: edge velocity fell to zero before separation");

    double theta2;
    if (v_e[i] <= v_tiny) {
      // Stagnation-point limit of the Thwaites integral (V ~ k s).
      const double k = std::max(dvds[i], 1e-30);
      theta2 = 0.075 * nu / k;
    } else {
      theta2 = 0.45 * nu * integral / std::pow(v_e[i], 6);
    }
    out.theta[i] = std::sqrt(std::max(theta2, 0.0));
    out.lambda[i] = theta2 * dvds[i] / nu;

    if (!out.separated && out.lambda[i] < -0.09) {
      out.separated = true;
      out.sep_index = i;
      if (i == 0) {
        out.sep_arclength = s[0];
      } else {
        const double l0 = out.lambda[i - 1], l1 = out.lambda[i];
        const double t = (l0 - (-0.09)) / (l0 - l1);
        out.sep_arclength = s[i - 1] + t * (s[i] - s[i - 1]);
      }
    }

    if (out.separated && i >= out.sep_index) {
      out.tau_w[i] = 0.0;
    } else {
      const double l_corr = std::pow(std::max(out.lambda[i] + 0.09, 0.0), 0.62);
      out.tau_w[i] = out.theta[i] > 1e-14 ? mu * v_e[i] * l_corr / out.theta[i] : 0.0;
    }
  }
  return out;
}

namespace {

struct Crossing {
  size_t k;      // between midpoints k and k+1 (mod P)
  double frac;   // interpolation fraction from midpoint k
  double x;      // interpolated x position
};

}  // namespace

BoundaryLayerResult boundary_layer(const Profile& profile, const PanelSolution& panel_sol,
                                   const FlowConstants& flow) {
  const size_t p = profile.panel_count();
  const std::vector<double>& v = panel_sol.v_tangent;

  // Arclength of each midpoint from node 0.
  std::vector<double> s_mid(p);
  {
    double acc = 0.0;
    for (size_t i = 0; i < p; ++i) {
      s_mid[i] = acc + 0.5 * profile.lengths[i];
      acc += profile.lengths[i];
    }
  }
  const double total = profile.total_arclength();

  std::vector<Crossing> crossings;
  for (size_t k = 0; k < p; ++k) {
    const size_t k1 = (k + 1) % p;
    if (v[k] == 0.0 || v[k] * v[k1] >= 0.0) continue;
    const double frac = std::abs(v[k]) / (std::abs(v[k]) + std::abs(v[k1]));
    const double x = profile.midpoints[k].x +
                     frac * (profile.midpoints[k1].x - profile.midpoints[k].x);
    crossings.push_back({k, frac, x});
  }
  if (crossings.size() < 2)
    throw OracleError("boundary_layer: could not locate stagnation points");

  const Crossing front = *std::min_element(crossings.begin(), crossings.end(),
                                           [](const Crossing& a, const Crossing& b) {
                                             return a.x < b.x;
                                           });
  const Crossing rear = *std::max_element(crossings.begin(), crossings.end(),
                                          [](const Crossing& a, const Crossing& b) {
                                            return a.x < b.x;
                                          });

  auto seg_between = [&](size_t a, size_t b) {
    // arclength from midpoint a to midpoint b walking forward (CCW)
    double d = s_mid[b] - s_mid[a];
    if (d < 0) d += total;
    return d;
  };

  const double s_stag =
      s_mid[front.k] + front.frac * seg_between(front.k, (front.k + 1) % p);

  BoundaryLayerResult out;
  out.tau.assign(p, Vec2{0.0, 0.0});
  out.separated_mask.assign(p, false);
  out.stagnation_arclength = s_stag > total ? s_stag - total : s_stag;

  struct SurfaceResult {
    std::vector<size_t> panels;
    double sep_arc = -1.0;
    double cp_sep = 1.0;
    bool separated = false;
    double mean_y = 0.0;
  };

  // Walk one surface from the stagnation point. dir = +1 follows increasing
  // panel index (CCW), dir = -1 the reverse.
  auto march_side = [&](int dir) {
    SurfaceResult res;
    std::vector<double> grid_s{0.0};
    std::vector<double> grid_v{0.0};
    std::vector<size_t> order;

    size_t idx = dir > 0 ? (front.k + 1) % p : front.k;
    double s_run = dir > 0
                       ? (1.0 - front.frac) * seg_between(front.k, (front.k + 1) % p)
                       : front.frac * seg_between(front.k, (front.k + 1) % p);
    const size_t stop = dir > 0 ? rear.k : (rear.k + 1) % p;
    for (size_t guard = 0; guard < p; ++guard) {
      order.push_back(idx);
      grid_s.push_back(s_run);
      grid_v.push_back(std::abs(v[idx]));
      if (idx == stop) break;
      const size_t nxt = dir > 0 ? (idx + 1) % p : (idx + p - 1) % p;
      s_run += dir > 0 ? seg_between(idx, nxt) : seg_between(nxt, idx);
      idx = nxt;
    }

    ThwaitesMarch m = thwaites_march(grid_s, grid_v, flow);
    res.panels = order;
    res.separated = m.separated;
    if (m.separated) {
      res.sep_arc = m.sep_arclength;
      // Cp interpolated at the separation arclength.
      size_t hi = m.sep_index == 0 ? 1 : m.sep_index;
      size_t gi0 = hi - 1, gi1 = hi;
      const double t = (m.sep_arclength - grid_s[gi0]) /
                       std::max(grid_s[gi1] - grid_s[gi0], 1e-30);
      auto cp_at = [&](size_t gi) {
        if (gi == 0) return 1.0;  // stagnation point
        return panel_sol.cp[order[gi - 1]];
      };
      res.cp_sep = cp_at(gi0) + t * (cp_at(gi1) - cp_at(gi0));
    }
    double ysum = 0.0;
    for (size_t i = 0; i < order.size(); ++i) {
      const size_t panel = order[i];
      const size_t gi = i + 1;
      const bool downstream = m.separated && gi >= m.sep_index;
      out.separated_mask[panel] = out.separated_mask[panel] || downstream;
      if (!downstream) {
        const double sign = v[panel] >= 0.0 ? 1.0 : -1.0;
        out.tau[panel] = profile.tangents[panel] * (sign * m.tau_w[gi]);
      }
      ysum += profile.midpoints[panel].y;
    }
    res.mean_y = order.empty() ? 0.0 : ysum / static_cast<double>(order.size());
    return res;
  };

  SurfaceResult fwd = march_side(+1);
  SurfaceResult bwd = march_side(-1);
  const SurfaceResult& upper = fwd.mean_y >= bwd.mean_y ? fwd : bwd;
  const SurfaceResult& lower = fwd.mean_y >= bwd.mean_y ? bwd : fwd;
  out.sep_arc_upper = upper.sep_arc;
  out.sep_arc_lower = lower.sep_arc;
  out.cp_sep_upper = upper.cp_sep;
  out.cp_sep_lower = lower.cp_sep;
  out.upper_separated = upper.separated;
  out.lower_separated = lower.separated;
  return out;
}

}  // namespace geoadapt
