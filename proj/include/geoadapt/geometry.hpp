#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "geoadapt/common.hpp"

namespace geoadapt {

struct Vec2 {
  double x = 0.0, y = 0.0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::sqrt(x * x + y * y); }
};

struct FlowConstants {
  double u_inf = 30.0;   // m/s
  double rho = 1.2;      // kg/m^3
  double nu = 1.5e-5;    // m^2/s
  double p_ref = 0.0;    // gauge reference, fixed 0

  double dynamic_pressure() const { return 0.5 * rho * u_inf * u_inf; }
  double mu() const { return rho * nu; }
};

// Closed 2D profile discretized into straight panels. Nodes are ordered
// counterclockwise; panel i runs from node i to node i+1 (mod P). Normals
// point outward.
struct Profile {
  std::vector<Vec2> nodes;
  std::vector<Vec2> midpoints;
  std::vector<Vec2> normals;
  std::vector<Vec2> tangents;
  std::vector<double> lengths;

  size_t panel_count() const { return nodes.size(); }
  double signed_area() const;
  double total_arclength() const;
  Vec2 closure_sum() const;  // sum of n * ds over panels
  std::array<double, 4> bbox() const;  // xmin, xmax, ymin, ymax
  double aspect_ratio() const;
  bool is_simple() const;

  // Computes panel quantities and enforces the profile invariants
  // (simple, CCW, aspect ratio, smooth node spacing). Throws
  // RejectedGeometryError on violation.
  static Profile from_nodes(std::vector<Vec2> nodes, const std::string& context = "");
};

// Uniform-arclength resampling of a dense closed polyline to p points.
std::vector<Vec2> resample_closed(const std::vector<Vec2>& dense, size_t p);

// Brute-force symmetric Hausdorff distance between two point sets.
double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b);

}  // namespace geoadapt
