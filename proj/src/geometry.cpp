#include "geoadapt/geometry.hpp"

#include <algorithm>
#include <limits>

namespace geoadapt {

double Profile::signed_area() const {
  double acc = 0.0;
  const size_t p = nodes.size();
  for (size_t i = 0; i < p; ++i) {
    const Vec2& a = nodes[i];
    const Vec2& b = nodes[(i + 1) % p];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

double Profile::total_arclength() const {
  double acc = 0.0;
  for (double l : lengths) acc += l;
  return acc;
}

Vec2 Profile::closure_sum() const {
  Vec2 acc;
  for (size_t i = 0; i < normals.size(); ++i) acc = acc + normals[i] * lengths[i];
  return acc;
}

std::array<double, 4> Profile::bbox() const {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const Vec2& v : nodes) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
    ymin = std::min(ymin, v.y);
    ymax = std::max(ymax, v.y);
  }
  return {xmin, xmax, ymin, ymax};
}

double Profile::aspect_ratio() const {
  auto b = bbox();
  const double h = b[3] - b[2];
  if (h <= 0.0) return std::numeric_limits<double>::infinity();
  return (b[1] - b[0]) / h;
}

namespace {

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  auto cross = [](Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; };
  const Vec2 r = p2 - p1, s = q2 - q1;
  const double denom = cross(r, s);
  const Vec2 qp = q1 - p1;
  if (denom == 0.0) return false;  // parallel: treated as non-crossing
  const double t = cross(qp, s) / denom;
  const double u = cross(qp, r) / denom;
  return t > 0.0 && t < 1.0 && u > 0.0 && u < 1.0;
}

}  // namespace

bool Profile::is_simple() const {
  const size_t p = nodes.size();
  for (size_t i = 0; i < p; ++i) {
    for (size_t j = i + 1; j < p; ++j) {
      // Skip adjacent panels (shared endpoint).
      if (j == i + 1 || (i == 0 && j == p - 1)) continue;
      if (segments_intersect(nodes[i], nodes[(i + 1) % p], nodes[j], nodes[(j + 1) % p]))
        return false;
    }
  }
  return true;
}

Profile Profile::from_nodes(std::vector<Vec2> in_nodes, const std::string& context) {
  Profile prof;
  prof.nodes = std::move(in_nodes);
  const size_t p = prof.nodes.size();
  if (p < 8) throw RejectedGeometryError("profile" + context + ": too few nodes");

  prof.midpoints.resize(p);
  prof.normals.resize(p);
  prof.tangents.resize(p);
  prof.lengths.resize(p);
  for (size_t i = 0; i < p; ++i) {
    const Vec2& a = prof.nodes[i];
    const Vec2& b = prof.nodes[(i + 1) % p];
    const Vec2 d = b - a;
    const double len = d.norm();
    if (len <= 0.0) throw RejectedGeometryError("profile" + context + ": degenerate panel");
    prof.lengths[i] = len;
    prof.midpoints[i] = (a + b) * 0.5;
    prof.tangents[i] = d * (1.0 / len);
    // CCW ordering: rotating the tangent by -90 degrees points outward.
    prof.normals[i] = {prof.tangents[i].y, -prof.tangents[i].x};
  }

  if (prof.signed_area() <= 0.0)
    throw RejectedGeometryError("profile" + context + ": not counterclockwise");
  const double ar = prof.aspect_ratio();
  if (ar < 1.2 || ar > 6.0)
    throw RejectedGeometryError("profile" + context + ": aspect ratio " + fmt17(ar) +
                                " outside [1.2, 6]");
  for (size_t i = 0; i < p; ++i) {
    const double r = prof.lengths[i] / prof.lengths[(i + 1) % p];
    if (r > 1.5 || r < 1.0 / 1.5)
      throw RejectedGeometryError("profile" + context + ": panel length ratio " + fmt17(r));
  }
  if (!prof.is_simple())
    throw RejectedGeometryError("profile" + context + ": self-intersecting");
  return prof;
}

std::vector<Vec2> resample_closed(const std::vector<Vec2>& dense, size_t p) {
  const size_t n = dense.size();
  if (n < 3) throw RejectedGeometryError("resample_closed: dense curve too short");
  std::vector<double> cum(n + 1, 0.0);
  for (size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + (dense[(i + 1) % n] - dense[i]).norm();
  const double total = cum[n];
  std::vector<Vec2> out(p);
  size_t seg = 0;
  for (size_t j = 0; j < p; ++j) {
    const double target = total * static_cast<double>(j) / static_cast<double>(p);
    while (seg + 1 < n && cum[seg + 1] < target) ++seg;
    const double seg_len = cum[seg + 1] - cum[seg];
    const double t = seg_len > 0.0 ? (target - cum[seg]) / seg_len : 0.0;
    out[j] = dense[seg] + (dense[(seg + 1) % n] - dense[seg]) * t;
  }
  return out;
}

double hausdorff_distance(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  auto directed = [](const std::vector<Vec2>& from, const std::vector<Vec2>& to) {
    double worst = 0.0;
    for (const Vec2& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec2& q : to) best = std::min(best, (p - q).norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

}  // namespace geoadapt
