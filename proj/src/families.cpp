#include "geoadapt/families.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace geoadapt {

namespace {

constexpr size_t kDense = 4096;

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double signed_pow(double v, double e) {
  return v >= 0.0 ? std::pow(v, e) : -std::pow(-v, e);
}

void append_point(std::vector<Vec2>& pts, Vec2 p) {
  if (!pts.empty() && (pts.back() - p).norm() < 1e-12) return;
  pts.push_back(p);
}

// --- generic top/bottom sweep with optional superellipse end caps ---------
//
// Sweeps u in [0,1] mapped onto x in [x_front, x_rear]; the closed loop runs
// bottom (u: 0 -> 1), rear cap, top (u: 1 -> 0), front cap. Caps are
// superellipse arcs bulging outward in x; a cap with protrusion <= 0 is
// skipped (surfaces meet at that end).
struct SweepSpec {
  std::function<double(double)> y_top;
  std::function<double(double)> y_bot;
  double x_front = 0.0, x_rear = 0.0;
  double front_protrusion = 0.0, rear_protrusion = 0.0;
  double front_exponent = 2.0, rear_exponent = 2.0;
};

std::vector<Vec2> sweep_closed(const SweepSpec& sp) {
  const size_t half = kDense / 2;
  std::vector<Vec2> pts;
  pts.reserve(kDense + 256);
  auto x_of = [&](double u) { return sp.x_front + (sp.x_rear - sp.x_front) * u; };
  // Cosine clustering refines both ends of the sweep.
  auto u_of = [&](size_t i) {
    const double t = static_cast<double>(i) / static_cast<double>(half - 1);
    return 0.5 * (1.0 - std::cos(M_PI * t));
  };

  for (size_t i = 0; i < half; ++i) {
    const double u = u_of(i);
    append_point(pts, {x_of(u), sp.y_bot(u)});
  }
  if (sp.rear_protrusion > 0.0) {
    const double mid = 0.5 * (sp.y_top(1.0) + sp.y_bot(1.0));
    const double hh = 0.5 * (sp.y_top(1.0) - sp.y_bot(1.0));
    const double e = 2.0 / sp.rear_exponent;
    for (size_t i = 1; i + 1 < 128; ++i) {
      const double phi = -M_PI_2 + M_PI * static_cast<double>(i) / 127.0;
      append_point(pts, {sp.x_rear + sp.rear_protrusion * std::pow(std::cos(phi), e),
                         mid + hh * signed_pow(std::sin(phi), e)});
    }
  }
  for (size_t i = 0; i < half; ++i) {
    const double u = u_of(half - 1 - i);
    append_point(pts, {x_of(u), sp.y_top(u)});
  }
  if (sp.front_protrusion > 0.0) {
    const double mid = 0.5 * (sp.y_top(0.0) + sp.y_bot(0.0));
    const double hh = 0.5 * (sp.y_top(0.0) - sp.y_bot(0.0));
    const double e = 2.0 / sp.front_exponent;
    for (size_t i = 1; i + 1 < 128; ++i) {
      const double phi = M_PI_2 + M_PI * static_cast<double>(i) / 127.0;
      append_point(pts, {sp.x_front - sp.front_protrusion * std::pow(-std::cos(phi), e),
                         mid + hh * signed_pow(std::sin(phi), e)});
    }
  }
  if (!pts.empty() && (pts.back() - pts.front()).norm() < 1e-12) pts.pop_back();
  return pts;
}

// --- F1: piecewise superellipse ------------------------------------------

std::vector<Vec2> gen_superellipse(const std::array<double, 10>& p) {
  const double a_f = p[0], b = p[1];
  const double n_ft = p[2], n_fb = p[3], n_rt = p[4], n_rb = p[5];
  const double camber = p[6], taper = p[7], stretch = p[8], y_off = p[9];
  const double a_r = a_f * stretch;

  std::vector<Vec2> pts;
  pts.reserve(kDense);
  for (size_t i = 0; i < kDense; ++i) {
    const double th = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(kDense);
    const double c = std::cos(th), s = std::sin(th);
    const bool front = c < 0.0;
    const double a_q = front ? a_f : a_r;
    const double n_q = front ? (s >= 0.0 ? n_ft : n_fb) : (s >= 0.0 ? n_rt : n_rb);
    const double e = 2.0 / n_q;
    double x = signed_pow(c, e) * a_q;
    double y = signed_pow(s, e) * b;
    if (x > 0.0) {
      const double xr = x / a_r;
      y *= 1.0 - (1.0 - taper) * xr * xr;
    }
    const double xa = x < 0.0 ? x / a_f : x / a_r;
    y += camber * b * (1.0 - xa * xa);
    append_point(pts, {x, y + y_off});
  }
  return pts;
}

// --- F2: rounded box with filleted corners --------------------------------

void emit_fillet_path(std::vector<Vec2>& out, const std::vector<Vec2>& verts,
                      const std::vector<double>& radii) {
  const size_t n = verts.size();
  struct Corner {
    Vec2 p_in, p_out, center;
    double a0, a1;
  };
  std::vector<Corner> corners(n);
  for (size_t i = 0; i < n; ++i) {
    const Vec2 prev = verts[(i + n - 1) % n];
    const Vec2 cur = verts[i];
    const Vec2 next = verts[(i + 1) % n];
    Vec2 u = cur - prev;
    Vec2 v = next - cur;
    const double lu = u.norm(), lv = v.norm();
    u = u * (1.0 / lu);
    v = v * (1.0 / lv);
    const double cosang = std::clamp(u.dot(v), -1.0, 1.0);
    const double turn = std::acos(cosang);  // exterior turn angle (CCW convex)
    const double r = radii[i];
    const double t = r * std::tan(0.5 * turn);
    if (t > 0.48 * lu || t > 0.48 * lv)
      throw RejectedGeometryError("rounded-box: fillet exceeds edge length");
    Corner c;
    c.p_in = cur - u * t;
    c.p_out = cur + v * t;
    const Vec2 n_in{-u.y, u.x};  // left normal: fillet center lies inside
    c.center = c.p_in + n_in * r;
    c.a0 = std::atan2(c.p_in.y - c.center.y, c.p_in.x - c.center.x);
    c.a1 = std::atan2(c.p_out.y - c.center.y, c.p_out.x - c.center.x);
    while (c.a1 < c.a0) c.a1 += 2.0 * M_PI;  // CCW sweep
    corners[i] = c;
  }
  const size_t steps_line = 160, steps_arc = 72;
  for (size_t i = 0; i < n; ++i) {
    const Corner& c = corners[i];
    const Corner& nxt = corners[(i + 1) % n];
    const double r = radii[i];
    for (size_t k = 0; k < steps_arc; ++k) {
      const double a = c.a0 + (c.a1 - c.a0) * static_cast<double>(k) /
                                  static_cast<double>(steps_arc - 1);
      append_point(out, {c.center.x + r * std::cos(a), c.center.y + r * std::sin(a)});
    }
    for (size_t k = 1; k < steps_line; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(steps_line);
      append_point(out, c.p_out + (nxt.p_in - c.p_out) * t);
    }
  }
}

std::vector<Vec2> gen_rounded_box(const std::array<double, 10>& p) {
  const double L = p[0], H = p[1];
  const double r_fl = p[2] * 0.5 * H, r_fu = p[3] * 0.5 * H;
  const double r_ru = p[4] * 0.5 * H, r_rl = p[5] * 0.5 * H;
  const double slant_f = p[6] * 0.30 * L, slant_r = p[7] * 0.30 * L;
  const double bulge = p[8], y_off = p[9];

  // CCW: bottom-front, bottom-rear, top-rear, top-front.
  std::vector<Vec2> verts = {{-0.5 * L, -0.5 * H},
                             {0.5 * L, -0.5 * H},
                             {0.5 * L - slant_r, 0.5 * H},
                             {-0.5 * L + slant_f, 0.5 * H}};
  std::vector<double> radii = {r_fl, r_rl, r_ru, r_fu};
  std::vector<Vec2> pts;
  pts.reserve(4 * (160 + 72));
  emit_fillet_path(pts, verts, radii);

  for (Vec2& v : pts) {
    const double up = std::clamp((v.y + 0.5 * H) / H, 0.0, 1.0);
    const double cx = std::cos(M_PI * v.x / L);
    v.y += bulge * H * up * up * cx * cx;
    v.y += y_off;
  }
  return pts;
}

// --- F3: teardrop (thickness + camber distribution, blunt base) -----------

std::vector<Vec2> gen_teardrop(const std::array<double, 10>& p) {
  const double L = p[0], T = p[1];
  const double nose_pow = p[2], tail_pow = p[3], chord_pow = p[4];
  const double camber = p[5], skew = p[6];
  const double base_frac = p[7], base_exp = p[8], y_off = p[9];

  const double u_star = nose_pow / (nose_pow + tail_pow);
  const double f_max = std::pow(u_star, nose_pow) * std::pow(1.0 - u_star, tail_pow);
  const double u_max = 1.0 - base_frac;

  auto half_thick = [&](double u) {
    const double uc = std::pow(std::clamp(u, 0.0, 1.0), chord_pow);
    return 0.5 * T * std::pow(uc, nose_pow) * std::pow(1.0 - uc, tail_pow) / f_max;
  };
  auto camber_line = [&](double u) {
    return 4.0 * camber * T * u * (1.0 - u) * (1.0 + skew * (2.0 * u - 1.0));
  };

  SweepSpec sp;
  sp.x_front = -0.5 * L;
  sp.x_rear = -0.5 * L + u_max * L;
  sp.y_top = [&, y_off](double u) {
    const double uu = u * u_max;
    return camber_line(uu) + half_thick(uu) + y_off;
  };
  sp.y_bot = [&, y_off](double u) {
    const double uu = u * u_max;
    return camber_line(uu) - half_thick(uu) + y_off;
  };
  sp.rear_protrusion = 0.6 * half_thick(u_max);
  sp.rear_exponent = base_exp;
  sp.front_protrusion = 0.0;  // nose closes smoothly (half thickness -> 0)
  return sweep_closed(sp);
}

// --- F4: notchback silhouette ---------------------------------------------

std::vector<Vec2> gen_notchback(const std::array<double, 10>& p) {
  const double L = p[0], hb = p[1], hc = p[2];
  const double u_cf = p[3], u_cl = p[4], steep = p[5];
  const double notch_drop = p[6], nose_exp = p[7], tail_taper = p[8], y_off = p[9];

  const double wsr = 0.05 + 0.11 * (1.0 - steep);  // windshield run
  const double rr = 0.07;                          // rear-window run
  const double u_cr = u_cf + u_cl;
  const double center = 0.5 * (hb + hc);

  auto y_top = [&](double u) {
    const double body = hb * (0.90 + 0.10 * smoothstep(u / 0.15));
    const double cabin =
        hc * smoothstep((u - u_cf) / wsr) * (1.0 - notch_drop * smoothstep((u - u_cr) / rr));
    const double taper = 1.0 - tail_taper * smoothstep((u - 0.82) / 0.18);
    return (body + cabin) * taper - center + y_off;
  };
  auto y_bot = [&](double u) {
    // Mild approach/departure lift at both ends of the underbody.
    const double lift = 0.08 * hb * smoothstep((0.06 - u) / 0.06) +
                        0.10 * hb * smoothstep((u - 0.88) / 0.12);
    return lift - center + y_off;
  };

  const double hh_front = 0.5 * (y_top(0.0) - y_bot(0.0));
  const double hh_rear = 0.5 * (y_top(1.0) - y_bot(1.0));
  SweepSpec sp;
  sp.front_protrusion = 0.9 * hh_front;
  sp.rear_protrusion = 0.55 * hh_rear;
  sp.x_front = -0.5 * L + sp.front_protrusion;
  sp.x_rear = 0.5 * L - sp.rear_protrusion;
  sp.front_exponent = nose_exp;
  sp.rear_exponent = 1.8;
  sp.y_top = y_top;
  sp.y_bot = y_bot;
  return sweep_closed(sp);
}

// --- F5: thick symmetric foil ----------------------------------------------

std::vector<Vec2> gen_foil(const std::array<double, 10>& p) {
  const double L = p[0], tr = p[1];
  const double a0 = 0.2969 * p[2];
  const double a1 = -0.1260 + p[3];
  const double a2 = -0.3516 + p[4];
  const double a3 = 0.2843 + p[5];
  const double a4 = -(a0 + a1 + a2 + a3);  // closes the trailing edge
  const double chord_pow = p[6], b1 = p[7], b2 = p[8], y_off = p[9];
  const double T = tr * L;

  auto shape = [&](double u) {
    const double uc = std::pow(std::clamp(u, 0.0, 1.0), chord_pow);
    const double poly = a0 * std::sqrt(uc) + a1 * uc + a2 * uc * uc + a3 * uc * uc * uc +
                        a4 * uc * uc * uc * uc;
    return poly + b1 * std::sin(M_PI * u) * 0.1 + b2 * std::sin(2.0 * M_PI * u) * 0.1;
  };
  double g_max = 0.0, g_min = 1e9;
  for (int i = 1; i < 512; ++i) {
    const double g = shape(static_cast<double>(i) / 512.0);
    g_max = std::max(g_max, g);
    if (i < 505) g_min = std::min(g_min, g);
  }
  if (g_min <= 1e-4)
    throw RejectedGeometryError("foil: thickness distribution pinches to zero");

  const double u_max = 0.985;
  auto half_thick = [&](double u) { return 0.5 * T * shape(u * u_max) / g_max; };

  SweepSpec sp;
  sp.x_front = -0.5 * L;
  sp.x_rear = 0.5 * L;
  sp.y_top = [&, y_off](double u) { return half_thick(u) + y_off; };
  sp.y_bot = [&, y_off](double u) { return -half_thick(u) + y_off; };
  sp.rear_protrusion = 0.6 * half_thick(1.0);
  sp.rear_exponent = 2.0;
  return sweep_closed(sp);
}

std::vector<FamilySpec> make_families() {
  std::vector<FamilySpec> fams(5);

  fams[0].family_id = "F1";
  fams[0].archetype = "superellipse";
  fams[0].param_names = {"front_semi_length", "semi_height",      "nose_top_fullness",
                         "nose_bottom_fullness", "tail_top_fullness", "tail_bottom_fullness",
                         "camber",            "rear_taper",       "rear_stretch",
                         "ground_offset"};
  fams[0].param_bounds = {{{1.5, 2.0},
                           {0.42, 1.0},
                           {1.7, 2.4},
                           {1.7, 2.4},
                           {1.7, 2.4},
                           {1.7, 2.4},
                           {-0.08, 0.10},
                           {0.78, 1.0},
                           {0.85, 1.15},
                           {-0.15, 0.25}}};

  fams[1].family_id = "F2";
  fams[1].archetype = "rounded-box";
  fams[1].param_names = {"length",       "height",        "nose_lower_radius", "nose_upper_radius",
                         "tail_upper_radius", "tail_lower_radius", "front_slant",  "rear_slant",
                         "roof_bulge",   "ground_offset"};
  fams[1].param_bounds = {{{3.6, 5.2},
                           {1.00, 1.45},
                           {0.25, 0.50},
                           {0.25, 0.50},
                           {0.18, 0.45},
                           {0.18, 0.45},
                           {0.0, 0.30},
                           {0.0, 0.30},
                           {0.0, 0.10},
                           {-0.15, 0.25}}};

  fams[2].family_id = "F3";
  fams[2].archetype = "teardrop";
  fams[2].param_names = {"length",      "thickness",   "nose_power",  "tail_power",
                         "chord_power", "camber",      "camber_skew", "base_fraction",
                         "base_exponent", "ground_offset"};
  fams[2].param_bounds = {{{3.0, 4.2},
                           {0.80, 1.10},
                           {0.45, 0.62},
                           {0.85, 1.35},
                           {0.85, 1.20},
                           {-0.05, 0.09},
                           {-0.5, 0.5},
                           {0.03, 0.10},
                           {1.6, 2.6},
                           {-0.15, 0.25}}};

  fams[3].family_id = "F4";
  fams[3].archetype = "notchback";
  fams[3].param_names = {"length",       "body_height", "cabin_height",  "cabin_front",
                         "cabin_length", "windshield_steepness", "notch_drop", "nose_fullness",
                         "tail_taper",   "ground_offset"};
  fams[3].param_bounds = {{{4.2, 5.6},
                           {0.85, 1.15},
                           {0.38, 0.62},
                           {0.28, 0.40},
                           {0.24, 0.36},
                           {0.3, 0.8},
                           {0.55, 0.90},
                           {1.6, 2.6},
                           {0.06, 0.18},
                           {-0.15, 0.25}}};

  fams[4].family_id = "F5";
  fams[4].archetype = "thick-symmetric-foil";
  fams[4].param_names = {"length",       "thickness_ratio", "nose_radius_scale", "coeff1_delta",
                         "coeff2_delta", "coeff3_delta",    "chord_power",       "bump_fore_aft",
                         "bump_symmetric", "ground_offset"};
  fams[4].param_bounds = {{{2.4, 3.6},
                           {0.32, 0.45},
                           {0.85, 1.15},
                           {-0.02, 0.02},
                           {-0.05, 0.05},
                           {-0.05, 0.05},
                           {0.88, 1.12},
                           {-0.03, 0.05},
                           {-0.03, 0.03},
                           {-0.10, 0.20}}};

  return fams;
}

}  // namespace

const std::vector<FamilySpec>& five_families() {
  static const std::vector<FamilySpec> fams = make_families();
  return fams;
}

const FamilySpec& family_by_id(const std::string& id) {
  for (const FamilySpec& f : five_families())
    if (f.family_id == id) return f;
  throw ConfigError("unknown family id: " + id);
}

Profile build_profile(const FamilySpec& spec, const std::array<double, 10>& params,
                      size_t panels) {
  for (size_t i = 0; i < 10; ++i) {
    const auto [lo, hi] = spec.param_bounds[i];
    if (params[i] < lo - 1e-12 || params[i] > hi + 1e-12)
      throw ConfigError("build_profile: parameter '" + spec.param_names[i] + "' = " +
                        fmt17(params[i]) + " outside [" + fmt17(lo) + ", " + fmt17(hi) + "]");
  }

  std::vector<Vec2> dense;
  if (spec.archetype == "superellipse") dense = gen_superellipse(params);
  else if (spec.archetype == "rounded-box") dense = gen_rounded_box(params);
  else if (spec.archetype == "teardrop") dense = gen_teardrop(params);
  else if (spec.archetype == "notchback") dense = gen_notchback(params);
  else if (spec.archetype == "thick-symmetric-foil") dense = gen_foil(params);
  else throw ConfigError("build_profile: unknown archetype " + spec.archetype);

  std::string ctx = " (" + spec.family_id + ": params";
  for (double v : params) ctx += " " + fmt17(v);
  ctx += ")";
  return Profile::from_nodes(resample_closed(dense, panels), ctx);
}

}  // namespace geoadapt
