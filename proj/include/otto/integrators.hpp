#pragma once

#include "otto/brownian.hpp"
#include "otto/error.hpp"
#include "otto/geometry.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace otto {

using TangentField = std::function<Vec(const Point&)>;

// Drift A_0 and noise fields A_1..A_N; an empty drift means zero.
struct FieldSet {
  TangentField drift;
  std::vector<TangentField> noise;

  Vec drift_at(const Point& x) const { return drift ? drift(x) : Vec::Zero(x.size()); }
};

enum class Scheme { ito_projected, stratonovich_heun };

struct PathSample {
  std::vector<double> times;
  std::vector<Point> points;
  Scheme scheme = Scheme::ito_projected;

  const Point& back() const { return points.back(); }
};

struct FrameTransport {
  PathSample base;
  std::vector<Vec> vectors;
};

namespace detail {

inline Point sde_step(const EmbeddedManifold& m, const FieldSet& f, const Point& x,
                      const BrownianDriver& w, int k, Scheme scheme) {
  const double h = w.step();
  const int nch = static_cast<int>(f.noise.size());
  if (nch > w.channels()) raise_config("ChannelMismatch", "more noise fields than driver channels");
  if (scheme == Scheme::ito_projected) {
    // Ambient Euler-Maruyama; the +1/2 II term is the normal part of the ambient Ito
    // drift for II pointing to the centre of curvature.
    Vec y = x + f.drift_at(x) * h;
    for (int i = 0; i < nch; ++i) {
      const Vec a = f.noise[i](x);
      y += a * w.increment(i, k) + 0.5 * h * m.second_fundamental_form(x, a, a);
    }
    return m.closest_point(y);
  }
  Vec incr = f.drift_at(x) * h;
  std::vector<Vec> a0(nch);
  for (int i = 0; i < nch; ++i) {
    a0[i] = f.noise[i](x);
    incr += a0[i] * w.increment(i, k);
  }
  const Point xp = m.closest_point(x + incr);
  Vec y = x + 0.5 * (f.drift_at(x) + f.drift_at(xp)) * h;
  for (int i = 0; i < nch; ++i) y += 0.5 * (a0[i] + f.noise[i](xp)) * w.increment(i, k);
  return m.closest_point(y);
}

}  // namespace detail

inline PathSample integrate_manifold_sde(const EmbeddedManifold& m, const FieldSet& f, const Point& x0,
                                         const BrownianDriver& w, Scheme scheme) {
  PathSample path;
  path.scheme = scheme;
  path.times.reserve(w.steps() + 1);
  path.points.reserve(w.steps() + 1);
  Point x = m.closest_point(x0);
  path.times.push_back(0.0);
  path.points.push_back(x);
  for (int k = 0; k < w.steps(); ++k) {
    x = detail::sde_step(m, f, x, w, k, scheme);
    path.times.push_back(w.time(k + 1));
    path.points.push_back(x);
  }
  return path;
}

// Endpoint only; avoids storing the path for ensemble statistics.
inline Point integrate_endpoint(const EmbeddedManifold& m, const FieldSet& f, const Point& x0,
                                const BrownianDriver& w, Scheme scheme) {
  Point x = m.closest_point(x0);
  for (int k = 0; k < w.steps(); ++k) x = detail::sde_step(m, f, x, w, k, scheme);
  return x;
}

// Levi-Civita derivative of B along A at x: tangent part of the ambient central
// difference of B along the geodesic through x with velocity A(x).
inline Vec covariant_derivative(const EmbeddedManifold& m, const TangentField& a, const TangentField& b,
                                const Point& x, double delta = 1e-4) {
  const Vec v = a(x);
  const Vec plus = b(m.geodesic_exp(x, delta * v));
  const Vec minus = b(m.geodesic_exp(x, -delta * v));
  return m.tangent_project(x, (plus - minus) / (2.0 * delta));
}

enum class Conversion { ito_to_stratonovich, stratonovich_to_ito };

// Drift correction -+ 1/2 sum_i nabla_{A_i} A_i; noise fields unchanged.
inline FieldSet ito_stratonovich_convert(const EmbeddedManifold& m, const FieldSet& f, Conversion dir,
                                         double delta = 1e-4) {
  FieldSet out = f;
  const double sign = dir == Conversion::ito_to_stratonovich ? -0.5 : 0.5;
  out.drift = [m, f, sign, delta](const Point& x) -> Vec {
    Vec d = f.drift_at(x);
    for (const auto& a : f.noise) d += sign * covariant_derivative(m, a, a, x, delta);
    return d;
  };
  return out;
}

// Rotation in the plane of the unit vectors a and b that carries a onto b, applied
// to v. This is the exact parallel transport along the great-circle arc a -> b.
inline Vec chord_rotation(const Vec& a, const Vec& b, const Vec& v) {
  const double c = a.dot(b);
  if (1.0 + c < 1e-12) raise_numeric("DegenerateStep", "antipodal consecutive points");
  const Vec s = a + b;
  return v - (s.dot(v) / (1.0 + c)) * s + 2.0 * a.dot(v) * b;
}

// Parallel transport of v (tangent at x) to y along the connecting geodesic.
inline Vec transport_step(const EmbeddedManifold& m, const Point& x, const Point& y, const Vec& v) {
  Vec out;
  if (m.kind() == EmbeddedManifold::Kind::torus2) {
    out.resize(4);
    out.head<2>() = chord_rotation(x.head<2>(), y.head<2>(), v.head<2>());
    out.tail<2>() = chord_rotation(x.tail<2>(), y.tail<2>(), v.tail<2>());
  } else {
    const double r = m.radius();
    out = chord_rotation(x / r, y / r, v);
  }
  out = m.tangent_project(y, out);
  const double before = v.norm(), after = out.norm();
  if (after > 0.0) out *= before / after;
  return out;
}

inline FrameTransport parallel_transport_along(const EmbeddedManifold& m, const PathSample& path, const Vec& v0) {
  FrameTransport ft;
  ft.base = path;
  ft.vectors.reserve(path.points.size());
  Vec v = m.tangent_project(path.points.front(), v0);
  ft.vectors.push_back(v);
  for (std::size_t k = 1; k < path.points.size(); ++k) {
    v = transport_step(m, path.points[k - 1], path.points[k], v);
    ft.vectors.push_back(v);
  }
  return ft;
}

// Deterministic path sampled along a great-circle arc from a to b (same radius).
inline PathSample great_circle_arc(const Point& a, const Point& b, int segments, double t0 = 0.0, double dt = 1.0) {
  PathSample p;
  const double r = a.norm();
  const Vec u = a / r;
  Vec w = b / r - u.dot(b / r) * u;
  const double ang = std::atan2(w.norm(), u.dot(b / r));
  w.normalize();
  for (int s = 0; s <= segments; ++s) {
    const double th = ang * s / segments;
    p.times.push_back(t0 + dt * s);
    p.points.push_back(r * (std::cos(th) * u + std::sin(th) * w));
  }
  return p;
}

}  // namespace otto
