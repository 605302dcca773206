#pragma once

// Finite-dimensional principal bundles with structure group U(1):
//   HopfFibration      S^3 -> S^2(1/2), right action q -> q e^{i theta}
//   ProductBundle      S^1 x S^1 -> S^1, right action rotating the second factor
// Both expose the same interface so the lift / transport / factorization routines
// below are written once.

#include "otto/brownian.hpp"
#include "otto/error.hpp"
#include "otto/geometry.hpp"
#include "otto/integrators.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace otto {

class HopfFibration {
 public:
  HopfFibration() : total_(EmbeddedManifold::sphere(3)), base_(EmbeddedManifold::sphere(2, 0.5)) {}

  const EmbeddedManifold& total() const { return total_; }
  const EmbeddedManifold& base() const { return base_; }

  // Multiplication by i on C^2 = R^4 with z1 = q0 + i q1, z2 = q2 + i q3.
  static Vec times_i(const Vec& q) {
    Vec r(4);
    r << -q(1), q(0), -q(3), q(2);
    return r;
  }

  Point project(const Point& q) const {
    Point y(3);
    y << 0.5 * (q(0) * q(0) + q(1) * q(1) - q(2) * q(2) - q(3) * q(3)), q(0) * q(2) + q(1) * q(3),
        q(0) * q(3) - q(1) * q(2);
    return y;
  }

  // Tp at q applied to w.
  Vec differential(const Point& q, const Vec& w) const {
    Vec d(3);
    d << q(0) * w(0) + q(1) * w(1) - q(2) * w(2) - q(3) * w(3), w(0) * q(2) + q(0) * w(2) + w(1) * q(3) + q(1) * w(3),
        w(0) * q(3) + q(0) * w(3) - w(1) * q(2) - q(1) * w(2);
    return d;
  }

  // Unit generator of the fibre through q.
  Vec vertical(const Point& q) const { return times_i(q); }

  Point act(const Point& q, double theta) const { return std::cos(theta) * q + std::sin(theta) * times_i(q); }

  // theta with q1 = q0 e^{i theta} for q1 on the fibre of q0.
  double phase_between(const Point& q0, const Point& q1) const {
    return std::atan2(q1.dot(times_i(q0)), q1.dot(q0));
  }

  // Orthonormal horizontal frame (-conj z2, conj z1) and i times it.
  Eigen::Matrix<double, 4, 2> horizontal_frame(const Point& q) const {
    Eigen::Matrix<double, 4, 2> h;
    h.col(0) << -q(2), q(3), q(0), -q(1);
    h.col(1) = times_i(h.col(0));
    return h;
  }

  // O'Neill tensor on horizontal arguments: the vertical part of the derivative of a
  // horizontal extension of b along a equals -<b, i a> i q.
  Vec oneill(const Point& q, const Vec& a, const Vec& b) const {
    return -b.dot(times_i(a)) * times_i(q);
  }

 private:
  EmbeddedManifold total_, base_;
};

class ProductBundle {
 public:
  ProductBundle() : total_(EmbeddedManifold::torus2()), base_(EmbeddedManifold::circle()) {}

  const EmbeddedManifold& total() const { return total_; }
  const EmbeddedManifold& base() const { return base_; }

  Point project(const Point& q) const { return q.head<2>(); }
  Vec differential(const Point&, const Vec& w) const { return w.head<2>(); }

  Vec vertical(const Point& q) const {
    Vec v = Vec::Zero(4);
    v(2) = -q(3);
    v(3) = q(2);
    return v;
  }

  Point act(const Point& q, double theta) const {
    Point r = q;
    r.tail<2>() = std::cos(theta) * q.tail<2>() + std::sin(theta) * Eigen::Vector2d(-q(3), q(2));
    return r;
  }

  double phase_between(const Point& q0, const Point& q1) const {
    return std::atan2(q0(2) * q1(3) - q0(3) * q1(2), q0(2) * q1(2) + q0(3) * q1(3));
  }

  Eigen::Matrix<double, 4, 1> horizontal_frame(const Point& q) const {
    Eigen::Matrix<double, 4, 1> h;
    h << -q(1), q(0), 0.0, 0.0;
    return h;
  }

  Vec oneill(const Point&, const Vec&, const Vec&) const { return Vec::Zero(4); }

 private:
  EmbeddedManifold total_, base_;
};

struct VerticalHorizontal {
  Vec vertical;
  Vec horizontal;
};

template <class Bundle>
VerticalHorizontal split_vertical_horizontal(const Bundle& b, const Point& q, const Vec& w) {
  const Vec v = b.vertical(q);
  const Vec wv = (w.dot(v) / v.squaredNorm()) * v;
  return {wv, w - wv};
}

// Inverse of Tp restricted to the horizontal space. The frame is orthonormal and Tp
// is an isometry on it, so the inverse is the transpose.
template <class Bundle>
Vec horizontal_lift_vector(const Bundle& b, const Point& q, const Vec& v_base) {
  const auto frame = b.horizontal_frame(q);
  Vec out = Vec::Zero(4);
  for (int j = 0; j < frame.cols(); ++j) {
    const Vec hj = frame.col(j);
    out += b.differential(q, hj).dot(v_base) * hj;
  }
  return out;
}

template <class Bundle>
Vec oneill_tensor(const Bundle& b, const Point& q, const Vec& u_h, const Vec& b_h) {
  return b.oneill(q, split_vertical_horizontal(b, q, u_h).horizontal, split_vertical_horizontal(b, q, b_h).horizontal);
}

// Lifts base fields to horizontal fields on the total space.
template <class Bundle>
FieldSet lift_fields(const Bundle& b, const FieldSet& base_fields) {
  auto lift = [b](const TangentField& f) -> TangentField {
    if (!f) return {};
    return [b, f](const Point& q) { return horizontal_lift_vector(b, q, f(b.project(q))); };
  };
  FieldSet out;
  out.drift = lift(base_fields.drift);
  for (const auto& f : base_fields.noise) out.noise.push_back(lift(f));
  return out;
}

template <class Bundle>
PathSample horizontal_lift_diffusion(const Bundle& b, const FieldSet& base_fields, const Point& q0,
                                     const BrownianDriver& w, Scheme scheme = Scheme::stratonovich_heun) {
  return integrate_manifold_sde(b.total(), lift_fields(b, base_fields), q0, w, scheme);
}

template <class Bundle>
PathSample project_path(const Bundle& b, const PathSample& total_path) {
  PathSample out;
  out.scheme = total_path.scheme;
  out.times = total_path.times;
  out.points.reserve(total_path.points.size());
  for (const auto& q : total_path.points) out.points.push_back(b.project(q));
  return out;
}

// Stratonovich transport D_t U = A_{dX} U along a total-space path: Levi-Civita
// transport of the total space between samples plus a Heun step for the O'Neill term.
template <class Bundle>
std::vector<Vec> horizontal_transport(const Bundle& b, const PathSample& path, const Vec& u0) {
  const auto& m = b.total();
  std::vector<Vec> out;
  out.reserve(path.points.size());
  Vec u = m.tangent_project(path.points.front(), u0);
  out.push_back(u);
  for (std::size_t k = 1; k < path.points.size(); ++k) {
    const Point& x = path.points[k - 1];
    const Point& y = path.points[k];
    const Vec dx = y - x;
    const Vec c0 = oneill_tensor(b, x, m.tangent_project(x, dx), u);
    const Vec pred = transport_step(m, x, y, u) + transport_step(m, x, y, c0);
    const Vec c1 = oneill_tensor(b, y, m.tangent_project(y, dx), pred);
    u = m.tangent_project(y, transport_step(m, x, y, u) + 0.5 * (transport_step(m, x, y, c0) + c1));
    out.push_back(u);
  }
  return out;
}

// Lifted transport of a full tangent vector: horizontal part by horizontal_transport,
// vertical part kept as its constant fibre coordinate.
template <class Bundle>
std::vector<Vec> equivariant_lift_transport(const Bundle& b, const PathSample& path, const Vec& w0) {
  const Point& q0 = path.points.front();
  const auto parts = split_vertical_horizontal(b, q0, w0);
  const Vec gen = b.vertical(q0);
  const double coord = parts.vertical.dot(gen) / gen.squaredNorm();
  std::vector<Vec> out = horizontal_transport(b, path, parts.horizontal);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += coord * b.vertical(path.points[k]);
  return out;
}

// Right-invariant fields A_i = lift(base_i) + a_i V. Empty scalar entries mean zero.
struct EquivariantFields {
  FieldSet base;
  std::function<double(const Point&)> vertical_drift;
  std::vector<std::function<double(const Point&)>> vertical_noise;
};

struct GroupPath {
  std::vector<double> times;
  std::vector<double> phase;
};

struct EquivariantDecomposition {
  PathSample horizontal;
  GroupPath group;
};

template <class Bundle>
FieldSet full_fields(const Bundle& b, const EquivariantFields& f) {
  FieldSet lifted = lift_fields(b, f.base);
  const std::size_t nch = std::max(lifted.noise.size(), f.vertical_noise.size());
  auto combine = [b](TangentField h, std::function<double(const Point&)> a) -> TangentField {
    return [b, h, a](const Point& q) {
      Vec v = h ? h(q) : Vec::Zero(4);
      if (a) v += a(q) * b.vertical(q);
      return v;
    };
  };
  FieldSet out;
  out.drift = combine(lifted.drift, f.vertical_drift);
  for (std::size_t i = 0; i < nch; ++i)
    out.noise.push_back(combine(i < lifted.noise.size() ? lifted.noise[i] : TangentField{},
                                i < f.vertical_noise.size() ? f.vertical_noise[i] : nullptr));
  return out;
}

template <class Bundle>
void check_right_invariant(const Bundle& b, const std::function<double(const Point&)>& a, const Point& q0) {
  if (!a) return;
  for (double th : {0.7, 1.9, -2.4}) {
    if (std::abs(a(b.act(q0, th)) - a(q0)) > 1e-8)
      raise_numeric("NotRightInvariant", "vertical scalar varies along the fibre");
  }
}

// X_t = h_t . g_t: h integrates the horizontal parts, the U(1) component is the
// Stratonovich phase integral of the vertical scalars evaluated along h.
template <class Bundle>
EquivariantDecomposition equivariant_decompose(const Bundle& b, const EquivariantFields& f, const Point& q0,
                                               const BrownianDriver& w) {
  check_right_invariant(b, f.vertical_drift, q0);
  for (const auto& a : f.vertical_noise) check_right_invariant(b, a, q0);
  EquivariantDecomposition out;
  out.horizontal = horizontal_lift_diffusion(b, f.base, q0, w, Scheme::stratonovich_heun);
  const auto& pts = out.horizontal.points;
  out.group.times = out.horizontal.times;
  out.group.phase.assign(pts.size(), 0.0);
  const double h = w.step();
  for (std::size_t k = 1; k < pts.size(); ++k) {
    double d = 0.0;
    if (f.vertical_drift) d += 0.5 * (f.vertical_drift(pts[k - 1]) + f.vertical_drift(pts[k])) * h;
    for (std::size_t i = 0; i < f.vertical_noise.size(); ++i)
      if (f.vertical_noise[i])
        d += 0.5 * (f.vertical_noise[i](pts[k - 1]) + f.vertical_noise[i](pts[k])) *
             w.increment(static_cast<int>(i), static_cast<int>(k - 1));
    out.group.phase[k] = out.group.phase[k - 1] + d;
  }
  return out;
}

template <class Bundle>
std::vector<Point> reconstruct(const Bundle& b, const EquivariantDecomposition& d) {
  std::vector<Point> out;
  out.reserve(d.horizontal.points.size());
  for (std::size_t k = 0; k < d.horizontal.points.size(); ++k)
    out.push_back(b.act(d.horizontal.points[k], d.group.phase[k]));
  return out;
}

// Realized quadratic variation of the base path, sum |p(x_{k+1}) - p(x_k)|^2.
template <class Bundle>
double base_quadratic_variation(const Bundle& b, const PathSample& total_path) {
  double qv = 0.0;
  for (std::size_t k = 1; k < total_path.points.size(); ++k)
    qv += (b.project(total_path.points[k]) - b.project(total_path.points[k - 1])).squaredNorm();
  return qv;
}

}  // namespace otto
