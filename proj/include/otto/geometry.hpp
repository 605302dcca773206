#pragma once

// Closed manifolds with closed-form embeddings: the unit circle in R^2, the flat
// torus S^1 x S^1 in R^4 (unit circle per factor), and round spheres S^2, S^3 of
// arbitrary radius. Points and tangent vectors are ambient coordinate vectors.

#include "otto/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

namespace otto {

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using Point = Vec;

enum class CurvatureKind { flat, constant_positive };

struct TangentVector {
  Point base;
  Vec v;
};

class EmbeddedManifold {
 public:
  enum class Kind { circle, torus2, sphere };

  static EmbeddedManifold circle() { return EmbeddedManifold(Kind::circle, 2, 1, 1.0); }
  static EmbeddedManifold torus2() { return EmbeddedManifold(Kind::torus2, 4, 2, 1.0); }
  static EmbeddedManifold sphere(int dim, double radius = 1.0) {
    return EmbeddedManifold(Kind::sphere, dim + 1, dim, radius);
  }

  static EmbeddedManifold from_id(std::string_view id) {
    if (id == "circle") return circle();
    if (id == "torus2") return torus2();
    if (id == "sphere2") return sphere(2);
    if (id == "sphere3") return sphere(3);
    raise_config("UnknownManifold", std::string(id));
  }

  Kind kind() const { return kind_; }
  int ambient_dim() const { return ambient_; }
  int intrinsic_dim() const { return intrinsic_; }
  double radius() const { return radius_; }

  std::string id() const {
    switch (kind_) {
      case Kind::circle: return "circle";
      case Kind::torus2: return "torus2";
      case Kind::sphere: return intrinsic_ == 2 ? "sphere2" : intrinsic_ == 3 ? "sphere3" : "sphere";
    }
    return "unknown";
  }

  CurvatureKind curvature_kind() const {
    return kind_ == Kind::sphere && intrinsic_ >= 2 ? CurvatureKind::constant_positive : CurvatureKind::flat;
  }

  // Sectional curvature (zero for the flat cases).
  double kappa() const {
    return curvature_kind() == CurvatureKind::flat ? 0.0 : 1.0 / (radius_ * radius_);
  }

  // Distance to the manifold below which closest_point is smooth and unique.
  double tubular_radius() const { return kind_ == Kind::torus2 ? 0.5 : radius_; }

  // Vanishes exactly on M: |y|^2 - r^2 for spheres, one equation per circle factor.
  Eigen::VectorXd constraint(const Vec& y) const {
    if (kind_ == Kind::torus2) {
      Eigen::VectorXd c(2);
      c << y.head<2>().squaredNorm() - 1.0, y.tail<2>().squaredNorm() - 1.0;
      return c;
    }
    Eigen::VectorXd c(1);
    c << y.squaredNorm() - radius_ * radius_;
    return c;
  }

  double distance_to(const Vec& y) const {
    if (kind_ == Kind::torus2) {
      const double a = y.head<2>().norm() - 1.0, b = y.tail<2>().norm() - 1.0;
      return std::hypot(a, b);
    }
    return std::abs(y.norm() - radius_);
  }

  Point closest_point(const Vec& y) const {
    check_dim(y);
    if (kind_ == Kind::torus2) {
      const double a = y.head<2>().norm(), b = y.tail<2>().norm();
      if (std::abs(a - 1.0) >= 0.5 || std::abs(b - 1.0) >= 0.5)
        raise_numeric("OutsideTubularNeighborhood", "point too far from the torus");
      Point x(4);
      x << y.head<2>() / a, y.tail<2>() / b;
      return x;
    }
    // Radial projection is smooth away from the origin, so the boundary shell
    // |r - radius| = tubular radius is accepted except at the centre itself.
    const double r = y.norm();
    if (!(std::abs(r - radius_) <= tubular_radius()) || r < 1e-300)
      raise_numeric("OutsideTubularNeighborhood", "point too far from " + id());
    return y * (radius_ / r);
  }

  Vec tangent_project(const Point& x, const Vec& v) const {
    if (kind_ == Kind::torus2) {
      Vec out = v;
      out.head<2>() -= v.head<2>().dot(x.head<2>()) * x.head<2>();
      out.tail<2>() -= v.tail<2>().dot(x.tail<2>()) * x.tail<2>();
      return out;
    }
    return v - (v.dot(x) / (radius_ * radius_)) * x;
  }

  Eigen::MatrixXd projector(const Point& x) const {
    const int d = ambient_;
    Eigen::MatrixXd p(d, d);
    for (int c = 0; c < d; ++c) p.col(c) = tangent_project(x, Vec::Unit(d, c));
    return p;
  }

  // Normal-valued second fundamental form II(u, v) = normal part of the ambient
  // derivative of v along u; points toward the centre of curvature.
  Vec second_fundamental_form(const Point& x, const Vec& u, const Vec& v) const {
    if (kind_ == Kind::torus2) {
      Vec out = Vec::Zero(4);
      out.head<2>() = -u.head<2>().dot(v.head<2>()) * x.head<2>();
      out.tail<2>() = -u.tail<2>().dot(v.tail<2>()) * x.tail<2>();
      return out;
    }
    return -(u.dot(v) / (radius_ * radius_)) * x;
  }

  Vec riemann_curvature(const Point& x, const Vec& u, const Vec& v, const Vec& w) const {
    (void)x;
    if (curvature_kind() == CurvatureKind::flat) return Vec::Zero(u.size());
    return kappa() * (v.dot(w) * u - u.dot(w) * v);
  }

  Point geodesic_exp(const Point& x, const Vec& v) const {
    if (kind_ == Kind::torus2) {
      Point out(4);
      out.head<2>() = circle_exp(x.head<2>(), v.head<2>(), 1.0);
      out.tail<2>() = circle_exp(x.tail<2>(), v.tail<2>(), 1.0);
      return out;
    }
    return circle_exp(x, v, radius_);
  }

  // Intrinsic geodesic distance.
  double distance(const Point& x, const Point& y) const {
    if (kind_ == Kind::torus2) {
      return std::hypot(arc(x.head<2>(), y.head<2>(), 1.0), arc(x.tail<2>(), y.tail<2>(), 1.0));
    }
    return arc(x, y, radius_);
  }

  // Uniformly distributed point (Gaussian normalization per factor).
  template <class Rng>
  Point random_point(Rng& rng) const {
    std::normal_distribution<double> g;
    Vec y(ambient_);
    for (int i = 0; i < ambient_; ++i) y(i) = g(rng);
    if (kind_ == Kind::torus2) {
      y.head<2>().normalize();
      y.tail<2>().normalize();
      return y;
    }
    return y.normalized() * radius_;
  }

  template <class Rng>
  Vec random_tangent(const Point& x, Rng& rng) const {
    std::normal_distribution<double> g;
    Vec v(ambient_);
    for (int i = 0; i < ambient_; ++i) v(i) = g(rng);
    return tangent_project(x, v);
  }

  bool on_manifold(const Vec& y, double tol) const { return constraint(y).cwiseAbs().maxCoeff() <= tol; }

 private:
  EmbeddedManifold(Kind k, int ambient, int intrinsic, double radius)
      : kind_(k), ambient_(ambient), intrinsic_(intrinsic), radius_(radius) {}

  void check_dim(const Vec& y) const {
    if (y.size() != ambient_) raise_config("DimensionMismatch", "ambient dimension of " + id());
  }

  template <class A, class B>
  static Vec circle_exp(const A& x, const B& v, double r) {
    const double speed = v.norm();
    if (speed == 0.0) return x;
    const double ang = speed / r;
    return std::cos(ang) * x + (r * std::sin(ang) / speed) * v;
  }

  template <class A, class B>
  static double arc(const A& x, const B& y, double r) {
    // atan2 form stays accurate near 0 and pi.
    const double c = x.dot(y) / (r * r);
    const double s = (x / r - c * (y / r)).norm();
    return r * std::atan2(s, c);
  }

  Kind kind_;
  int ambient_;
  int intrinsic_;
  double radius_;
};

// C^2 compactly supported bump: the cubic B-spline rescaled to chi(0) = 1 and
// support [0, eps). Used to extend tangent fields off the manifold.
inline double bump(double d, double eps) {
  const double s = 2.0 * std::abs(d) / eps;
  if (s >= 2.0) return 0.0;
  const double b = s < 1.0 ? (4.0 - 6.0 * s * s + 3.0 * s * s * s) / 6.0 : std::pow(2.0 - s, 3) / 6.0;
  return b / (4.0 / 6.0);
}

// Extension of a tangent field to the tubular neighbourhood:
// y -> chi(dist(y, M)) * field(closest_point(y)).
inline std::function<Vec(const Vec&)> extend_field(const EmbeddedManifold& m,
                                                   std::function<Vec(const Point&)> field, double eps) {
  return [m, field = std::move(field), eps](const Vec& y) -> Vec {
    const double d = m.distance_to(y);
    if (d >= std::min(eps, m.tubular_radius())) return Vec::Zero(y.size());
    return bump(d, eps) * field(m.closest_point(y));
  };
}

// Largest sampled ratio d_M(x, y) / |x - y|; finite on compact embedded manifolds.
template <class Rng>
double chord_arc_ratio(const EmbeddedManifold& m, int samples, Rng& rng, double* min_ratio = nullptr) {
  double hi = 1.0, lo = std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    const Point x = m.random_point(rng), y = m.random_point(rng);
    const double chord = (x - y).norm();
    if (chord < 1e-12) continue;
    const double r = m.distance(x, y) / chord;
    hi = std::max(hi, r);
    lo = std::min(lo, r);
  }
  if (min_ratio) *min_ratio = lo;
  return hi;
}

}  // namespace otto
