#pragma once

// Probability measures on the flat tori S^1 = [0, 2pi) and T^2 = [0, 2pi)^2, in angle
// coordinates. Grid densities are taken with respect to the normalized volume, so
// the uniform measure has values 1 and the quadrature weights are 1/n^d.

#include "otto/error.hpp"
#include "otto/parallel.hpp"
#include "otto/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>

namespace otto {

using spectral::kPi;
using spectral::kTwoPi;

inline double wrap_angle(double x) {
  const double r = std::fmod(x, kTwoPi);
  return r < 0 ? r + kTwoPi : r;
}

// Signed shortest difference a - b on the circle, in (-pi, pi].
inline double circle_diff(double a, double b) { return std::remainder(a - b, kTwoPi); }

struct GridDensity {
  int dim = 1;
  int n = 0;
  Eigen::VectorXd values;

  static GridDensity uniform(int dim, int n) {
    return {dim, n, Eigen::VectorXd::Ones(dim == 1 ? n : n * n)};
  }

  // Samples f at the nodes and rescales to unit mass.
  static GridDensity from_function(int dim, int n, const std::function<double(const Eigen::VectorXd&)>& f) {
    GridDensity g{dim, n, Eigen::VectorXd(dim == 1 ? n : n * n)};
    for (int i = 0; i < g.size(); ++i) g.values(i) = f(g.node(i));
    g.normalize();
    return g;
  }

  // 1 + a cos(k x), per axis product in 2-D.
  static GridDensity cosine(int dim, int n, double a, int k) {
    return from_function(dim, n, [a, k](const Eigen::VectorXd& x) {
      double v = 1.0;
      for (int d = 0; d < x.size(); ++d) v *= 1.0 + a * std::cos(k * x(d));
      return v;
    });
  }

  static GridDensity von_mises(int dim, int n, double kappa, double center = 0.0) {
    return from_function(dim, n, [kappa, center](const Eigen::VectorXd& x) {
      double s = 0.0;
      for (int d = 0; d < x.size(); ++d) s += std::cos(x(d) - center);
      return std::exp(kappa * s);
    });
  }

  int size() const { return static_cast<int>(values.size()); }
  double weight() const { return 1.0 / size(); }
  double spacing() const { return kTwoPi / n; }

  Eigen::VectorXd node(int idx) const {
    Eigen::VectorXd x(dim);
    if (dim == 1) x(0) = kTwoPi * idx / n;
    else x << kTwoPi * (idx / n) / n, kTwoPi * (idx % n) / n;
    return x;
  }

  double mass() const { return values.mean(); }
  void normalize() {
    const double m = mass();
    if (!(m > 0.0)) raise_numeric("NonPositiveMass", "density has no mass");
    values /= m;
  }

  bool smooth(double floor = 1e-8) const { return values.minCoeff() >= floor; }

  // Integral of nodal samples f against the measure.
  double integrate(const Eigen::VectorXd& f) const { return f.cwiseProduct(values).mean(); }
};

// Mean-zero scalar potential on a grid; its gradient is a tangent vector at any measure.
struct TangentPotential {
  int dim = 1;
  int n = 0;
  Eigen::VectorXd values;

  static TangentPotential from_function(int dim, int n, const std::function<double(const Eigen::VectorXd&)>& f) {
    const GridDensity g = GridDensity::uniform(dim, n);
    TangentPotential t{dim, n, Eigen::VectorXd(g.size())};
    for (int i = 0; i < g.size(); ++i) t.values(i) = f(g.node(i));
    t.values.array() -= t.values.mean();
    return t;
  }
};

// Spectral gradient of nodal samples: column d holds the derivative along axis d.
inline Eigen::MatrixXd grid_gradient(const Eigen::VectorXd& v, int dim) {
  Eigen::MatrixXd g(v.size(), dim);
  if (dim == 1) g.col(0) = spectral::derivative(v);
  else {
    g.col(0) = spectral::partial(v, 0);
    g.col(1) = spectral::partial(v, 1);
  }
  return g;
}

inline Eigen::VectorXd grid_divergence(const Eigen::MatrixXd& a, int dim) {
  if (dim == 1) return spectral::derivative(a.col(0));
  return spectral::partial(a.col(0), 0) + spectral::partial(a.col(1), 1);
}

// Points are images of the nodes of a label grid carrying the base density.
struct LabelGrid {
  int n = 0;
  Eigen::VectorXd base;
};

struct ParticleCloud {
  int dim = 1;
  Eigen::MatrixXd points;  // P x dim angles; labelled 1-D clouds keep lifted values
  Eigen::VectorXd weights;
  std::optional<LabelGrid> labels;

  static ParticleCloud uniform_weights(const Eigen::MatrixXd& pts) {
    ParticleCloud c;
    c.dim = static_cast<int>(pts.cols());
    c.points = pts;
    c.weights = Eigen::VectorXd::Constant(pts.rows(), 1.0 / static_cast<double>(pts.rows()));
    return c;
  }

  // Quadrature nodes of the grid with weights rho_j / n^d, labelled by the grid.
  static ParticleCloud from_grid(const GridDensity& g) {
    ParticleCloud c;
    c.dim = g.dim;
    c.points.resize(g.size(), g.dim);
    for (int i = 0; i < g.size(); ++i) c.points.row(i) = g.node(i).transpose();
    c.weights = g.values / static_cast<double>(g.size());
    c.labels = LabelGrid{g.n, g.values};
    return c;
  }

  int size() const { return static_cast<int>(points.rows()); }

  void check() const {
    if ((weights.array() < 0.0).any()) raise_numeric("NegativeWeight", "particle weights must be nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12) raise_numeric("WeightSum", "particle weights must sum to one");
  }

  // Grid of the labels with the points as nodal samples (displacements periodic).
  Eigen::VectorXd displacement(int axis) const {
    const int n = labels->n;
    Eigen::VectorXd u(points.rows());
    for (int i = 0; i < u.size(); ++i) {
      const double x = dim == 1 ? kTwoPi * i / n : kTwoPi * (axis == 0 ? i / n : i % n) / n;
      u(i) = points(i, axis) - x;
    }
    if (dim == 2) {
      // Remove whole turns per node so the displacement is a continuous periodic field.
      for (int i = 0; i < u.size(); ++i) u(i) = std::remainder(u(i), kTwoPi);
    }
    return u;
  }
};

// Trigonometric moments int cos(k x_axis) dmu and int sin(k x_axis) dmu.
inline std::pair<double, double> fourier_moment(const GridDensity& g, int axis, int k) {
  double c = 0.0, s = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double x = g.node(i)(axis);
    c += g.values(i) * std::cos(k * x);
    s += g.values(i) * std::sin(k * x);
  }
  return {c / g.size(), s / g.size()};
}

inline std::pair<double, double> fourier_moment(const ParticleCloud& p, int axis, int k) {
  const Eigen::ArrayXd ph = static_cast<double>(k) * p.points.col(axis).array();
  return {(p.weights.array() * ph.cos()).sum(), (p.weights.array() * ph.sin()).sum()};
}

// Periodic Gaussian KDE on an n-grid, evaluated exactly through Fourier coefficients.
inline GridDensity kde(const ParticleCloud& p, int n, double bandwidth = -1.0) {
  if (bandwidth < 0.0) bandwidth = 2.0 * kTwoPi / n;
  GridDensity g = GridDensity::uniform(p.dim, n);
  // Per-axis phase matrices E_d(p, j) = exp(-i k_j x_p).
  auto phases = [&](int axis) {
    Eigen::MatrixXcd e(p.size(), n);
    for (int q = 0; q < p.size(); ++q)
      for (int j = 0; j < n; ++j) {
        const int k = spectral::wavenumber(j, n);
        e(q, j) = spectral::is_nyquist(j, n) ? 0.0 : std::polar(1.0, -k * p.points(q, axis));
      }
    return e;
  };
  auto damp = [&](int j) {
    const double k = spectral::wavenumber(j, n);
    return std::exp(-0.5 * bandwidth * bandwidth * k * k);
  };
  if (p.dim == 1) {
    // Streamed by the recurrence e^{-ikx} = (e^{-ix})^k; memory stays O(n) for large clouds.
    const int half = n / 2;
    std::vector<std::complex<double>> c(static_cast<std::size_t>(half) + 1, 0.0);
    for (int q = 0; q < p.size(); ++q) {
      const std::complex<double> step = std::polar(1.0, -p.points(q, 0));
      std::complex<double> e = 1.0;
      for (int k = 0; k <= half; ++k) {
        c[k] += p.weights(q) * e;
        e *= step;
      }
    }
    spectral::CVec coef(n);
    for (int j = 0; j < n; ++j) {
      const int k = spectral::wavenumber(j, n);
      if (spectral::is_nyquist(j, n)) coef[j] = 0.0;
      else coef[j] = (k >= 0 ? c[k] : std::conj(c[-k])) * damp(j) * static_cast<double>(n);
    }
    g.values = spectral::ifft_real(coef);
  } else {
    const Eigen::MatrixXcd e0 = phases(0), e1 = phases(1);
    const Eigen::MatrixXcd c = e0.transpose() * (p.weights.cast<std::complex<double>>().asDiagonal() * e1);
    spectral::CVec coef(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) coef[i * n + j] = c(i, j) * damp(i) * damp(j) * static_cast<double>(n) * static_cast<double>(n);
    g.values = spectral::ifft2_real(coef, n);
  }
  return g;
}

namespace detail {

// Root of x + u(x) = z in [lo, hi] for increasing x + u(x): Newton with bisection fallback.
inline double invert_monotone(const spectral::Interpolant1D& u, double z, double lo, double hi) {
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double g = x + u.value(x) - z;
    if (std::abs(g) < 1e-14) break;
    if (g > 0) hi = x;
    else lo = x;
    const double dg = 1.0 + u.derivative(x);
    double next = x - g / dg;
    if (!(next > lo && next < hi) || dg <= 0.0) next = 0.5 * (lo + hi);
    if (std::abs(next - x) < 1e-15) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

inline void check_monotone_1d(const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size();
  for (Eigen::Index j = 0; j + 1 < n; ++j)
    if (!(y(j + 1) > y(j))) raise_numeric("NonMonotone1D", "sampled map is not strictly increasing");
  if (!(y(0) + kTwoPi > y(n - 1))) raise_numeric("NonMonotone1D", "sampled map wraps more than once");
}

}  // namespace detail

// Exact change of variables for a monotone degree-one circle map given by its lifted
// node images y_j = T(x_j): rho_out(T(x)) = rho(x) / T'(x), evaluated on the grid.
inline GridDensity pushforward_1d(const Eigen::VectorXd& base, const Eigen::VectorXd& images) {
  const int n = static_cast<int>(images.size());
  detail::check_monotone_1d(images);
  const Eigen::VectorXd x = spectral::nodes(n);
  const spectral::Interpolant1D u(images - x), rho(base);
  GridDensity out{1, n, Eigen::VectorXd(n)};
  const double y0 = images(0);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t kk) {
    const int k = static_cast<int>(kk);
    // Target node lifted into [y0, y0 + 2pi).
    double z = x(k);
    z = y0 + wrap_angle(z - y0);
    const Eigen::Index j = std::upper_bound(images.data(), images.data() + n, z) - images.data() - 1;
    const double lo = x(j);
    const double hi = j + 1 < n ? x(j + 1) : kTwoPi;
    const double xs = detail::invert_monotone(u, z, lo, hi);
    out.values(k) = rho.value(xs) / (1.0 + u.derivative(xs));
  }, 16);
  return out;
}

// Pushforward of a grid measure by a map sampled at its nodes (images in angle
// coordinates; 1-D images lifted). 2-D uses a KDE deposit with bandwidth 2 dx.
inline GridDensity pushforward(const Eigen::MatrixXd& images, const GridDensity& mu) {
  if (mu.dim == 1) return pushforward_1d(mu.values, images.col(0));
  ParticleCloud c = ParticleCloud::from_grid(mu);
  c.points = images;
  c.labels.reset();
  return kde(c, mu.n);
}

inline ParticleCloud pushforward(const Eigen::MatrixXd& images, const ParticleCloud& mu) {
  ParticleCloud out = mu;
  out.points = images;
  return out;
}

// Density of a labelled cloud at its own sites: rho_base(x) / det DX(x).
inline Eigen::VectorXd density_at_sites(const ParticleCloud& c) {
  const auto& lab = *c.labels;
  if (c.dim == 1) {
    const Eigen::VectorXd du = spectral::derivative(c.displacement(0));
    return lab.base.cwiseQuotient((1.0 + du.array()).matrix());
  }
  const Eigen::VectorXd u0 = c.displacement(0), u1 = c.displacement(1);
  const Eigen::ArrayXd a = 1.0 + spectral::partial(u0, 0).array(), b = spectral::partial(u0, 1).array();
  const Eigen::ArrayXd cc = spectral::partial(u1, 0).array(), d = 1.0 + spectral::partial(u1, 1).array();
  return (lab.base.array() / (a * d - b * cc)).matrix();
}

// Eulerian grid density of any measure.
inline GridDensity to_grid(const ParticleCloud& c, int n) {
  if (c.labels && c.dim == 1 && c.labels->n == n && c.size() == n) return pushforward_1d(c.labels->base, c.points.col(0));
  return kde(c, n);
}

}  // namespace otto
