#pragma once

// Horizontal lifts of measure diffusions to discrete diffeomorphisms of S^1 and T^2,
// horizontal and stochastic parallel transport over P, the connection form, and the
// factorization Phi = h o g of right-invariant diffusions on D(S^1).
//
// A diffeomorphism phi is stored by the lifted images of the label nodes; its measure is
// p(phi) = phi_sharp vol. Tangent vectors A o phi are stored as samples at the label
// nodes. All splits are done in label coordinates with the flat L^2(vol) metric:
// horizontal vectors are Dphi^{-T} grad(chi), vertical ones satisfy div(Dphi^{-1} B) = 0.

#include "otto/brownian.hpp"
#include "otto/error.hpp"
#include "otto/fields.hpp"
#include "otto/hodge.hpp"
#include "otto/mckean_vlasov.hpp"
#include "otto/measure.hpp"
#include "otto/spectral.hpp"
#include "otto/wasserstein.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

namespace otto {

struct DiscreteDiffeo {
  int dim = 1;
  int n = 0;
  Eigen::MatrixXd values;  // one row per label node, lifted (no wrapping)

  static Eigen::MatrixXd label_nodes(int dim, int n) {
    const GridDensity g = GridDensity::uniform(dim, n);
    Eigen::MatrixXd x(g.size(), dim);
    for (int i = 0; i < g.size(); ++i) x.row(i) = g.node(i).transpose();
    return x;
  }

  static DiscreteDiffeo identity(int dim, int n) { return {dim, n, label_nodes(dim, n)}; }

  static DiscreteDiffeo translation(int dim, int n, const Eigen::VectorXd& a) {
    DiscreteDiffeo d = identity(dim, n);
    d.values.rowwise() += a.transpose();
    return d;
  }

  // Labelled cloud over a uniform base (as produced by lifts).
  static DiscreteDiffeo from_cloud(const ParticleCloud& c) {
    if (!c.labels) raise_config("Unlabelled", "a diffeomorphism needs a labelled cloud");
    return {c.dim, c.labels->n, c.points};
  }

  // A map with p(phi) = mu: the quantile map in 1-D; the identity for uniform 2-D measures.
  static DiscreteDiffeo section(const GridDensity& mu) {
    if (mu.dim == 2) {
      if ((mu.values.array() - 1.0).abs().maxCoeff() > 1e-12)
        raise_config("NoSection2D", "2-D sections are provided for the uniform measure only");
      return identity(2, mu.n);
    }
    const SpectralQuantile q(mu);
    DiscreteDiffeo d{1, mu.n, Eigen::MatrixXd(mu.n, 1)};
    for (int j = 0; j < mu.n; ++j) d.values(j, 0) = q(static_cast<double>(j) / mu.n);
    return d;
  }

  int size() const { return static_cast<int>(values.rows()); }

  // Periodic displacement; 2-D maps may be stored modulo whole turns per node.
  Eigen::VectorXd displacement(int axis) const {
    Eigen::VectorXd u = values.col(axis) - label_nodes(dim, n).col(axis);
    if (dim == 2) u = u.unaryExpr([](double v) { return std::remainder(v, kTwoPi); });
    return u;
  }

  // 1-D: one column phi'. 2-D: columns (d0 phi0, d1 phi0, d0 phi1, d1 phi1).
  Eigen::MatrixXd jacobian() const {
    if (dim == 1) {
      Eigen::MatrixXd j(size(), 1);
      j.col(0) = (1.0 + spectral::derivative(displacement(0)).array()).matrix();
      return j;
    }
    const Eigen::VectorXd u0 = displacement(0), u1 = displacement(1);
    Eigen::MatrixXd j(size(), 4);
    j.col(0) = (1.0 + spectral::partial(u0, 0).array()).matrix();
    j.col(1) = spectral::partial(u0, 1);
    j.col(2) = spectral::partial(u1, 0);
    j.col(3) = (1.0 + spectral::partial(u1, 1).array()).matrix();
    return j;
  }

  ParticleCloud cloud() const {
    ParticleCloud c;
    c.dim = dim;
    c.points = values;
    c.weights = Eigen::VectorXd::Constant(size(), 1.0 / size());
    c.labels = LabelGrid{n, Eigen::VectorXd::Ones(size())};
    return c;
  }

  // p(phi): exact in 1-D, KDE deposit in 2-D.
  GridDensity density() const {
    if (dim == 1) return pushforward_1d(Eigen::VectorXd::Ones(n), values.col(0));
    return kde(cloud(), n);
  }

  // phi o r_a for the translation r_a(x) = x + a.
  DiscreteDiffeo compose_translation(const Eigen::VectorXd& a) const {
    DiscreteDiffeo out = *this;
    const Eigen::MatrixXd x = label_nodes(dim, n);
    for (int ax = 0; ax < dim; ++ax) {
      const Eigen::VectorXd u = displacement(ax);
      const Eigen::VectorXd us = dim == 1 ? spectral::shift(u, a(0)) : spectral::shift2(u, a(0), a(1));
      out.values.col(ax) = x.col(ax) + us + Eigen::VectorXd::Constant(size(), a(ax));
    }
    return out;
  }

  // phi o g with g given by its lifted node images.
  DiscreteDiffeo compose(const DiscreteDiffeo& g) const {
    DiscreteDiffeo out = g;
    if (dim == 1) {
      const spectral::Interpolant1D u(displacement(0));
      for (int j = 0; j < size(); ++j) out.values(j, 0) = g.values(j, 0) + u.value(g.values(j, 0));
      return out;
    }
    const spectral::Interpolant2D u0(displacement(0)), u1(displacement(1));
    for (int j = 0; j < size(); ++j) {
      const double y0 = g.values(j, 0), y1 = g.values(j, 1);
      out.values(j, 0) = y0 + u0.value(y0, y1);
      out.values(j, 1) = y1 + u1.value(y0, y1);
    }
    return out;
  }

  void check() const {
    if (dim == 1) {
      detail::check_monotone_1d(values.col(0));
      return;
    }
    const Eigen::MatrixXd j = jacobian();
    const Eigen::ArrayXd det = j.col(0).array() * j.col(3).array() - j.col(1).array() * j.col(2).array();
    if (det.minCoeff() <= 0.0) raise_numeric("NonInvertibleMap", "Jacobian determinant is not positive");
  }
};

// Tangent vector A o phi at phi: samples A(phi(x_j)). Horizontal vectors may carry chi = psi o phi.
struct DiffeoTangent {
  DiscreteDiffeo base;
  GridField samples;
  std::optional<Eigen::VectorXd> potential;

  // Horizontal lift of v = grad(psi) at p(phi), psi given on an Eulerian grid.
  static DiffeoTangent horizontal_lift(const DiscreteDiffeo& phi, const TangentPotential& v) {
    if (v.dim != phi.dim) raise_config("DimensionMismatch", "potential and map dimensions differ");
    DiffeoTangent t{phi, GridField(phi.size(), phi.dim), Eigen::VectorXd(phi.size())};
    if (phi.dim == 1) {
      const spectral::Interpolant1D f(v.values);
      for (int j = 0; j < phi.size(); ++j) {
        t.samples(j, 0) = f.derivative(phi.values(j, 0));
        (*t.potential)(j) = f.value(phi.values(j, 0));
      }
      return t;
    }
    const spectral::Interpolant2D f(v.values), f0(spectral::partial(v.values, 0)), f1(spectral::partial(v.values, 1));
    for (int j = 0; j < phi.size(); ++j) {
      const double y0 = phi.values(j, 0), y1 = phi.values(j, 1);
      t.samples(j, 0) = f0.value(y0, y1);
      t.samples(j, 1) = f1.value(y0, y1);
      (*t.potential)(j) = f.value(y0, y1);
    }
    return t;
  }
};

// L^2(vol) inner product of label samples.
inline double label_inner(const GridField& a, const GridField& b) { return a.cwiseProduct(b).sum() / a.rows(); }
inline double label_norm(const GridField& a) { return std::sqrt(label_inner(a, a)); }

// Horizontal/vertical split of tangent vectors at a fixed diffeomorphism.
class FiberSplit {
 public:
  struct Parts {
    GridField horizontal, vertical;
    Eigen::VectorXd potential;  // chi with horizontal = Dphi^{-T} grad chi
    int iterations = 0;
  };

  explicit FiberSplit(DiscreteDiffeo phi, double tol = 1e-11, int max_iter = 5000)
      : phi_(std::move(phi)), tol_(tol), max_iter_(max_iter), jac_(phi_.jacobian()) {
    if (phi_.dim == 1) {
      if (jac_.col(0).minCoeff() <= 0.0) raise_numeric("NonMonotone1D", "map derivative is not positive");
      return;
    }
    det_ = jac_.col(0).cwiseProduct(jac_.col(3)) - jac_.col(1).cwiseProduct(jac_.col(2));
    if (det_.minCoeff() <= 0.0) raise_numeric("NonInvertibleMap", "Jacobian determinant is not positive");
    // M = Dphi^{-1} Dphi^{-T}, stored as (m00, m01, m11).
    const Eigen::ArrayXd a = jac_.col(0).array(), b = jac_.col(1).array(), c = jac_.col(2).array(),
                        d = jac_.col(3).array(), dt2 = det_.array().square();
    m_.resize(phi_.size(), 3);
    m_.col(0) = ((d * d + b * b) / dt2).matrix();
    m_.col(1) = (-(d * c + b * a) / dt2).matrix();
    m_.col(2) = ((c * c + a * a) / dt2).matrix();
    mbar_ = 0.5 * (m_.col(0) + m_.col(2)).mean();
  }

  const DiscreteDiffeo& base() const { return phi_; }
  const Eigen::MatrixXd& jacobian() const { return jac_; }

  // Dphi^{-1} B per node.
  GridField pull(const GridField& b) const {
    if (phi_.dim == 1) return b.cwiseQuotient(jac_);
    GridField out(b.rows(), 2);
    const Eigen::ArrayXd a = jac_.col(0).array(), bb = jac_.col(1).array(), c = jac_.col(2).array(),
                        d = jac_.col(3).array(), det = det_.array();
    out.col(0) = ((d * b.col(0).array() - bb * b.col(1).array()) / det).matrix();
    out.col(1) = ((-c * b.col(0).array() + a * b.col(1).array()) / det).matrix();
    return out;
  }

  // Dphi xi per node (left translation of a Lie-algebra field).
  GridField push(const GridField& xi) const {
    if (phi_.dim == 1) return xi.cwiseProduct(jac_);
    GridField out(xi.rows(), 2);
    out.col(0) = jac_.col(0).cwiseProduct(xi.col(0)) + jac_.col(1).cwiseProduct(xi.col(1));
    out.col(1) = jac_.col(2).cwiseProduct(xi.col(0)) + jac_.col(3).cwiseProduct(xi.col(1));
    return out;
  }

  Parts split(const GridField& b) const {
    Parts p;
    if (phi_.dim == 1) {
      // Vertical space is span{phi'}.
      const Eigen::VectorXd& d = jac_.col(0);
      const double c = b.col(0).dot(d) / d.squaredNorm();
      p.vertical = c * d;
      p.horizontal = b - p.vertical;
      p.potential = spectral::antiderivative(p.horizontal.col(0).cwiseProduct(d));
      return p;
    }
    const GridField gb = pull(b);  // G^T B with G = Dphi^{-T}
    const Eigen::VectorXd d0 = spectral::partial(gb.col(0), 0), d1 = spectral::partial(gb.col(1), 1);
    p.potential = solve(d0 + d1, d0.norm() + d1.norm(), &p.iterations);
    const Eigen::VectorXd c0 = spectral::partial(p.potential, 0), c1 = spectral::partial(p.potential, 1);
    // G grad chi = Dphi^{-T} grad chi.
    const Eigen::ArrayXd a = jac_.col(0).array(), bb = jac_.col(1).array(), c = jac_.col(2).array(),
                        d = jac_.col(3).array(), det = det_.array();
    p.horizontal.resize(b.rows(), 2);
    p.horizontal.col(0) = ((d * c0.array() - c * c1.array()) / det).matrix();
    p.horizontal.col(1) = ((-bb * c0.array() + a * c1.array()) / det).matrix();
    p.vertical = b - p.horizontal;
    return p;
  }

  GridField horizontal(const GridField& b) const { return split(b).horizontal; }
  GridField vertical(const GridField& b) const { return split(b).vertical; }

  // N(U, V) = P_V(grad_V U) for horizontal U; in labels grad_V U = DU Dphi^{-1} V.
  GridField normal_tensor(const GridField& u, const GridField& v) const {
    const GridField w = pull(v);
    if (phi_.dim == 1) return vertical(spectral::derivative(u.col(0)).cwiseProduct(w.col(0)));
    GridField g(u.rows(), 2);
    for (int a = 0; a < 2; ++a)
      g.col(a) = spectral::partial(u.col(a), 0).cwiseProduct(w.col(0)) + spectral::partial(u.col(a), 1).cwiseProduct(w.col(1));
    return vertical(g);
  }

  // Connection form: Dphi^{-1} P_V(B), a divergence-free field at the identity.
  GridField connection_form(const GridField& b) const { return pull(vertical(b)); }

 private:
  // Solves div(M grad chi) = rhs by preconditioned CG.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, double scale, int* iterations) const {
    const Eigen::VectorXd b = -rhs;
    const double bnorm = std::max(b.norm(), 1e-12 * scale / tol_);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    *iterations = 0;
    if (bnorm == 0.0) return x;
    Eigen::VectorXd r = b, z = precondition(r), p = z;
    double rz = r.dot(z);
    for (int it = 1; it <= max_iter_; ++it) {
      const Eigen::VectorXd kp = apply(p);
      const double alpha = rz / p.dot(kp);
      x += alpha * p;
      r -= alpha * kp;
      const double rel = r.norm() / bnorm;
      if (!std::isfinite(rel)) break;
      if (rel <= tol_) {
        *iterations = it;
        x.array() -= x.mean();
        return x;
      }
      z = precondition(r);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
    raise_numeric("SolverDivergence", "label-space Poisson solve did not reach tolerance");
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& chi) const {
    const Eigen::VectorXd g0 = spectral::partial(chi, 0), g1 = spectral::partial(chi, 1);
    const Eigen::VectorXd f0 = m_.col(0).cwiseProduct(g0) + m_.col(1).cwiseProduct(g1);
    const Eigen::VectorXd f1 = m_.col(1).cwiseProduct(g0) + m_.col(2).cwiseProduct(g1);
    return -(spectral::partial(f0, 0) + spectral::partial(f1, 1));
  }

  Eigen::VectorXd precondition(const Eigen::VectorXd& r) const {
    const int n = phi_.n;
    spectral::CVec c = spectral::fft2(r, n);
    auto sym = [n](int j) { return spectral::is_nyquist(j, n) ? 0.0 : static_cast<double>(spectral::wavenumber(j, n)); };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double k2 = mbar_ * (sym(i) * sym(i) + sym(j) * sym(j));
        auto& z = c[static_cast<std::size_t>(i) * n + j];
        z = k2 == 0.0 ? spectral::Complex(0.0) : z / k2;
      }
    return spectral::ifft2_real(c, n);
  }

  DiscreteDiffeo phi_;
  double tol_;
  int max_iter_;
  Eigen::MatrixXd jac_;
  Eigen::VectorXd det_;
  Eigen::MatrixXd m_;
  double mbar_ = 1.0;
};

inline GridField connection_form(const DiscreteDiffeo& phi, const GridField& samples) {
  return FiberSplit(phi).connection_form(samples);
}

// Lie-algebra divergence div(xi) at the identity (vol-divergence).
inline Eigen::VectorXd lie_divergence(const GridField& xi, int dim) { return grid_divergence(xi, dim); }

// ---------------------------------------------------------------- horizontal lift

struct LiftFields {
  MeasureVectorField drift{1};
  std::vector<MeasureVectorField> noise;
};

enum class Calculus { ito, stratonovich };

struct DiffeoPath {
  std::vector<double> times;
  std::vector<DiscreteDiffeo> maps;
  MKVDiagnostics diagnostics;
};

struct LiftOptions {
  Calculus calculus = Calculus::ito;
  bool picard = false;  // Ito only: windowed Picard instead of the single-pass scheme
  double tol = 1e-12;
  int store_every = 1;
};

// Phi_t = X_t o phi0 where X_t is the flow of the measure diffusion started at p(phi0). The
// Ito lift runs the McKean-Vlasov solver on the label cloud of phi0; the Stratonovich lift
// uses Heun steps with the measure of the live ensemble.
inline DiffeoPath horizontal_lift_measure_diffusion(const LiftFields& f, const DiscreteDiffeo& phi0,
                                                    const BrownianDriver& w, const LiftOptions& opt = {}) {
  phi0.check();
  DiffeoPath out;
  if (opt.calculus == Calculus::ito) {
    MKVProblem pb;
    pb.dim = phi0.dim;
    pb.drift = f.drift;
    pb.noise = f.noise;
    pb.initial = phi0.cloud();
    pb.step = w.step();
    pb.horizon = w.horizon();
    MKVSolution sol;
    if (opt.picard) {
      PicardOptions po;
      po.tol = opt.tol;
      po.store_every = opt.store_every;
      sol = picard_solve(pb, w, po);
    } else {
      sol = self_consistent_step_solve(pb, w, opt.store_every);
    }
    out.times = sol.path.times;
    out.diagnostics = sol.diagnostics;
    for (const auto& s : sol.path.states) {
      out.maps.push_back(DiscreteDiffeo::from_cloud(s));
      if (phi0.dim == 1) detail::check_monotone_1d(out.maps.back().values.col(0));
    }
    return out;
  }
  if (w.channels() < static_cast<int>(f.noise.size())) raise_config("DriverChannels", "driver has too few channels");
  auto increment = [&](const ParticleCloud& c, int k) {
    Eigen::MatrixXd d = w.step() * detail::field_sites(f.drift, c, 0);
    for (std::size_t i = 0; i < f.noise.size(); ++i)
      d += w.increment(static_cast<int>(i), k) * detail::field_sites(f.noise[i], c, 0);
    return d;
  };
  ParticleCloud c = phi0.cloud();
  out.times.push_back(0.0);
  out.maps.push_back(phi0);
  for (int k = 0; k < w.steps(); ++k) {
    const Eigen::MatrixXd d0 = increment(c, k);
    ParticleCloud pred = c;
    pred.points += d0;
    c.points += 0.5 * (d0 + increment(pred, k));
    detail::check_finite(c.points);
    if ((k + 1) % opt.store_every == 0 || k + 1 == w.steps()) {
      out.times.push_back(w.time(k + 1));
      out.maps.push_back(DiscreteDiffeo::from_cloud(c));
      if (phi0.dim == 1) detail::check_monotone_1d(c.points.col(0));
    }
  }
  return out;
}

// ---------------------------------------------------------------- horizontal transport

enum class QScheme { heun, ito_euler, milstein };

struct TransportState {
  DiffeoTangent current;
  double time = 0.0;
  double norm = 0.0;
  double vertical_norm = 0.0;
};

namespace detail {

inline TransportState make_state(const FiberSplit& s, const GridField& b, double t) {
  TransportState st{{s.base(), b, std::nullopt}, t, label_norm(b), label_norm(s.vertical(b))};
  return st;
}

// d/ds N_{phi + s Zj}(B + s N(B, Zj), Zi) at s = 0 by central differences.
inline GridField q_correction(const FiberSplit& at, const GridField& b, const GridField& zi, const GridField& zj,
                              double delta) {
  const GridField nb = at.normal_tensor(b, zj);
  auto eval = [&](double s) {
    DiscreteDiffeo phi = at.base();
    phi.values += s * zj;
    return FiberSplit(phi).normal_tensor(b + s * nb, zi);
  };
  return (eval(delta) - eval(-delta)) / (2 * delta);
}

}  // namespace detail

// Horizontal transport along a lifted path: o D_t U = N(U, o dphi_t) with the covariant
// derivative of the flat L^2(vol) metric (plain time derivative of label samples).
// heun: Stratonovich trapezoid along the path increments. ito_euler: the Ito form, i.e. the
// increment N(U, dphi) plus 1/2 sum_i C_ii dt. milstein: the same with 1/2 sum_ij C_ij dW^i dW^j.
// Here C_ij is the derivative of N(U, Z_i) along (Z_j, N(U, Z_j)). The path must hold every
// driver step.
inline std::vector<TransportState> integrate_Q(const LiftFields& f, const DiffeoPath& path, const DiffeoTangent& u0,
                                               const BrownianDriver& w, QScheme scheme = QScheme::heun,
                                               int store_every = 1, double delta = 1e-4) {
  const int steps = w.steps();
  if (static_cast<int>(path.maps.size()) != steps + 1) raise_config("PathGrid", "path must store every driver step");
  if (u0.samples.rows() != path.maps[0].size() || u0.samples.cols() != path.maps[0].dim)
    raise_config("DimensionMismatch", "initial vector does not match the path");
  if (scheme != QScheme::heun && w.channels() < static_cast<int>(f.noise.size()))
    raise_config("DriverChannels", "driver has too few channels");
  std::vector<TransportState> out;
  FiberSplit here(path.maps[0]);
  GridField b = u0.samples;
  out.push_back(detail::make_state(here, b, 0.0));
  for (int k = 0; k < steps; ++k) {
    FiberSplit next(path.maps[static_cast<std::size_t>(k) + 1]);
    const GridField dphi = next.base().values - here.base().values;
    const GridField n0 = here.normal_tensor(b, dphi);
    if (scheme == QScheme::heun) {
      const GridField pred = b + n0;
      b += 0.5 * (n0 + next.normal_tensor(pred, dphi));
    } else {
      GridField corr = GridField::Zero(b.rows(), b.cols());
      const ParticleCloud cloud = here.base().cloud();
      std::vector<GridField> z;
      for (const auto& zf : f.noise) z.push_back(detail::field_sites(zf, cloud, 0));
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double dwi = w.increment(static_cast<int>(i), k);
        if (scheme == QScheme::ito_euler) {
          corr += 0.5 * w.step() * detail::q_correction(here, b, z[i], z[i], delta);
          continue;
        }
        for (std::size_t j = 0; j < z.size(); ++j) {
          const double dwj = w.increment(static_cast<int>(j), k);
          corr += 0.5 * dwi * dwj * detail::q_correction(here, b, z[i], z[j], delta);
        }
      }
      b += n0 + corr;
    }
    here = std::move(next);
    if ((k + 1) % store_every == 0 || k + 1 == steps) out.push_back(detail::make_state(here, b, w.time(k + 1)));
  }
  return out;
}

// ---------------------------------------------------------------- transport on P

// Eulerian samples of A on the n-grid from the samples B = A o phi (1-D, by inversion).
inline Eigen::VectorXd pushdown_1d(const DiscreteDiffeo& phi, const Eigen::VectorXd& samples) {
  const int n = phi.n;
  detail::check_monotone_1d(phi.values.col(0));
  const Eigen::VectorXd x = spectral::nodes(n), y = phi.values.col(0);
  const spectral::Interpolant1D u(phi.displacement(0)), b(samples);
  Eigen::VectorXd out(n);
  const double y0 = y(0);
  for (int k = 0; k < n; ++k) {
    const double z = y0 + wrap_angle(x(k) - y0);
    const Eigen::Index j = std::upper_bound(y.data(), y.data() + n, z) - y.data() - 1;
    const double lo = x(j), hi = j + 1 < n ? x(j + 1) : kTwoPi;
    out(k) = b.value(detail::invert_monotone(u, z, lo, hi));
  }
  return out;
}

// Fraction of spectral energy above half the resolved band.
inline double high_frequency_fraction(const Eigen::VectorXd& v, int dim) {
  const int n = dim == 1 ? static_cast<int>(v.size()) : spectral::grid_side(v);
  const spectral::CVec c = dim == 1 ? spectral::fft(v) : spectral::fft2(v, n);
  double hi = 0.0, all = 0.0;
  for (std::size_t idx = 0; idx < c.size(); ++idx) {
    const int i = dim == 1 ? static_cast<int>(idx) : static_cast<int>(idx) / n;
    const int j = dim == 1 ? 0 : static_cast<int>(idx) % n;
    const int k = std::max(std::abs(spectral::wavenumber(i, n)), std::abs(spectral::wavenumber(j, n)));
    const double e = std::norm(c[idx]);
    all += e;
    if (4 * k > n) hi += e;
  }
  return all > 0.0 ? hi / all : 0.0;
}

struct PTransportPath {
  std::vector<double> times;
  std::vector<TransportState> lifted;
  std::vector<TangentPotential> projected;  // 1-D: v_t as a potential on the grid of p(phi_t)
  std::vector<double> norms;                // |v_t|_{mu_t}
  std::vector<double> high_frequency;       // smoothness indicator of v_t
  DiffeoPath lift;
};

// T_{0,t}(v0): the horizontal lift of v0 at phi0 transported along the lifted path and read
// back on P. In 2-D the tangent vector stays represented by its samples at the image nodes.
inline PTransportPath stochastic_parallel_transport_P(const LiftFields& f, const DiscreteDiffeo& phi0,
                                                      const TangentPotential& v0, const BrownianDriver& w,
                                                      QScheme scheme = QScheme::heun, int store_every = 1,
                                                      const LiftOptions& lift_opt = {}) {
  PTransportPath out;
  LiftOptions lo = lift_opt;
  lo.store_every = 1;
  out.lift = horizontal_lift_measure_diffusion(f, phi0, w, lo);
  const DiffeoTangent u0 = DiffeoTangent::horizontal_lift(phi0, v0);
  const auto states = integrate_Q(f, out.lift, u0, w, scheme, store_every);
  for (const auto& st : states) {
    out.times.push_back(st.time);
    out.norms.push_back(st.norm);
    if (phi0.dim == 1) {
      const Eigen::VectorXd a = pushdown_1d(st.current.base, st.current.samples.col(0));
      out.projected.push_back({1, phi0.n, spectral::antiderivative(a)});
      out.high_frequency.push_back(high_frequency_fraction(a, 1));
    } else {
      out.high_frequency.push_back(high_frequency_fraction(st.current.samples.col(0), 2));
    }
    out.lifted.push_back(st);
  }
  if (store_every > 1) {
    std::vector<DiscreteDiffeo> kept;
    std::vector<double> times;
    for (std::size_t k = 0; k < out.lift.maps.size(); ++k)
      if (k % static_cast<std::size_t>(store_every) == 0 || k + 1 == out.lift.maps.size()) {
        kept.push_back(out.lift.maps[k]);
        times.push_back(out.lift.times[k]);
      }
    out.lift.maps = std::move(kept);
    out.lift.times = std::move(times);
  }
  return out;
}

struct FullTransportPath {
  std::vector<TransportState> states;     // full lifted vector
  std::vector<TransportState> horizontal; // horizontal part alone
  GridField connection;                   // constant connection-form coordinate
  std::vector<double> connection_drift;   // |connection_form(state) - connection| per stored time
};

// Equivariant lift to the whole tangent space: the horizontal part is transported by Q and
// the vertical part is carried by left translation of its connection-form coordinate.
inline FullTransportPath lift_transport_full(const LiftFields& f, const DiffeoTangent& a0, const BrownianDriver& w,
                                             QScheme scheme = QScheme::heun, int store_every = 1,
                                             const LiftOptions& lift_opt = {}) {
  const FiberSplit at0(a0.base);
  const auto parts = at0.split(a0.samples);
  FullTransportPath out;
  out.connection = at0.pull(parts.vertical);
  LiftOptions lo = lift_opt;
  lo.store_every = 1;
  const DiffeoPath path = horizontal_lift_measure_diffusion(f, a0.base, w, lo);
  out.horizontal = integrate_Q(f, path, {a0.base, parts.horizontal, parts.potential}, w, scheme, store_every);
  for (const auto& h : out.horizontal) {
    const FiberSplit at(h.current.base);
    const GridField full = h.current.samples + at.push(out.connection);
    out.states.push_back(detail::make_state(at, full, h.time));
    out.connection_drift.push_back((at.connection_form(full) - out.connection).cwiseAbs().maxCoeff());
  }
  return out;
}

// ---------------------------------------------------------------- equivariant diffusions on D(S^1)

// Right-invariant field A(Phi) = a(p(Phi)) o Phi, returned as label samples.
using RightInvariantField = std::function<Eigen::VectorXd(const DiscreteDiffeo&)>;

// c(mu) = base + cos1 int cos dmu + sin1 int sin dmu.
struct VerticalCoefficient {
  double base = 0.0, cos1 = 0.0, sin1 = 0.0;
  double operator()(const ParticleCloud& mu) const {
    const auto [c, s] = fourier_moment(mu, 0, 1);
    return base + cos1 * c + sin1 * s;
  }
};

inline RightInvariantField right_invariant(const MeasureVectorField& z) {
  return [z](const DiscreteDiffeo& phi) -> Eigen::VectorXd {
    if (z.is_zero()) return Eigen::VectorXd::Zero(phi.size());
    return z.at_sites(phi.cloud()).col(0);
  };
}

// Vertical field c(mu) / rho; since rho(Phi(x)) Phi'(x) = 1 its samples are c(mu) Phi'.
inline RightInvariantField right_invariant(const VerticalCoefficient& c) {
  return [c](const DiscreteDiffeo& phi) -> Eigen::VectorXd { return c(phi.cloud()) * phi.jacobian().col(0); };
}

inline RightInvariantField operator+(RightInvariantField a, RightInvariantField b) {
  return [a = std::move(a), b = std::move(b)](const DiscreteDiffeo& phi) -> Eigen::VectorXd { return a(phi) + b(phi); };
}

// Direct Stratonovich Heun integration of o dPhi = A_0(Phi) dt + sum_i A_i(Phi) o dW^i on D(S^1).
inline std::vector<DiscreteDiffeo> integrate_right_invariant(const std::vector<RightInvariantField>& fields,
                                                             const DiscreteDiffeo& phi0, const BrownianDriver& w,
                                                             int store_every = 1) {
  if (phi0.dim != 1) raise_config("BadDimension", "right-invariant flows are provided on the circle");
  if (fields.empty()) raise_config("NoFields", "at least the drift field is required");
  if (w.channels() < static_cast<int>(fields.size()) - 1) raise_config("DriverChannels", "driver has too few channels");
  auto increment = [&](const DiscreteDiffeo& p, int k) {
    Eigen::VectorXd d = w.step() * fields[0](p);
    for (std::size_t i = 1; i < fields.size(); ++i) d += w.increment(static_cast<int>(i) - 1, k) * fields[i](p);
    return d;
  };
  std::vector<DiscreteDiffeo> out{phi0};
  DiscreteDiffeo phi = phi0;
  for (int k = 0; k < w.steps(); ++k) {
    const Eigen::VectorXd d0 = increment(phi, k);
    DiscreteDiffeo pred = phi;
    pred.values.col(0) += d0;
    phi.values.col(0) += 0.5 * (d0 + increment(pred, k));
    detail::check_monotone_1d(phi.values.col(0));
    if ((k + 1) % store_every == 0 || k + 1 == w.steps()) out.push_back(phi);
  }
  return out;
}

struct Decomposition {
  std::vector<double> times;
  std::vector<DiscreteDiffeo> h;               // horizontal component
  std::vector<DiscreteDiffeo> g;               // volume-preserving component
  std::vector<DiscreteDiffeo> reconstruction;  // h o g
};

// Phi = h o g for o dPhi = A_0(Phi) dt + sum_i A_i(Phi) o dW^i (fields[0] is the drift):
// h follows the horizontal parts P_H(A_i(h)) and g solves o dg = sum_i varpi(A_i(h)) o g o dW^i.
// Both are integrated jointly by Heun steps.
inline Decomposition equivariant_decompose_D(const std::vector<RightInvariantField>& fields, const DiscreteDiffeo& phi0,
                                             const BrownianDriver& w, int store_every = 1) {
  if (phi0.dim != 1) raise_config("BadDimension", "the decomposition is provided on the circle");
  if (fields.empty()) raise_config("NoFields", "at least the drift field is required");
  if (w.channels() < static_cast<int>(fields.size()) - 1) raise_config("DriverChannels", "driver has too few channels");
  phi0.check();
  struct Rates {
    Eigen::VectorXd dh, xi;
  };
  auto rates = [&](const DiscreteDiffeo& h, int k) {
    const FiberSplit at(h);
    Rates r{Eigen::VectorXd::Zero(h.size()), Eigen::VectorXd::Zero(h.size())};
    for (std::size_t i = 0; i < fields.size(); ++i) {
      const double d = i == 0 ? w.step() : w.increment(static_cast<int>(i) - 1, k);
      if (d == 0.0) continue;
      const auto parts = at.split(fields[i](h));
      r.dh += d * parts.horizontal.col(0);
      r.xi += d * at.pull(parts.vertical).col(0);
    }
    return r;
  };
  auto along = [](const Eigen::VectorXd& xi, const DiscreteDiffeo& g) {
    const spectral::Interpolant1D f(xi);
    Eigen::VectorXd out(g.size());
    for (int j = 0; j < g.size(); ++j) out(j) = f.value(g.values(j, 0));
    return out;
  };
  Decomposition out;
  DiscreteDiffeo h = phi0, g = DiscreteDiffeo::identity(1, phi0.n);
  auto store = [&](double t) {
    out.times.push_back(t);
    out.h.push_back(h);
    out.g.push_back(g);
    out.reconstruction.push_back(h.compose(g));
  };
  store(0.0);
  for (int k = 0; k < w.steps(); ++k) {
    const Rates r0 = rates(h, k);
    const Eigen::VectorXd g0 = along(r0.xi, g);
    DiscreteDiffeo hp = h, gp = g;
    hp.values.col(0) += r0.dh;
    gp.values.col(0) += g0;
    const Rates r1 = rates(hp, k);
    h.values.col(0) += 0.5 * (r0.dh + r1.dh);
    g.values.col(0) += 0.5 * (g0 + along(r1.xi, gp));
    detail::check_monotone_1d(h.values.col(0));
    if ((k + 1) % store_every == 0 || k + 1 == w.steps()) store(w.time(k + 1));
  }
  return out;
}

struct VerticalDriftReport {
  Decomposition path;
  RightInvariantField stratonovich_drift;  // -1/2 sum_i grad_{Y_i} Y_i
  double quadratic_variation = 0.0;        // realized QV of h in L^2(vol)
  double field_scale = 0.0;                // max |Y_i| at phi0
  double initial_drift_norm = 0.0;         // |P_H(drift)| at phi0, the fiber second fundamental form term
  bool finite_variation = false;           // QV <= 1e-6 scale^2 T
};

// Ito vertical fields dPhi = sum_i Y_i(Phi) dW^i: converts to Stratonovich with the numerical
// covariant derivative grad_Y Y = d/ds Y(Phi + s Y(Phi)), then decomposes. The horizontal
// component only sees the drift -1/2 sum_i P_H(grad_{Y_i} Y_i).
inline VerticalDriftReport vertical_ito_drift(const std::vector<RightInvariantField>& ito_fields,
                                              const DiscreteDiffeo& phi0, const BrownianDriver& w,
                                              double delta = 1e-5) {
  VerticalDriftReport rep;
  rep.stratonovich_drift = [ito_fields, delta](const DiscreteDiffeo& phi) -> Eigen::VectorXd {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(phi.size());
    for (const auto& y : ito_fields) {
      const Eigen::VectorXd v = y(phi);
      DiscreteDiffeo plus = phi, minus = phi;
      plus.values.col(0) += delta * v;
      minus.values.col(0) -= delta * v;
      acc -= 0.25 * (y(plus) - y(minus)) / delta;
    }
    return acc;
  };
  std::vector<RightInvariantField> all{rep.stratonovich_drift};
  all.insert(all.end(), ito_fields.begin(), ito_fields.end());
  rep.path = equivariant_decompose_D(all, phi0, w);
  for (std::size_t k = 0; k + 1 < rep.path.h.size(); ++k) {
    const Eigen::VectorXd d = rep.path.h[k + 1].values.col(0) - rep.path.h[k].values.col(0);
    rep.quadratic_variation += d.squaredNorm() / d.size();
  }
  for (const auto& y : ito_fields) rep.field_scale = std::max(rep.field_scale, y(phi0).cwiseAbs().maxCoeff());
  rep.initial_drift_norm = label_norm(FiberSplit(phi0).horizontal(rep.stratonovich_drift(phi0)));
  rep.finite_variation = rep.quadratic_variation <= 1e-6 * rep.field_scale * rep.field_scale * w.horizon();
  return rep;
}

}  // namespace otto
