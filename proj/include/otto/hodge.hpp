#pragma once

// Helmholtz-Hodge splitting of vector fields on S^1 and T^2 with respect to a positive
// density: A = grad(psi) + Y with div(rho Y) = 0. Tangent vectors along a diffeomorphism
// are pulled back to fields on the base grid, so the same split gives the horizontal and
// vertical parts. Also the normal tensor, its adjoint, and the Levi-Civita connection on P.

#include "otto/error.hpp"
#include "otto/fields.hpp"
#include "otto/measure.hpp"
#include "otto/spectral.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>

namespace otto {

// Grid vector field: one row per node, one column per axis.
using GridField = Eigen::MatrixXd;

// <A, B>_rho = int <A, B> rho dvol in the normalized-volume convention.
inline double weighted_inner(const GridDensity& rho, const GridField& a, const GridField& b) {
  return rho.integrate(a.cwiseProduct(b).rowwise().sum());
}

inline double weighted_norm(const GridDensity& rho, const GridField& a) { return std::sqrt(weighted_inner(rho, a, a)); }

// div_rho(A) = div(rho A) / rho, the negative adjoint of grad in L^2(rho).
inline Eigen::VectorXd weighted_div(const GridDensity& rho, const GridField& a) {
  if (rho.values.minCoeff() <= 0.0) raise_numeric("NonSmoothDensity", "weighted divergence needs rho > 0");
  GridField flux = a;
  for (int d = 0; d < a.cols(); ++d) flux.col(d) = flux.col(d).cwiseProduct(rho.values);
  return grid_divergence(flux, rho.dim).cwiseQuotient(rho.values);
}

// Hessian of a grid potential: columns (d00) in 1-D, (d00, d01, d11) in 2-D.
inline Eigen::MatrixXd grid_hessian(const Eigen::VectorXd& psi, int dim) {
  if (dim == 1) return spectral::derivative(psi, 2);
  Eigen::MatrixXd h(psi.size(), 3);
  h.col(0) = spectral::partial(psi, 0, 2);
  h.col(1) = spectral::partial(spectral::partial(psi, 0), 1);
  h.col(2) = spectral::partial(psi, 1, 2);
  return h;
}

// Row-wise Hess(psi) * A.
inline GridField hessian_apply(const Eigen::MatrixXd& hess, const GridField& a) {
  if (a.cols() == 1) return hess.col(0).cwiseProduct(a.col(0));
  GridField out(a.rows(), 2);
  out.col(0) = hess.col(0).cwiseProduct(a.col(0)) + hess.col(1).cwiseProduct(a.col(1));
  out.col(1) = hess.col(1).cwiseProduct(a.col(0)) + hess.col(2).cwiseProduct(a.col(1));
  return out;
}

struct HodgeSplit {
  Eigen::VectorXd potential;  // mean zero
  GridField gradient;         // grad(potential)
  GridField divergence_free;  // div(rho Y) = 0
  double residual = 0.0;      // relative residual of the weighted Poisson solve
  int iterations = 0;
};

class WeightedHodgeSolver {
 public:
  explicit WeightedHodgeSolver(GridDensity rho, double tol = 1e-10, int max_iter = 5000)
      : rho_(std::move(rho)), tol_(tol), max_iter_(max_iter) {
    if (rho_.values.minCoeff() <= 0.0) raise_numeric("NonSmoothDensity", "Hodge split needs rho > 0");
    inv_rho_mean_ = rho_.values.cwiseInverse().mean();
  }

  const GridDensity& density() const { return rho_; }

  // Solves div(rho grad psi) = rhs for mean-zero psi (2-D; rhs in the operator's range).
  // `scale` is the size of rhs before cancellation; residuals below 1e-12 * scale count as
  // converged, since a rhs that nearly cancels is dominated by rounding.
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs, double* residual = nullptr, int* iterations = nullptr,
                        double scale = 0.0) const {
    // K = -div(rho grad .) is symmetric positive semidefinite; solve K psi = -rhs.
    const Eigen::VectorXd b = -rhs;
    const double bnorm = std::max(b.norm(), 1e-12 * scale / tol_);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    if (bnorm == 0.0) {
      if (residual) *residual = 0.0;
      if (iterations) *iterations = 0;
      return x;
    }
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
        // Report the true residual, not the recursively updated one.
        const double true_rel = (apply(x) - b).norm() / bnorm;
        if (residual) *residual = true_rel;
        if (iterations) *iterations = it;
        x.array() -= x.mean();
        return x;
      }
      z = precondition(r);
      const double rz_new = r.dot(z);
      p = z + (rz_new / rz) * p;
      rz = rz_new;
    }
    raise_numeric("SolverDivergence", "weighted Poisson solve did not reach tolerance; rho is ill-conditioned");
  }

  HodgeSplit split(const GridField& a) const {
    HodgeSplit s;
    if (rho_.dim == 1) {
      // Vertical space is span{1/rho}: Y = (int A / int rho^-1) rho^-1.
      const double coef = a.col(0).mean() / inv_rho_mean_;
      s.divergence_free = coef * rho_.values.cwiseInverse();
      s.gradient = a - s.divergence_free;
      s.potential = spectral::antiderivative(s.gradient.col(0));
      return s;
    }
    const Eigen::VectorXd d0 = spectral::partial(a.col(0).cwiseProduct(rho_.values), 0);
    const Eigen::VectorXd d1 = spectral::partial(a.col(1).cwiseProduct(rho_.values), 1);
    s.potential = solve(d0 + d1, &s.residual, &s.iterations, d0.norm() + d1.norm());
    s.gradient = grid_gradient(s.potential, 2);
    s.divergence_free = a - s.gradient;
    return s;
  }

  GridField horizontal(const GridField& a) const { return split(a).gradient; }
  GridField vertical(const GridField& a) const { return split(a).divergence_free; }

 private:
  Eigen::VectorXd apply(const Eigen::VectorXd& psi) const {
    GridField g = grid_gradient(psi, 2);
    for (int d = 0; d < 2; ++d) g.col(d) = g.col(d).cwiseProduct(rho_.values);
    return -grid_divergence(g, 2);
  }

  // Inverse of -Laplacian with the same derivative symbols (zero at Nyquist) as the operator.
  Eigen::VectorXd precondition(const Eigen::VectorXd& r) const {
    const int n = rho_.n;
    spectral::CVec c = spectral::fft2(r, n);
    auto sym = [n](int j) { return spectral::is_nyquist(j, n) ? 0.0 : static_cast<double>(spectral::wavenumber(j, n)); };
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double k2 = sym(i) * sym(i) + sym(j) * sym(j);
        auto& z = c[static_cast<std::size_t>(i) * n + j];
        z = k2 == 0.0 ? spectral::Complex(0.0) : z / k2;
      }
    return spectral::ifft2_real(c, n);
  }

  GridDensity rho_;
  double tol_;
  int max_iter_;
  double inv_rho_mean_ = 1.0;
};

inline HodgeSplit hodge_split(const GridDensity& rho, const GridField& a) { return WeightedHodgeSolver(rho).split(a); }

// Eulerian vector field on the density grid; horizontal fields carry their gradient potential.
struct GridTangent {
  GridField values;
  std::optional<Eigen::VectorXd> potential;

  static GridTangent gradient_of(const Eigen::VectorXd& psi, int dim) { return {grid_gradient(psi, dim), psi}; }
  static GridTangent general(GridField v) { return {std::move(v), std::nullopt}; }
};

// N(U, A) = P_V((grad U)^T A) for horizontal U = grad(psi).
inline GridField normal_tensor(const WeightedHodgeSolver& solver, const GridTangent& u, const GridField& a) {
  if (!u.potential) raise_numeric("NotHorizontal", "normal tensor needs the potential of its first argument");
  const int dim = solver.density().dim;
  return solver.vertical(hessian_apply(grid_hessian(*u.potential, dim), a));
}

inline GridField normal_tensor(const GridDensity& rho, const GridTangent& u, const GridField& a) {
  return normal_tensor(WeightedHodgeSolver(rho), u, a);
}

// Adjoint of C -> N(U, C) on horizontal C: P_H((grad U) P_V(B)).
inline HodgeSplit oneill_adjoint(const WeightedHodgeSolver& solver, const GridTangent& u, const GridField& b) {
  if (!u.potential) raise_numeric("NotHorizontal", "adjoint needs the potential of its first argument");
  const int dim = solver.density().dim;
  return solver.split(hessian_apply(grid_hessian(*u.potential, dim), solver.vertical(b)));
}

inline GridField oneill_adjoint(const GridDensity& rho, const GridTangent& u, const GridField& b) {
  return oneill_adjoint(WeightedHodgeSolver(rho), u, b).gradient;
}

namespace detail {

// d/ds phi(., rho + s rho_dot) at s = 0 on the grid: central differences at delta and delta/2,
// Richardson-combined.
inline Eigen::VectorXd potential_variation(const MeasureVectorField& z, const GridDensity& rho,
                                           const Eigen::VectorXd& rho_dot, double delta) {
  auto diff = [&](double d) {
    GridDensity plus = rho, minus = rho;
    plus.values += d * rho_dot;
    minus.values -= d * rho_dot;
    return Eigen::VectorXd((z.bind(plus).potential_on_grid(rho.n) - z.bind(minus).potential_on_grid(rho.n)) / (2 * d));
  };
  const Eigen::VectorXd a = diff(delta), b = diff(0.5 * delta);
  return (4.0 * b - a) / 3.0;
}

}  // namespace detail

// Levi-Civita derivative of the gradient-form field Z along v = grad(g) at mu:
// P_H(Hess(phi) grad g) + grad(d/dt phi(., mu_t)), mu_t transported by v. Returned as a
// mean-zero potential.
inline TangentPotential levi_civita_P(const GridDensity& mu, const TangentPotential& v, const MeasureVectorField& z,
                                      double delta = 1e-4) {
  if (v.n != mu.n || v.dim != mu.dim || z.dim() != mu.dim) raise_config("DimensionMismatch", "grid sizes differ");
  const WeightedHodgeSolver solver(mu);
  const GridField gv = grid_gradient(v.values, mu.dim);
  const Eigen::VectorXd phi = z.bind(mu).potential_on_grid(mu.n);
  TangentPotential out{mu.dim, mu.n, solver.split(hessian_apply(grid_hessian(phi, mu.dim), gv)).potential};
  if (z.measure_dependent()) {
    GridField flux = gv;
    for (int d = 0; d < mu.dim; ++d) flux.col(d) = flux.col(d).cwiseProduct(mu.values);
    const Eigen::VectorXd rho_dot = -grid_divergence(flux, mu.dim);
    out.values += detail::potential_variation(z, mu, rho_dot, delta);
  }
  out.values.array() -= out.values.mean();
  return out;
}

}  // namespace otto
