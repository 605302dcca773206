#pragma once

// Conditional McKean-Vlasov equations on S^1 and T^2 driven by common noise:
//   dX_t(x) = Z_0(X_t(x), M_t) dt + sum_i Z_i(X_t(x), M_t) dW^i,   M_t = (X_t)_sharp mu.
// On flat tori the Levi-Civita Ito equation is the coordinate Ito equation in angles.
// Solvers: windowed Picard iteration over frozen measure paths, a single-pass scheme
// that updates the measure every step, a residual check of the Ito formula for
// F_f(mu) = int f dmu, and an Eulerian density SPDE for 1-D cross-checks.

#include "otto/brownian.hpp"
#include "otto/error.hpp"
#include "otto/fields.hpp"
#include "otto/measure.hpp"
#include "otto/spectral.hpp"
#include "otto/wasserstein.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace otto {

struct MKVProblem {
  int dim = 1;
  MeasureVectorField drift{1};
  std::vector<MeasureVectorField> noise;
  ParticleCloud initial;  // the measure mu; P = initial.size()
  double step = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  int kde_n = 0;  // KDE grid for density-dependent fields on unlabelled clouds

  std::string manifold() const { return dim == 1 ? "circle" : "torus2"; }
  int ensemble_size() const { return initial.size(); }

  void check() const {
    if (dim != 1 && dim != 2) raise_config("BadDimension", "dimension must be 1 or 2");
    if (drift.dim() != dim) raise_config("DimensionMismatch", "drift dimension differs from the problem");
    for (const auto& z : noise)
      if (z.dim() != dim) raise_config("DimensionMismatch", "noise field dimension differs from the problem");
    if (initial.dim != dim || initial.points.cols() != dim) raise_config("DimensionMismatch", "initial measure dimension");
    if (initial.size() < 2) raise_config("TooFewParticles", "ensemble size must be at least 2");
    if (!(step > 0.0) || !(horizon > 0.0)) raise_config("BadGrid", "step and horizon must be positive");
    initial.check();
    const bool needs_density = drift.needs_density() ||
                               std::any_of(noise.begin(), noise.end(), [](const auto& z) { return z.needs_density(); });
    if (needs_density && !initial.labels && kde_n <= 0)
      raise_config("MissingKdeGrid", "density-dependent fields on an unlabelled ensemble need kde_n");
  }

  BrownianDriver driver() const {
    return BrownianDriver(std::max<int>(1, static_cast<int>(noise.size())), horizon, step, seed);
  }
};

// Builds the initial ensemble: the labelled quadrature cloud when P equals the grid size,
// otherwise P equal-weight quantile atoms (1-D) or a labelled sqrt(P) x sqrt(P) grid (2-D).
inline ParticleCloud initial_ensemble(const GridDensity& mu, int particles) {
  if (particles == mu.size()) return ParticleCloud::from_grid(mu);
  if (mu.dim == 1) return detail::quantile_atoms(mu, particles);
  const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(particles))));
  if (m * m != particles) raise_config("BadEnsemble", "2-D ensembles need a square particle count");
  const spectral::Interpolant2D f(mu.values);
  GridDensity g = GridDensity::from_function(2, m, [&](const Eigen::VectorXd& x) { return f.value(x(0), x(1)); });
  if (!g.smooth(0.0)) raise_numeric("NonSmoothDensity", "resampled initial density is not positive");
  g.normalize();
  return ParticleCloud::from_grid(g);
}

struct MKVDiagnostics {
  std::vector<std::vector<double>> window_gaps;  // Picard gap sequence per window
  std::vector<double> window_starts;
  std::vector<int> window_steps;
  int window_restarts = 0;  // window halvings
  int max_iterations = 0;
  int monotonicity_violations = 0;  // stored 1-D states whose particle order changed
};

struct MKVSolution {
  MeasurePath path;  // M_t = (X_t)_sharp mu share the particle arrays
  MKVDiagnostics diagnostics;
};

namespace detail {

// Z(., mu) at arbitrary points.
inline Eigen::MatrixXd field_values(const MeasureVectorField& z, const ParticleCloud& mu, const Eigen::MatrixXd& pts,
                                    int kde_n) {
  if (z.is_zero()) return Eigen::MatrixXd::Zero(pts.rows(), pts.cols());
  if (!z.needs_density()) return BoundField(z.dim(), z.trig_part(mu)).values(pts);
  const int n = mu.labels ? mu.labels->n : kde_n;
  if (n <= 0) raise_numeric("NonSmoothDensity", "density-dependent field on an unlabelled cloud needs a KDE grid");
  return z.bind(mu, n).values(pts);
}

// Z(., mu) at mu's own particles.
inline Eigen::MatrixXd field_sites(const MeasureVectorField& z, const ParticleCloud& mu, int kde_n) {
  if (z.is_zero()) return Eigen::MatrixXd::Zero(mu.size(), mu.dim);
  return z.at_sites(mu, kde_n);
}

// Label-coupling distance sqrt(sum_j w_j |X_j - Y_j|^2) on the torus; an upper bound for W2.
inline double coupling_distance(const ParticleCloud& a, const ParticleCloud& b) {
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i)
    for (int d = 0; d < a.dim; ++d) {
      const double r = circle_diff(a.points(i, d), b.points(i, d));
      acc += a.weights(i) * r * r;
    }
  return std::sqrt(acc);
}

inline void check_finite(const Eigen::MatrixXd& x) {
  if (!x.allFinite()) raise_numeric("NonFinite", "particle positions left the manifold");
}

inline bool order_preserved(const ParticleCloud& c) {
  if (c.dim != 1 || c.size() < 2) return true;
  const auto& x = c.points;
  for (int i = 0; i + 1 < c.size(); ++i)
    if (x(i + 1, 0) <= x(i, 0)) return false;
  return x(0, 0) + kTwoPi > x(c.size() - 1, 0);
}

inline Eigen::MatrixXd noise_increment(const MKVProblem& pb, const ParticleCloud& mu, const Eigen::MatrixXd& pts,
                                       bool own_sites, const BrownianDriver& w, int k) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(pts.rows(), pts.cols());
  for (std::size_t i = 0; i < pb.noise.size(); ++i) {
    const double dw = w.increment(static_cast<int>(i), k);
    if (dw == 0.0 || pb.noise[i].is_zero()) continue;
    acc += dw * (own_sites ? field_sites(pb.noise[i], mu, pb.kde_n) : field_values(pb.noise[i], mu, pts, pb.kde_n));
  }
  return acc;
}

// One step along a frozen measure path: Heun in the drift, Euler-Maruyama in the noise.
inline Eigen::MatrixXd frozen_step(const MKVProblem& pb, const Eigen::MatrixXd& x, const ParticleCloud& mu_now,
                                   const ParticleCloud& mu_next, const BrownianDriver& w, int k) {
  const double h = w.step();
  const Eigen::MatrixXd a0 = field_values(pb.drift, mu_now, x, pb.kde_n);
  const Eigen::MatrixXd dn = noise_increment(pb, mu_now, x, false, w, k);
  const Eigen::MatrixXd pred = x + h * a0 + dn;
  const Eigen::MatrixXd a1 = field_values(pb.drift, mu_next, pred, pb.kde_n);
  return x + 0.5 * h * (a0 + a1) + dn;
}

// One self-consistent step: the measure is the live ensemble, the corrector uses the
// predicted ensemble.
inline ParticleCloud live_step(const MKVProblem& pb, const ParticleCloud& c, const BrownianDriver& w, int k) {
  const double h = w.step();
  const Eigen::MatrixXd a0 = field_sites(pb.drift, c, pb.kde_n);
  const Eigen::MatrixXd dn = noise_increment(pb, c, c.points, true, w, k);
  ParticleCloud pred = c;
  pred.points = c.points + h * a0 + dn;
  const Eigen::MatrixXd a1 = field_sites(pb.drift, pred, pb.kde_n);
  ParticleCloud next = c;
  next.points = c.points + 0.5 * h * (a0 + a1) + dn;
  check_finite(next.points);
  return next;
}

inline void check_driver(const MKVProblem& pb, const BrownianDriver& w) {
  if (w.channels() < static_cast<int>(pb.noise.size()))
    raise_config("DriverChannels", "driver has fewer channels than noise fields");
  if (std::abs(w.step() - pb.step) > 1e-14 * pb.step || std::abs(w.horizon() - pb.horizon) > 1e-12 * pb.horizon)
    raise_config("DriverGrid", "driver grid differs from the problem grid");
}

}  // namespace detail

struct PicardOptions {
  double tol = 1e-10;
  int max_iter = 50;
  int initial_window = 0;  // steps per window; 0 means the whole horizon
  int store_every = 1;
  double contraction_ratio = 0.9;
};

// Picard iteration: X^{n+1} is driven by the frozen path M^n and the same driver. Each
// window starts from M^0 = constant; whenever a gap ratio reaches options.contraction_ratio
// before convergence the window is halved and restarted, and the shorter window is kept
// for the following windows.
inline MKVSolution picard_solve(const MKVProblem& pb, const BrownianDriver& w, const PicardOptions& opt = {}) {
  pb.check();
  detail::check_driver(pb, w);
  if (!(opt.tol > 0.0)) raise_config("BadTolerance", "tol must be positive");
  if (opt.max_iter < 1 || opt.store_every < 1) raise_config("BadOptions", "max_iter and store_every must be positive");
  const int steps = w.steps();
  MKVSolution sol;
  sol.path.times.push_back(0.0);
  sol.path.states.push_back(pb.initial);
  ParticleCloud state = pb.initial;
  int window = opt.initial_window > 0 ? std::min(opt.initial_window, steps) : steps;
  int k0 = 0;
  while (k0 < steps) {
    const int m = std::min(window, steps - k0);
    std::vector<ParticleCloud> frozen(static_cast<std::size_t>(m) + 1, state);
    std::vector<double> gaps;
    bool converged = false, restart = false;
    for (int it = 1; it <= opt.max_iter; ++it) {
      std::vector<ParticleCloud> next(frozen.size(), state);
      double gap = 0.0;
      for (int j = 0; j < m; ++j) {
        next[j + 1].points = detail::frozen_step(pb, next[j].points, frozen[j], frozen[j + 1], w, k0 + j);
        detail::check_finite(next[j + 1].points);
        gap = std::max(gap, detail::coupling_distance(next[j + 1], frozen[j + 1]));
      }
      gaps.push_back(gap);
      frozen = std::move(next);
      if (gap <= opt.tol) {
        converged = true;
        break;
      }
      const std::size_t g = gaps.size();
      if (g >= 2 && gaps[g - 1] >= opt.contraction_ratio * gaps[g - 2] && m > 1) {
        restart = true;
        break;
      }
    }
    if (restart) {
      window = std::max(1, m / 2);
      ++sol.diagnostics.window_restarts;
      continue;
    }
    if (!converged) {
      std::string seq;
      for (double g : gaps) seq += " " + std::to_string(g);
      raise_numeric("NoConvergence", "Picard gaps:" + seq);
    }
    sol.diagnostics.window_gaps.push_back(gaps);
    sol.diagnostics.window_starts.push_back(w.time(k0));
    sol.diagnostics.window_steps.push_back(m);
    sol.diagnostics.max_iterations = std::max(sol.diagnostics.max_iterations, static_cast<int>(gaps.size()));
    for (int j = 1; j <= m; ++j) {
      const int k = k0 + j;
      if (!detail::order_preserved(frozen[j])) ++sol.diagnostics.monotonicity_violations;
      if (k % opt.store_every == 0 || k == steps) {
        sol.path.times.push_back(w.time(k));
        sol.path.states.push_back(frozen[j]);
      }
    }
    state = frozen[m];
    k0 += m;
  }
  return sol;
}

inline MKVSolution picard_solve(const MKVProblem& pb, double tol = 1e-10, int max_iter = 50) {
  PicardOptions opt;
  opt.tol = tol;
  opt.max_iter = max_iter;
  return picard_solve(pb, pb.driver(), opt);
}

// Single pass with M_t the empirical measure of the live ensemble.
inline MKVSolution self_consistent_step_solve(const MKVProblem& pb, const BrownianDriver& w, int store_every = 1) {
  pb.check();
  detail::check_driver(pb, w);
  MKVSolution sol;
  ParticleCloud c = pb.initial;
  sol.path.times.push_back(0.0);
  sol.path.states.push_back(c);
  for (int k = 0; k < w.steps(); ++k) {
    c = detail::live_step(pb, c, w, k);
    if (!detail::order_preserved(c)) ++sol.diagnostics.monotonicity_violations;
    if ((k + 1) % store_every == 0 || k + 1 == w.steps()) {
      sol.path.times.push_back(w.time(k + 1));
      sol.path.states.push_back(c);
    }
  }
  return sol;
}

inline MKVSolution self_consistent_step_solve(const MKVProblem& pb) { return self_consistent_step_solve(pb, pb.driver()); }

// ---------------------------------------------------------------- Ito formula residual

struct SdeResidualReport {
  std::vector<Eigen::VectorXd> residuals;  // per test function, per stored time
  std::vector<double> sup_residual;
  double max_residual = 0.0;
};

// For each f: F_f(mu_t) - F_f(mu_0) - sum_i int L_{Z_i} F_f dW^i - int (L_{Z_0} F_f + 1/2 sum_i
// Hess F_f(Z_i, Z_i)) dt with L_Z F_f = int <grad f, Z> dmu. Stochastic integrals use left
// points, the dt integral the trapezoid rule. The path must hold every driver step.
inline SdeResidualReport verify_wasserstein_sde(const MeasurePath& path, const MeasureVectorField& drift,
                                                const std::vector<MeasureVectorField>& noise,
                                                const std::vector<TrigPotential>& tests, const BrownianDriver& w,
                                                int kde_n = 0) {
  const int steps = w.steps();
  if (static_cast<int>(path.states.size()) != steps + 1)
    raise_config("PathGrid", "path must store every driver step");
  if (w.channels() < static_cast<int>(noise.size())) raise_config("DriverChannels", "driver has too few channels");
  const std::size_t nf = tests.size();
  const double h = w.step();
  // Per state: F_f, L_{Z_i} F_f, and the dt integrand.
  Eigen::MatrixXd value(nf, steps + 1), dt_part(nf, steps + 1);
  std::vector<Eigen::MatrixXd> lie(noise.size(), Eigen::MatrixXd(nf, steps + 1));
  for (int k = 0; k <= steps; ++k) {
    const ParticleCloud& s = path.states[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd z0 = detail::field_sites(drift, s, kde_n);
    std::vector<Eigen::MatrixXd> zi;
    for (const auto& z : noise) zi.push_back(detail::field_sites(z, s, kde_n));
    for (std::size_t f = 0; f < nf; ++f) {
      Eigen::MatrixXd grad(s.size(), s.dim);
      double fv = 0.0;
      for (int p = 0; p < s.size(); ++p) {
        const Eigen::VectorXd x = s.points.row(p).transpose();
        grad.row(p) = tests[f].gradient(x).transpose();
        fv += s.weights(p) * tests[f].value(x);
      }
      auto lie_of = [&](const Eigen::MatrixXd& z) { return s.weights.dot(grad.cwiseProduct(z).rowwise().sum()); };
      value(f, k) = fv;
      double d = lie_of(z0);
      for (std::size_t i = 0; i < noise.size(); ++i) {
        lie[i](f, k) = lie_of(zi[i]);
        d += 0.5 * hessian_potential(tests[f], s, zi[i], zi[i]);
      }
      dt_part(f, k) = d;
    }
  }
  SdeResidualReport rep;
  for (std::size_t f = 0; f < nf; ++f) {
    Eigen::VectorXd r(steps + 1);
    r(0) = 0.0;
    double integral = 0.0;
    for (int k = 0; k < steps; ++k) {
      integral += 0.5 * h * (dt_part(f, k) + dt_part(f, k + 1));
      for (std::size_t i = 0; i < noise.size(); ++i) integral += lie[i](f, k) * w.increment(static_cast<int>(i), k);
      r(k + 1) = value(f, k + 1) - value(f, 0) - integral;
    }
    rep.sup_residual.push_back(r.cwiseAbs().maxCoeff());
    rep.max_residual = std::max(rep.max_residual, rep.sup_residual.back());
    rep.residuals.push_back(std::move(r));
  }
  return rep;
}

// ---------------------------------------------------------------- density SPDE (1-D)

struct DensityPath {
  std::vector<double> times;
  std::vector<GridDensity> densities;
  int clamp_events = 0;
};

// dρ = -sum_i div(ρ Z_i) dW^i - div(ρ Z_0) dt + 1/2 sum_i div(div(ρ Z_i) Z_i) dt, the Ito form of
// the transport equation dρ = -div(ρ Z_0) dt - sum_i div(ρ Z_i) o dW^i. Fields are frozen at the
// current density; the transport step is the implicit midpoint rule with the spectral
// derivative, which is mass-conserving and norm-preserving for constant fields.
inline DensityPath density_spde_evolve(const GridDensity& rho0, const MeasureVectorField& drift,
                                       const std::vector<MeasureVectorField>& noise, const BrownianDriver& w,
                                       int store_every = 1) {
  if (rho0.dim != 1) raise_config("BadDimension", "density SPDE is one-dimensional");
  if (!rho0.smooth(0.0)) raise_numeric("NonSmoothDensity", "initial density must be positive");
  if (w.channels() < static_cast<int>(noise.size())) raise_config("DriverChannels", "driver has too few channels");
  const int n = rho0.n;
  Eigen::MatrixXd deriv(n, n);
  for (int j = 0; j < n; ++j) deriv.col(j) = spectral::derivative(Eigen::VectorXd::Unit(n, j));
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  auto velocity = [&](const MeasureVectorField& z, const GridDensity& rho) -> Eigen::VectorXd {
    if (z.is_zero()) return Eigen::VectorXd::Zero(n);
    return spectral::derivative(z.bind(rho).potential_on_grid(n));
  };
  DensityPath out;
  GridDensity rho = rho0;
  out.times.push_back(0.0);
  out.densities.push_back(rho);
  for (int k = 0; k < w.steps(); ++k) {
    Eigen::VectorXd flow = w.step() * velocity(drift, rho);
    for (std::size_t i = 0; i < noise.size(); ++i) {
      const double dw = w.increment(static_cast<int>(i), k);
      if (dw != 0.0) flow += dw * velocity(noise[i], rho);
    }
    const Eigen::MatrixXd a = 0.5 * deriv * flow.asDiagonal();
    rho.values = (eye + a).partialPivLu().solve((eye - a) * rho.values);
    if (!rho.values.allFinite() || rho.values.cwiseAbs().maxCoeff() > 1e6)
      raise_numeric("Blowup", "density exceeded 1e6");
    if (rho.values.minCoeff() < 1e-12) {
      rho.values = rho.values.cwiseMax(1e-12);
      rho.normalize();
      ++out.clamp_events;
    }
    if ((k + 1) % store_every == 0 || k + 1 == w.steps()) {
      out.times.push_back(w.time(k + 1));
      out.densities.push_back(rho);
    }
  }
  return out;
}

}  // namespace otto
