#pragma once

// Wasserstein-2 distances, Otto-calculus functionals and deterministic flows on P(S^1)
// and P(T^2).

#include "otto/error.hpp"
#include "otto/fields.hpp"
#include "otto/measure.hpp"
#include "otto/parallel.hpp"
#include "otto/spectral.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace otto {

// ---------------------------------------------------------------- circle W2

// Quantile function of a smooth 1-D density on the circle: Q(s) with Q(0) = 0 and
// Q(s + 1) = Q(s) + 2pi. Evaluated by Newton on the spectral CDF.
class SpectralQuantile {
 public:
  explicit SpectralQuantile(const GridDensity& mu) : n_(mu.n) {
    if (mu.dim != 1) raise_config("DimensionMismatch", "circle quantiles need a 1-D density");
    if (!mu.smooth()) raise_numeric("NonSmoothDensity", "quantiles need a positive density");
    mean_ = mu.values.mean();
    anti_ = spectral::Interpolant1D(spectral::antiderivative(mu.values));
    a0_ = anti_.value(0.0);
    nodes_cdf_.resize(n_ + 1);
    for (int j = 0; j < n_; ++j) nodes_cdf_[j] = cdf(kTwoPi * j / n_);
    nodes_cdf_[n_] = 1.0;
  }

  // Fraction of mass in [0, x] for x in [0, 2pi].
  double cdf(double x) const { return (mean_ * x + anti_.value(x) - a0_) / (kTwoPi * mean_); }
  double pdf(double x) const { return (mean_ + anti_.derivative(x)) / (kTwoPi * mean_); }

  double operator()(double s) const {
    const double turns = std::floor(s);
    const double r = s - turns;
    const auto it = std::upper_bound(nodes_cdf_.begin(), nodes_cdf_.end(), r);
    const int j = std::clamp(static_cast<int>(it - nodes_cdf_.begin()) - 1, 0, n_ - 1);
    double lo = kTwoPi * j / n_, hi = kTwoPi * (j + 1) / n_;
    double x = lo + (hi - lo) * (r - nodes_cdf_[j]) / std::max(1e-300, nodes_cdf_[j + 1] - nodes_cdf_[j]);
    for (int it2 = 0; it2 < 60; ++it2) {
      const double g = cdf(x) - r;
      if (g > 0) hi = x;
      else lo = x;
      double next = x - g / pdf(x);
      if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
      if (std::abs(next - x) < 1e-15) {
        x = next;
        break;
      }
      x = next;
    }
    return x + kTwoPi * turns;
  }

 private:
  int n_;
  double mean_ = 1.0, a0_ = 0.0;
  spectral::Interpolant1D anti_;
  std::vector<double> nodes_cdf_;
};

// Piecewise-constant quantile function of a weighted point set on the circle.
class AtomicQuantile {
 public:
  explicit AtomicQuantile(const ParticleCloud& c) {
    std::vector<int> order(c.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> ang(c.size());
    for (int i = 0; i < c.size(); ++i) ang[i] = wrap_angle(c.points(i, 0));
    std::sort(order.begin(), order.end(), [&](int a, int b) { return ang[a] < ang[b]; });
    double acc = 0.0;
    for (int i : order) {
      if (c.weights(i) <= 0.0) continue;
      acc += c.weights(i);
      ends_.push_back(acc);
      vals_.push_back(ang[i]);
    }
    for (auto& e : ends_) e /= acc;
    ends_.back() = 1.0;
  }

  const std::vector<double>& ends() const { return ends_; }
  const std::vector<double>& values() const { return vals_; }

 private:
  std::vector<double> ends_, vals_;
};

namespace detail {

// int_0^1 |Qa(s) - Qb(s + theta)|^2 ds for atomic quantiles.
inline double atomic_cost(const AtomicQuantile& a, const AtomicQuantile& b, double theta) {
  const double turns = std::floor(theta);
  const double t = theta - turns;
  const auto& be = b.ends();
  const auto& bv = b.values();
  const std::size_t nb = be.size();
  // Pieces of s -> Qb(s + t) on [0, 1).
  std::size_t j = static_cast<std::size_t>(std::upper_bound(be.begin(), be.end(), t) - be.begin());
  if (j >= nb) j = nb - 1;
  double shift = kTwoPi * turns;
  std::size_t ia = 0;
  double s = 0.0, cost = 0.0;
  int wraps = 0;
  while (s < 1.0 && ia < a.ends().size()) {
    const double bend = be[j] + wraps - t;
    const double aend = a.ends()[ia];
    const double e = std::min({aend, bend, 1.0});
    const double d = a.values()[ia] - (bv[j] + shift + kTwoPi * wraps);
    cost += (e - s) * d * d;
    s = e;
    if (aend <= e) ++ia;
    if (bend <= e) {
      ++j;
      if (j == nb) {
        j = 0;
        ++wraps;
      }
    }
  }
  return cost;
}

// Quantiles of a grid density at the M midpoints (j + 1/2)/M, as equal-mass atoms.
inline ParticleCloud quantile_atoms(const GridDensity& g, int m) {
  const SpectralQuantile q(g);
  Eigen::MatrixXd pts(m, 1);
  for (int j = 0; j < m; ++j) pts(j, 0) = q((j + 0.5) / m);
  return ParticleCloud::uniform_weights(pts);
}

// Q on a uniform table of K nodes in s with exact slopes 1/pdf, evaluated by cubic Hermite
// interpolation. Steep tails are resolved far better than by trigonometric shifting.
class QuantileTable {
 public:
  QuantileTable(const SpectralQuantile& q, int k) : k_(k), val_(k + 1), slope_(k + 1) {
    for (int j = 0; j <= k; ++j) {
      val_[j] = q(static_cast<double>(j) / k);
      slope_[j] = 1.0 / q.pdf(val_[j] - kTwoPi * std::floor(val_[j] / kTwoPi));
    }
  }

  double operator()(double s) const {
    const double turns = std::floor(s);
    const double u = (s - turns) * k_;
    const int j = std::min(static_cast<int>(u), k_ - 1);
    const double t = u - j, h = 1.0 / k_;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * val_[j] + (t3 - 2 * t2 + t) * h * slope_[j] + (-2 * t3 + 3 * t2) * val_[j + 1] +
           (t3 - t2) * h * slope_[j + 1] + kTwoPi * turns;
  }

 private:
  int k_;
  std::vector<double> val_, slope_;
};

// Golden-section minimum of a unimodal function on [lo, hi]; returns the argmin.
template <class F>
double golden_argmin(F&& f, double lo, double hi, double tol) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - r * (hi - lo), x2 = lo + r * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > tol) {
    if (f1 < f2) {
      hi = x2, x2 = x1, f2 = f1;
      x1 = hi - r * (hi - lo), f1 = f(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2;
      x2 = lo + r * (hi - lo), f2 = f(x2);
    }
  }
  return 0.5 * (lo + hi);
}

struct CircleCut {
  double theta = 0.0;
  double cost = 0.0;
};

// Optimal cut for smooth densities: minimizes the midpoint rule for int_0^1 |Q_mu(s) - Q_nu(s + theta)|^2 ds
// over m nodes.
inline CircleCut circle_cut(const GridDensity& mu, const GridDensity& nu, int quantile_nodes) {
  const int m = quantile_nodes > 0 ? quantile_nodes : std::max(4096, 8 * std::max(mu.n, nu.n));
  const SpectralQuantile qa(mu), qb(nu);
  const QuantileTable tb(qb, 4 * m);
  Eigen::VectorXd a(m);
  for (int j = 0; j < m; ++j) a(j) = qa((j + 0.5) / m);
  auto cost = [&](double theta) {
    double c = 0.0;
    for (int j = 0; j < m; ++j) {
      const double d = a(j) - tb((j + 0.5) / m + theta);
      c += d * d;
    }
    return c / m;
  };
  const double theta = golden_argmin(cost, -1.0, 1.0, 1e-11);
  return {theta, cost(theta)};
}

}  // namespace detail

// Squared circle distance between smooth grid densities.
inline double w2_circle_squared(const GridDensity& mu, const GridDensity& nu, int quantile_nodes = 0) {
  return detail::circle_cut(mu, nu, quantile_nodes).cost;
}

inline double w2_circle_squared(const ParticleCloud& mu, const ParticleCloud& nu) {
  const AtomicQuantile a(mu), b(nu);
  auto cost = [&](double th) { return detail::atomic_cost(a, b, th); };
  // The cost is convex and piecewise linear in the cut with kinks at b_end - a_end; snap to nearby kinks.
  const double centre = detail::golden_argmin(cost, -1.5, 1.5, 1e-9);
  double best = cost(centre);
  const auto& be = b.ends();
  for (double ae : a.ends()) {
    const double target = centre + ae - std::floor(centre + ae);
    const auto it = std::lower_bound(be.begin(), be.end(), target);
    for (auto j = it == be.begin() ? it : it - 1; j != be.end() && j <= it; ++j)
      for (double k : {-1.0, 0.0, 1.0}) {
        const double th = *j - ae + std::floor(centre + ae) + k;
        if (std::abs(th - centre) < 1e-6) best = std::min(best, cost(th));
      }
    const double wrap = be.front() - ae + std::floor(centre + ae) + 1.0;
    if (std::abs(wrap - centre) < 1e-6) best = std::min(best, cost(wrap));
  }
  return best;
}

// Mixed grid / atoms: the grid measure is replaced by 4096 equal-mass quantile atoms.
inline double w2_circle_squared(const GridDensity& mu, const ParticleCloud& nu) {
  return w2_circle_squared(detail::quantile_atoms(mu, 4096), nu);
}
inline double w2_circle_squared(const ParticleCloud& mu, const GridDensity& nu) { return w2_circle_squared(nu, mu); }

template <class A, class B>
double w2_circle(const A& mu, const B& nu) {
  return std::sqrt(std::max(0.0, w2_circle_squared(mu, nu)));
}

// ---------------------------------------------------------------- Sinkhorn on T^2

struct SinkhornResult {
  double divergence = 0.0;  // debiased entropic cost
  double distance = 0.0;    // sqrt(max(divergence, 0))
  int iterations = 0;
};

namespace detail {

// Entropic OT value between two grid measures on T^2 with the separable squared
// geodesic cost, log-domain Sinkhorn with epsilon scaling. eps is absolute here.
inline double entropic_ot(const GridDensity& mu, const GridDensity& nu, double eps, int max_iter, int* iters) {
  const int n = mu.n;
  const int N = n * n;
  Eigen::MatrixXd c1(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double d = circle_diff(kTwoPi * i / n, kTwoPi * j / n);
      c1(i, j) = d * d;
    }
  const Eigen::VectorXd la = (mu.values / N).array().log(), lb = (nu.values / N).array().log();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(N), g = Eigen::VectorXd::Zero(N);

  // One separable log-sum-exp pass: out(i, k) = log sum_j exp(in(j, k)) K(i, j), K = exp(-c1/e).
  // With column maxima removed the argmax term is at least min K, so the product form cannot
  // underflow while pi^2 / e stays well inside the double range; past that use the direct sum.
  auto lse_pass = [&](const Eigen::MatrixXd& in, const Eigen::MatrixXd& kernel, double e, bool direct) {
    Eigen::MatrixXd out(n, n);
    if (!direct) {
      const Eigen::RowVectorXd mx = in.colwise().maxCoeff();
      const Eigen::MatrixXd ex = (in.rowwise() - mx).array().exp().matrix();
      out = (kernel * ex).array().log().matrix();
      out.rowwise() += mx;
      return out;
    }
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        double m = -1e300;
        for (int j = 0; j < n; ++j) m = std::max(m, in(j, k) - c1(i, j) / e);
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += std::exp(in(j, k) - c1(i, j) / e - m);
        out(i, k) = m + std::log(acc);
      }
    return out;
  };

  // out(i0, i1) = -e log sum_{j0, j1} exp(h(j0, j1) - c(i0, j0)/e - c(i1, j1)/e), h = lw + pot/e.
  auto softmin = [&](const Eigen::VectorXd& pot, const Eigen::VectorXd& lw, double e, const Eigen::MatrixXd& kernel,
                     bool direct) {
    const Eigen::VectorXd hv = lw + pot / e;
    // Row-major flat index j0 * n + j1 maps to column-major (j1, j0).
    const Eigen::Map<const Eigen::MatrixXd> h(hv.data(), n, n);
    const Eigen::MatrixXd stage = lse_pass(h, kernel, e, direct);                   // (i1, j0)
    const Eigen::MatrixXd full = lse_pass(stage.transpose(), kernel, e, direct);   // (i0, i1)
    Eigen::VectorXd out(N);
    for (int i0 = 0; i0 < n; ++i0)
      for (int i1 = 0; i1 < n; ++i1) out(i0 * n + i1) = -e * full(i0, i1);
    return out;
  };

  double e = 2.0 * kPi * kPi;
  int total = 0;
  while (true) {
    const bool last = e <= eps;
    if (last) e = eps;
    const bool direct = kPi * kPi / e > 600.0;
    const Eigen::MatrixXd kernel = direct ? Eigen::MatrixXd() : Eigen::MatrixXd((-c1 / e).array().exp());
    const int budget = last ? max_iter : 8;
    for (int it = 0; it < budget; ++it, ++total) {
      const Eigen::VectorXd f_new = softmin(g, lb, e, kernel, direct);
      const Eigen::VectorXd g_new = softmin(f_new, la, e, kernel, direct);
      // Potentials are defined up to f + c, g - c; compare modulo that constant.
      const Eigen::VectorXd df = f_new - f;
      const double change = (df.array() - df.mean()).abs().maxCoeff() / e;
      f = f_new;
      g = g_new;
      if (last && change < 1e-11) {
        if (iters) *iters = total;
        return (mu.values.dot(f) + nu.values.dot(g)) / N;
      }
    }
    if (last) raise_numeric("NoConvergence", "Sinkhorn did not converge");
    e *= 0.5;
  }
}

}  // namespace detail

// Debiased Sinkhorn divergence on T^2. eps is measured in units of the squared diameter
// 2 pi^2 of the torus, so the default stays well conditioned on desk-size grids.
inline SinkhornResult w2_sinkhorn_torus(const GridDensity& mu, const GridDensity& nu, double eps = 1e-3,
                                        int max_iter = 20000) {
  if (mu.dim != 2 || nu.dim != 2 || mu.n != nu.n) raise_config("DimensionMismatch", "Sinkhorn needs matching 2-D grids");
  if (!(eps > 0)) raise_config("BadEpsilon", "Sinkhorn needs eps > 0");
  const double e = eps * 2.0 * kPi * kPi;
  SinkhornResult r;
  int a = 0, b = 0, c = 0;
  const double xy = detail::entropic_ot(mu, nu, e, max_iter, &a);
  const double xx = detail::entropic_ot(mu, mu, e, max_iter, &b);
  const double yy = detail::entropic_ot(nu, nu, e, max_iter, &c);
  r.divergence = xy - 0.5 * (xx + yy);
  r.distance = std::sqrt(std::max(0.0, r.divergence));
  r.iterations = a + b + c;
  return r;
}

// ---------------------------------------------------------------- functionals

struct Functional {
  enum class Kind { potential, interaction, entropy };
  Kind kind = Kind::potential;
  TrigPotential f;               // potential energy integrand
  Kernel kernel = Kernel::cosine;  // interaction E(x, y) = sum_axes K(x_a - y_a)

  static Functional potential(const TrigPotential& f) { return {Kind::potential, f, Kernel::cosine}; }
  static Functional interaction(int dim, Kernel k) { return {Kind::interaction, TrigPotential(dim, {}), k}; }
  static Functional entropy(int dim) { return {Kind::entropy, TrigPotential(dim, {}), Kernel::cosine}; }
};

namespace detail {

// int int K(x - y) dmu dmu from first moments; the sine kernel is odd and vanishes.
template <class Measure>
double interaction_from_moments(const Measure& mu, int dim, Kernel k) {
  if (k == Kernel::sine) return 0.0;
  double v = 0.0;
  for (int a = 0; a < dim; ++a) {
    const auto [c, s] = fourier_moment(mu, a, 1);
    v += c * c + s * s;
  }
  return v;
}

}  // namespace detail

inline double potential_energy(const TrigPotential& f, const GridDensity& mu) { return mu.integrate(f.sample(mu.n)); }
inline double potential_energy(const TrigPotential& f, const ParticleCloud& mu) {
  double v = 0.0;
  for (int i = 0; i < mu.size(); ++i) v += mu.weights(i) * f.value(mu.points.row(i).transpose());
  return v;
}

// Relative entropy with respect to the normalized volume.
inline double entropy(const GridDensity& mu) {
  if (!mu.smooth()) raise_numeric("NonSmoothDensity", "entropy needs a positive density");
  return (mu.values.array() * mu.values.array().log()).mean();
}
inline double entropy(const ParticleCloud& mu) {
  if (!mu.labels) raise_numeric("NonSmoothDensity", "entropy is undefined for atomic measures");
  const Eigen::VectorXd rho = density_at_sites(mu);
  return mu.weights.dot(rho.array().log().matrix());
}

template <class Measure>
double evaluate(const Functional& F, const Measure& mu) {
  switch (F.kind) {
    case Functional::Kind::potential: return potential_energy(F.f, mu);
    case Functional::Kind::interaction: return detail::interaction_from_moments(mu, mu.dim, F.kernel);
    case Functional::Kind::entropy: return entropy(mu);
  }
  return 0.0;
}

// Otto gradient as a mean-zero potential on the grid of mu.
inline TangentPotential gradient_functional(const Functional& F, const GridDensity& mu) {
  TangentPotential t{mu.dim, mu.n, Eigen::VectorXd::Zero(mu.size())};
  switch (F.kind) {
    case Functional::Kind::potential: t.values = F.f.sample(mu.n); break;
    case Functional::Kind::entropy:
      if (!mu.smooth()) raise_numeric("NonSmoothDensity", "entropy gradient needs a positive density");
      t.values = mu.values.array().log().matrix();
      break;
    case Functional::Kind::interaction: {
      // e(x, mu) = int K(x - y) + K(y - x) dmu(y): 2 int cos(x - y) for the cosine kernel, 0 for sine.
      if (F.kernel == Kernel::cosine) {
        const auto z = MeasureVectorField::interaction(mu.dim, Kernel::cosine, -2.0);
        t.values = z.trig_part(mu).sample(mu.n);
      }
      break;
    }
  }
  t.values.array() -= t.values.mean();
  return t;
}

// <grad phi, grad psi>_mu for grid potentials.
inline double otto_inner(const GridDensity& mu, const TangentPotential& a, const TangentPotential& b) {
  const Eigen::MatrixXd ga = grid_gradient(a.values, mu.dim), gb = grid_gradient(b.values, mu.dim);
  return mu.integrate(ga.cwiseProduct(gb).rowwise().sum());
}

// Grid potential together with its gradient and Laplacian interpolants.
class PotentialFlow {
 public:
  PotentialFlow(const TangentPotential& phi) : dim_(phi.dim) {
    if (dim_ == 1) {
      p1_ = spectral::Interpolant1D(phi.values);
    } else {
      g0_ = spectral::Interpolant2D(spectral::partial(phi.values, 0));
      g1_ = spectral::Interpolant2D(spectral::partial(phi.values, 1));
      lap_ = spectral::Interpolant2D(spectral::partial(phi.values, 0, 2) + spectral::partial(phi.values, 1, 2));
    }
  }

  Eigen::VectorXd velocity(const Eigen::VectorXd& x) const {
    Eigen::VectorXd v(dim_);
    if (dim_ == 1) v(0) = p1_.derivative(x(0));
    else v << g0_.value(x(0), x(1)), g1_.value(x(0), x(1));
    return v;
  }
  double divergence(const Eigen::VectorXd& x) const {
    return dim_ == 1 ? p1_.second_derivative(x(0)) : lap_.value(x(0), x(1));
  }

  // Flows the labelled nodes for time t (RK4, `steps` substeps) and returns images and
  // log Jacobians of the flow map.
  void flow(const Eigen::MatrixXd& start, double t, int steps, Eigen::MatrixXd& images, Eigen::VectorXd& logj) const {
    images = start;
    logj = Eigen::VectorXd::Zero(start.rows());
    const double dt = t / steps;
    parallel_for(static_cast<std::size_t>(start.rows()), [&](std::size_t ii) {
      const Eigen::Index i = static_cast<Eigen::Index>(ii);
      Eigen::VectorXd x = start.row(i).transpose();
      double l = 0.0;
      for (int s = 0; s < steps; ++s) {
        const Eigen::VectorXd k1 = velocity(x);
        const double m1 = divergence(x);
        const Eigen::VectorXd x2 = x + 0.5 * dt * k1;
        const Eigen::VectorXd k2 = velocity(x2);
        const double m2 = divergence(x2);
        const Eigen::VectorXd x3 = x + 0.5 * dt * k2;
        const Eigen::VectorXd k3 = velocity(x3);
        const double m3 = divergence(x3);
        const Eigen::VectorXd x4 = x + dt * k3;
        const Eigen::VectorXd k4 = velocity(x4);
        const double m4 = divergence(x4);
        x += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
        l += dt / 6 * (m1 + 2 * m2 + 2 * m3 + m4);
      }
      images.row(i) = x.transpose();
      logj(i) = l;
    }, 16);
  }

 private:
  int dim_;
  spectral::Interpolant1D p1_;
  spectral::Interpolant2D g0_, g1_, lap_;
};

namespace detail {

// F(T_sharp mu) from the labelled images of the grid nodes and log det DT.
inline double evaluate_pushed(const Functional& F, const GridDensity& mu, const Eigen::MatrixXd& images,
                              const Eigen::VectorXd& logj) {
  ParticleCloud c = ParticleCloud::from_grid(mu);
  c.points = images;
  switch (F.kind) {
    case Functional::Kind::potential: return potential_energy(F.f, c);
    case Functional::Kind::interaction: return interaction_from_moments(c, mu.dim, F.kernel);
    case Functional::Kind::entropy:
      return (mu.values.array() * (mu.values.array().log() - logj.array())).mean();
  }
  return 0.0;
}

}  // namespace detail

// d/dt F((flow_t of grad phi)_sharp mu) at t = 0: central differences at delta and
// delta/2 combined by Richardson extrapolation.
inline double lie_derivative(const Functional& F, const GridDensity& mu, const TangentPotential& phi,
                             double delta = 1e-4) {
  const PotentialFlow flow(phi);
  Eigen::MatrixXd start(mu.size(), mu.dim);
  for (int i = 0; i < mu.size(); ++i) start.row(i) = mu.node(i).transpose();
  auto central = [&](double d) {
    Eigen::MatrixXd ip, im;
    Eigen::VectorXd lp, lm;
    flow.flow(start, d, 4, ip, lp);
    flow.flow(start, -d, 4, im, lm);
    return (detail::evaluate_pushed(F, mu, ip, lp) - detail::evaluate_pushed(F, mu, im, lm)) / (2 * d);
  };
  const double a = central(delta), b = central(0.5 * delta);
  return (4 * b - a) / 3;
}

// int Hess f(Z1, Z2) dmu with Z1, Z2 given at the grid nodes (rows).
inline double hessian_potential(const TrigPotential& f, const GridDensity& mu, const Eigen::MatrixXd& z1,
                                const Eigen::MatrixXd& z2) {
  Eigen::VectorXd v(mu.size());
  for (int i = 0; i < mu.size(); ++i)
    v(i) = z1.row(i) * f.hessian(mu.node(i)) * z2.row(i).transpose();
  return mu.integrate(v);
}

// Same for a particle measure, Z1 and Z2 given at the particles.
inline double hessian_potential(const TrigPotential& f, const ParticleCloud& mu, const Eigen::MatrixXd& z1,
                                const Eigen::MatrixXd& z2) {
  double acc = 0.0;
  for (int i = 0; i < mu.size(); ++i)
    acc += mu.weights(i) * (z1.row(i) * f.hessian(mu.points.row(i).transpose()) * z2.row(i).transpose())(0, 0);
  return acc;
}

// ---------------------------------------------------------------- 1-D transport maps

// Lifted node images of the optimal monotone map pushing mu to nu: T(x) = Q_nu(F_mu(x) + theta*).
inline Eigen::VectorXd transport_map_1d(const GridDensity& mu, const GridDensity& nu, int quantile_nodes = 0) {
  const double theta = detail::circle_cut(mu, nu, quantile_nodes).theta;
  const SpectralQuantile qmu(mu), qnu(nu);
  Eigen::VectorXd out(mu.n);
  for (int j = 0; j < mu.n; ++j) out(j) = qnu(qmu.cdf(kTwoPi * j / mu.n) + theta);
  return out;
}

// Transport cost int |T(x) - x|^2 dmu of a lifted node map.
inline double map_cost(const GridDensity& mu, const Eigen::VectorXd& images) {
  const Eigen::VectorXd d = images - spectral::nodes(mu.n);
  return mu.integrate(d.cwiseProduct(d));
}

// ---------------------------------------------------------------- ODE on P

struct MeasurePath {
  std::vector<double> times;
  std::vector<ParticleCloud> states;  // labelled clouds over the initial grid
};

// Characteristics U' = Z(U, M_t), M_t = (U_t)_sharp mu0, integrated with RK4 at the
// quadrature nodes of mu0. Densities are available exactly through the labels.
inline MeasurePath ode_on_P(const MeasureVectorField& z, const GridDensity& mu0, double horizon, double h,
                            int store_every = 1) {
  const int steps = static_cast<int>(std::lround(horizon / h));
  if (std::abs(steps * h - horizon) > 1e-12 * std::max(1.0, horizon)) raise_config("BadGrid", "T/h must be integral");
  ParticleCloud c = ParticleCloud::from_grid(mu0);
  MeasurePath path;
  path.times.push_back(0.0);
  path.states.push_back(c);
  auto rhs = [&](const ParticleCloud& s) { return z.at_sites(s); };
  for (int k = 0; k < steps; ++k) {
    ParticleCloud s = c;
    const Eigen::MatrixXd k1 = rhs(s);
    s.points = c.points + 0.5 * h * k1;
    const Eigen::MatrixXd k2 = rhs(s);
    s.points = c.points + 0.5 * h * k2;
    const Eigen::MatrixXd k3 = rhs(s);
    s.points = c.points + h * k3;
    const Eigen::MatrixXd k4 = rhs(s);
    c.points += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    if ((k + 1) % store_every == 0 || k + 1 == steps) {
      path.times.push_back((k + 1) * h);
      path.states.push_back(c);
    }
  }
  return path;
}

// L2 distance between grid densities with respect to the normalized volume.
inline double l2_distance(const GridDensity& a, const GridDensity& b) {
  return std::sqrt((a.values - b.values).array().square().mean());
}

}  // namespace otto
