#pragma once

// Vector fields Z(x, mu) of gradient form Z = grad phi(., mu) on S^1 / T^2.
// The catalog combines
//   gradient_potential   phi = fixed trigonometric polynomial
//   interaction          phi = -s int K(x - y) dmu(y), K = sin or cos per axis
//   entropy_drift        phi = -s log rho  (s = 1 is the heat flow)
// A field is bound to a measure before evaluation.

#include "otto/error.hpp"
#include "otto/measure.hpp"
#include "otto/spectral.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <string>
#include <vector>

namespace otto {

// c cos(k.x) + s sin(k.x) with integer wave vector (k0, k1); k1 unused in 1-D.
struct TrigTerm {
  int k0 = 0;
  int k1 = 0;
  double c = 0.0;
  double s = 0.0;
};

class TrigPotential {
 public:
  TrigPotential() = default;
  TrigPotential(int dim, std::vector<TrigTerm> terms) : dim_(dim), terms_(std::move(terms)) {}

  int dim() const { return dim_; }
  const std::vector<TrigTerm>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  TrigPotential& operator+=(const TrigPotential& o) {
    terms_.insert(terms_.end(), o.terms_.begin(), o.terms_.end());
    return *this;
  }
  friend TrigPotential operator+(TrigPotential a, const TrigPotential& b) { return a += b; }
  TrigPotential scaled(double a) const {
    TrigPotential out = *this;
    for (auto& t : out.terms_) {
      t.c *= a;
      t.s *= a;
    }
    return out;
  }

  double value(const Eigen::VectorXd& x) const {
    double v = 0.0;
    for (const auto& t : terms_) {
      const double ph = phase(t, x);
      v += t.c * std::cos(ph) + t.s * std::sin(ph);
    }
    return v;
  }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim_);
    for (const auto& t : terms_) {
      const double ph = phase(t, x);
      const double d = -t.c * std::sin(ph) + t.s * std::cos(ph);
      g(0) += d * t.k0;
      if (dim_ == 2) g(1) += d * t.k1;
    }
    return g;
  }

  // Gradients at each row of pts, vectorized over the points.
  Eigen::MatrixXd gradients(const Eigen::MatrixXd& pts) const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(pts.rows(), dim_);
    for (const auto& t : terms_) {
      Eigen::ArrayXd ph = t.k0 * pts.col(0).array();
      if (dim_ == 2) ph += t.k1 * pts.col(1).array();
      const Eigen::ArrayXd d = -t.c * ph.sin() + t.s * ph.cos();
      g.col(0).array() += t.k0 * d;
      if (dim_ == 2) g.col(1).array() += t.k1 * d;
    }
    return g;
  }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim_, dim_);
    for (const auto& t : terms_) {
      const double ph = phase(t, x);
      const double d2 = -(t.c * std::cos(ph) + t.s * std::sin(ph));
      Eigen::VectorXd k(dim_);
      k(0) = t.k0;
      if (dim_ == 2) k(1) = t.k1;
      h += d2 * k * k.transpose();
    }
    return h;
  }

  Eigen::VectorXd sample(int n) const {
    const GridDensity g = GridDensity::uniform(dim_, n);
    Eigen::VectorXd v(g.size());
    for (int i = 0; i < g.size(); ++i) v(i) = value(g.node(i));
    return v;
  }

  // Named shorthands: "cos", "sin", "cos2", "sin2" in 1-D; "cos_x", "cos_y",
  // "sin_x", "sin_y", "cos_xy" in 2-D. A leading '-' negates.
  static TrigPotential named(int dim, const std::string& id) {
    if (!id.empty() && id[0] == '-') return named(dim, id.substr(1)).scaled(-1.0);
    auto one = [dim](int k0, int k1, double c, double s) { return TrigPotential(dim, {{k0, k1, c, s}}); };
    if (id == "zero") return TrigPotential(dim, {});
    if (id == "cos" || id == "cos_x") return one(1, 0, 1, 0);
    if (id == "sin" || id == "sin_x") return one(1, 0, 0, 1);
    if (id == "cos2") return one(2, 0, 1, 0);
    if (id == "sin2") return one(2, 0, 0, 1);
    if (dim == 2 && id == "cos_y") return one(0, 1, 1, 0);
    if (dim == 2 && id == "sin_y") return one(0, 1, 0, 1);
    if (dim == 2 && id == "cos_xy") return one(1, 1, 1, 0);
    raise_config("UnknownPotential", "no potential named '" + id + "'");
  }

 private:
  double phase(const TrigTerm& t, const Eigen::VectorXd& x) const {
    return t.k0 * x(0) + (dim_ == 2 ? t.k1 * x(1) : 0.0);
  }

  int dim_ = 1;
  std::vector<TrigTerm> terms_;
};

enum class Kernel { sine, cosine };

// Z(., mu) for one fixed measure.
class BoundField {
 public:
  BoundField(int dim, TrigPotential trig) : dim_(dim), trig_(std::move(trig)) {}

  int dim() const { return dim_; }
  const TrigPotential& trig_part() const { return trig_; }

  // Adds -s grad log rho for a positive grid density.
  void add_entropy(double strength, const GridDensity& rho) {
    if (!rho.smooth()) raise_numeric("NonSmoothDensity", "entropy drift needs a positive density");
    entropy_ = strength;
    log_rho_ = rho.values.array().log().matrix();
    if (dim_ == 1) {
      l1_ = spectral::Interpolant1D(log_rho_);
    } else {
      l2_ = spectral::Interpolant2D(log_rho_);
      g0_ = spectral::Interpolant2D(spectral::partial(log_rho_, 0));
      g1_ = spectral::Interpolant2D(spectral::partial(log_rho_, 1));
    }
  }

  Eigen::VectorXd value(const Eigen::VectorXd& x) const {
    Eigen::VectorXd v = trig_.gradient(x);
    if (entropy_ != 0.0) {
      if (dim_ == 1) v(0) -= entropy_ * l1_.derivative(x(0));
      else {
        v(0) -= entropy_ * g0_.value(x(0), x(1));
        v(1) -= entropy_ * g1_.value(x(0), x(1));
      }
    }
    return v;
  }

  double potential(const Eigen::VectorXd& x) const {
    double p = trig_.value(x);
    if (entropy_ != 0.0) p -= entropy_ * (dim_ == 1 ? l1_.value(x(0)) : l2_.value(x(0), x(1)));
    return p;
  }

  // dZ_a / dx_b.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j = trig_.hessian(x);
    if (entropy_ != 0.0) {
      if (dim_ == 1) j(0, 0) -= entropy_ * l1_.second_derivative(x(0));
      else {
        j(0, 0) -= entropy_ * g0_.d0(x(0), x(1));
        j(0, 1) -= entropy_ * g0_.d1(x(0), x(1));
        j(1, 0) -= entropy_ * g1_.d0(x(0), x(1));
        j(1, 1) -= entropy_ * g1_.d1(x(0), x(1));
      }
    }
    return j;
  }

  // Values at each row of pts.
  Eigen::MatrixXd values(const Eigen::MatrixXd& pts) const {
    if (entropy_ == 0.0) return trig_.gradients(pts);
    Eigen::MatrixXd out(pts.rows(), dim_);
    parallel_for(static_cast<std::size_t>(pts.rows()), [&](std::size_t i) {
      out.row(static_cast<Eigen::Index>(i)) = value(pts.row(static_cast<Eigen::Index>(i)).transpose()).transpose();
    }, 64);
    return out;
  }

  // Potential sampled on the nodes of an n-grid (exact grid values for the entropy part
  // when the density lives on the same grid).
  Eigen::VectorXd potential_on_grid(int n) const {
    Eigen::VectorXd v = trig_.sample(n);
    if (entropy_ != 0.0) {
      if (log_rho_.size() == v.size()) v -= entropy_ * log_rho_;
      else {
        const GridDensity g = GridDensity::uniform(dim_, n);
        for (int i = 0; i < g.size(); ++i) {
          const Eigen::VectorXd x = g.node(i);
          v(i) -= entropy_ * (dim_ == 1 ? l1_.value(x(0)) : l2_.value(x(0), x(1)));
        }
      }
    }
    return v;
  }

 private:
  int dim_;
  TrigPotential trig_;
  double entropy_ = 0.0;
  Eigen::VectorXd log_rho_;
  spectral::Interpolant1D l1_;
  spectral::Interpolant2D l2_, g0_, g1_;
};

class MeasureVectorField {
 public:
  MeasureVectorField() = default;
  explicit MeasureVectorField(int dim) : dim_(dim), fixed_(dim, {}) {}

  static MeasureVectorField zero(int dim) { return MeasureVectorField(dim); }

  static MeasureVectorField gradient_potential(const TrigPotential& f) {
    MeasureVectorField z(f.dim());
    z.fixed_ = f;
    return z;
  }

  static MeasureVectorField interaction(int dim, Kernel kernel, double strength) {
    MeasureVectorField z(dim);
    z.interactions_.push_back({kernel, strength});
    return z;
  }

  static MeasureVectorField entropy_drift(int dim, double strength = 1.0) {
    MeasureVectorField z(dim);
    z.entropy_ = strength;
    return z;
  }

  MeasureVectorField& operator+=(const MeasureVectorField& o) {
    fixed_ += o.fixed_;
    interactions_.insert(interactions_.end(), o.interactions_.begin(), o.interactions_.end());
    entropy_ += o.entropy_;
    return *this;
  }
  friend MeasureVectorField operator+(MeasureVectorField a, const MeasureVectorField& b) { return a += b; }

  MeasureVectorField scaled(double a) const {
    MeasureVectorField z = *this;
    z.fixed_ = z.fixed_.scaled(a);
    for (auto& [k, s] : z.interactions_) s *= a;
    z.entropy_ *= a;
    return z;
  }

  int dim() const { return dim_; }
  const TrigPotential& fixed_part() const { return fixed_; }
  bool measure_dependent() const { return !interactions_.empty() || entropy_ != 0.0; }
  bool needs_density() const { return entropy_ != 0.0; }
  bool is_zero() const { return fixed_.empty() && !measure_dependent(); }
  double entropy_strength() const { return entropy_; }

  // Measure-dependent trigonometric part: fixed potential plus interaction potentials
  // expressed through the first Fourier moments of mu.
  template <class Measure>
  TrigPotential trig_part(const Measure& mu) const {
    TrigPotential p = fixed_;
    for (const auto& [kernel, s] : interactions_)
      for (int a = 0; a < dim_; ++a) {
        const auto [c, sn] = fourier_moment(mu, a, 1);
        TrigTerm t{a == 0 ? 1 : 0, a == 1 ? 1 : 0, 0.0, 0.0};
        // cos(x - y) = cos x cos y + sin x sin y; sin(x - y) = sin x cos y - cos x sin y.
        if (kernel == Kernel::cosine) {
          t.c = -s * c;
          t.s = -s * sn;
        } else {
          t.c = s * sn;
          t.s = -s * c;
        }
        p += TrigPotential(dim_, {t});
      }
    return p;
  }

  BoundField bind(const GridDensity& mu) const {
    BoundField b(dim_, trig_part(mu));
    if (entropy_ != 0.0) b.add_entropy(entropy_, mu);
    return b;
  }

  // Particle measures use the exact density when labelled, otherwise a KDE on an n-grid.
  BoundField bind(const ParticleCloud& mu, int n) const {
    BoundField b(dim_, trig_part(mu));
    if (entropy_ != 0.0) b.add_entropy(entropy_, to_grid(mu, n));
    return b;
  }

  // Field values at the cloud's own points. For labelled clouds the entropy part is
  // computed in label coordinates without interpolation.
  Eigen::MatrixXd at_sites(const ParticleCloud& mu, int kde_n = 0) const {
    if (entropy_ != 0.0 && !mu.labels && kde_n <= 0)
      raise_numeric("NonSmoothDensity", "entropy drift on an unlabelled cloud needs a KDE grid");
    const TrigPotential trig = trig_part(mu);
    Eigen::MatrixXd out = trig.gradients(mu.points);
    if (entropy_ == 0.0) return out;
    if (mu.labels) return out - entropy_ * label_grad_log_density(mu);
    BoundField ent(dim_, TrigPotential(dim_, {}));
    ent.add_entropy(entropy_, to_grid(mu, kde_n));
    return out + ent.values(mu.points);
  }

  // grad_y log rho at the sites of a labelled cloud, rho(X(x)) = rho0(x) / det DX(x).
  static Eigen::MatrixXd label_grad_log_density(const ParticleCloud& mu) {
    const auto& lab = *mu.labels;
    const Eigen::VectorXd logb = lab.base.array().log().matrix();
    if (mu.dim == 1) {
      const Eigen::VectorXd xp = (1.0 + spectral::derivative(mu.displacement(0)).array()).matrix();
      if (xp.minCoeff() <= 0.0) raise_numeric("NonMonotone1D", "label map lost monotonicity");
      const Eigen::VectorXd l = logb - xp.array().log().matrix();
      return spectral::derivative(l).cwiseQuotient(xp);
    }
    const Eigen::VectorXd u0 = mu.displacement(0), u1 = mu.displacement(1);
    const Eigen::ArrayXd a = 1.0 + spectral::partial(u0, 0).array(), b = spectral::partial(u0, 1).array();
    const Eigen::ArrayXd c = spectral::partial(u1, 0).array(), d = 1.0 + spectral::partial(u1, 1).array();
    const Eigen::ArrayXd det = a * d - b * c;
    if (det.minCoeff() <= 0.0) raise_numeric("NonInvertibleMap", "label map Jacobian degenerate");
    const Eigen::VectorXd l = logb - det.log().matrix();
    const Eigen::ArrayXd l0 = spectral::partial(l, 0).array(), l1 = spectral::partial(l, 1).array();
    // DX^{-T} grad_x l with DX = [[a, b], [c, d]].
    Eigen::MatrixXd out(mu.size(), 2);
    out.col(0) = ((d * l0 - c * l1) / det).matrix();
    out.col(1) = ((-b * l0 + a * l1) / det).matrix();
    return out;
  }

 private:
  int dim_ = 1;
  TrigPotential fixed_;
  std::vector<std::pair<Kernel, double>> interactions_;
  double entropy_ = 0.0;
};

}  // namespace otto
