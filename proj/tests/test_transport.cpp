#include "otto/transport.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace otto;

namespace {

TrigPotential cos_pot(double a, int k = 1) { return TrigPotential(1, {{k, 0, a, 0.0}}); }
TrigPotential sin_pot(double a, int k = 1) { return TrigPotential(1, {{k, 0, 0.0, a}}); }
MeasureVectorField grad(const TrigPotential& p) { return MeasureVectorField::gradient_potential(p); }

double max_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

DiscreteDiffeo bumped(int n, double eps) {
  DiscreteDiffeo d = DiscreteDiffeo::identity(1, n);
  d.values.col(0) += eps * d.values.col(0).array().sin().matrix();
  return d;
}

// (x0 + 0.2 sin x1 + a0 shift, x1 + 0.15 sin(x0) ...) evaluated at translated labels.
Eigen::MatrixXd torus_map_at(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y(x.rows(), 2);
  y.col(0) = x.col(0) + 0.2 * x.col(1).array().sin().matrix() + 0.1 * (x.col(0) + x.col(1)).array().cos().matrix();
  y.col(1) = x.col(1) + 0.15 * x.col(0).array().sin().matrix();
  return y;
}

Eigen::MatrixXd sample_field(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd b(x.rows(), 2);
  b.col(0) = (x.col(0).array().cos() + 0.4 * (2 * x.col(1)).array().sin()).matrix();
  b.col(1) = (0.3 + (x.col(0) - x.col(1)).array().sin()).matrix();
  return b;
}

Eigen::MatrixXd translated_nodes(int n, double a0, double a1) {
  Eigen::MatrixXd x = DiscreteDiffeo::label_nodes(2, n);
  x.col(0).array() += a0;
  x.col(1).array() += a1;
  return x;
}

LiftFields noisy_circle_fields() {
  LiftFields f;
  f.drift = grad(cos_pot(0.5)) + MeasureVectorField::interaction(1, Kernel::cosine, 0.4);
  f.noise = {grad(sin_pot(0.3))};
  return f;
}

}  // namespace

// ---------------------------------------------------------------- diffeomorphisms

TEST(DiscreteDiffeo, SectionPushesVolumeToTheMeasure) {
  const GridDensity mu = GridDensity::von_mises(1, 128, 1.0, 0.4);
  const DiscreteDiffeo phi = DiscreteDiffeo::section(mu);
  EXPECT_NEAR(phi.values(0, 0), 0.0, 1e-15);
  EXPECT_LT(max_diff(phi.density().values, mu.values), 1e-9);
  EXPECT_THROW(DiscreteDiffeo::section(GridDensity::cosine(2, 16, 0.3, 1)), Error);
}

TEST(DiscreteDiffeo, ComposeMatchesClosedForm) {
  const int n = 64;
  const DiscreteDiffeo phi = bumped(n, 0.3);
  const DiscreteDiffeo g = DiscreteDiffeo::translation(1, n, Eigen::VectorXd::Constant(1, 0.7));
  const Eigen::VectorXd x = spectral::nodes(n).array() + 0.7;
  const Eigen::VectorXd expect = x + 0.3 * x.array().sin().matrix();
  EXPECT_LT(max_diff(phi.compose(g).values, expect), 1e-12);
  EXPECT_LT(max_diff(phi.compose_translation(Eigen::VectorXd::Constant(1, 0.7)).values, expect), 1e-12);
}

TEST(DiscreteDiffeo, RejectsFoldedMaps) {
  EXPECT_THROW(bumped(64, 1.5).check(), Error);
  DiscreteDiffeo t = DiscreteDiffeo::identity(2, 16);
  t.values.col(0) += 2.0 * t.values.col(0).array().sin().matrix();
  EXPECT_THROW(t.check(), Error);
}

// ---------------------------------------------------------------- lift

TEST(Lift, ZeroFieldsKeepInitialMap) {
  LiftFields f;
  f.noise = {MeasureVectorField::zero(1)};
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, 64, 1.0));
  const BrownianDriver w(1, 0.2, 1e-2, 3);
  for (auto cal : {Calculus::ito, Calculus::stratonovich}) {
    LiftOptions opt;
    opt.calculus = cal;
    const auto path = horizontal_lift_measure_diffusion(f, phi0, w, opt);
    ASSERT_EQ(path.maps.size(), 21u);
    EXPECT_EQ(max_diff(path.maps.back().values, phi0.values), 0.0);
  }
}

TEST(Lift, IdentityStartFollowsTheMeasureFlow) {
  const LiftFields f = noisy_circle_fields();
  const int n = 64;
  const BrownianDriver w(1, 0.3, 1e-3, 11);
  LiftOptions opt;
  opt.picard = true;
  opt.tol = 1e-13;
  const auto path = horizontal_lift_measure_diffusion(f, DiscreteDiffeo::identity(1, n), w, opt);
  MKVProblem pb;
  pb.drift = f.drift;
  pb.noise = f.noise;
  pb.initial = ParticleCloud::from_grid(GridDensity::uniform(1, n));
  pb.step = w.step();
  pb.horizon = w.horizon();
  PicardOptions po;
  po.tol = 1e-13;
  const auto sol = picard_solve(pb, w, po);
  EXPECT_LT(max_diff(path.maps.back().values, sol.path.states.back().points), 1e-10);
  // The single-pass scheme differs from the Picard fixed point at the level of the step.
  const auto live = horizontal_lift_measure_diffusion(f, DiscreteDiffeo::identity(1, n), w);
  EXPECT_LT(max_diff(live.maps.back().values, path.maps.back().values), 1e-5);
}

TEST(Lift, CommutesWithRotationOfLabels) {
  const LiftFields f = noisy_circle_fields();
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, 128, 1.0, 0.5));
  const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, 0.37);
  const BrownianDriver w(1, 0.2, 1e-3, 5);
  const auto base = horizontal_lift_measure_diffusion(f, phi0, w);
  const auto rotated = horizontal_lift_measure_diffusion(f, phi0.compose_translation(a), w);
  EXPECT_LT(max_diff(rotated.maps.back().values, base.maps.back().compose_translation(a).values), 1e-10);
}

TEST(Lift, ProjectsOntoTheMeasurePath) {
  const LiftFields f = noisy_circle_fields();
  const GridDensity mu = GridDensity::von_mises(1, 128, 1.0, 0.5);
  const BrownianDriver w(1, 0.2, 1e-3, 5);
  const auto path = horizontal_lift_measure_diffusion(f, DiscreteDiffeo::section(mu), w);
  MKVProblem pb;
  pb.drift = f.drift;
  pb.noise = f.noise;
  pb.initial = ParticleCloud::from_grid(mu);
  pb.step = w.step();
  pb.horizon = w.horizon();
  const auto sol = self_consistent_step_solve(pb, w);
  const GridDensity expect = pushforward_1d(mu.values, sol.path.states.back().points.col(0));
  EXPECT_LT(max_diff(path.maps.back().density().values, expect.values), 1e-9);
}

// ---------------------------------------------------------------- horizontal transport

TEST(IntegrateQ, ConstantPathKeepsVector) {
  LiftFields f;
  f.noise = {MeasureVectorField::zero(1)};
  const DiscreteDiffeo phi0 = bumped(64, 0.2);
  const BrownianDriver w(1, 0.1, 1e-2, 1);
  const auto path = horizontal_lift_measure_diffusion(f, phi0, w);
  const auto u0 = DiffeoTangent::horizontal_lift(phi0, TangentPotential::from_function(1, 64, [](const Eigen::VectorXd& x) {
                                                   return std::sin(2 * x(0));
                                                 }));
  for (auto s : {QScheme::heun, QScheme::ito_euler, QScheme::milstein}) {
    const auto st = integrate_Q(f, path, u0, w, s);
    EXPECT_EQ(max_diff(st.back().current.samples, u0.samples), 0.0);
  }
}

TEST(IntegrateQ, DriftOnlyMatchesEulerianTransport) {
  // Flow of x' = sin x from the uniform measure: tan(X/2) = e^t tan(x/2). The transported
  // field A_t in Eulerian form solves A_t' = -P_H(A' sin y), with P_H the L^2(rho_t) projection
  // onto mean-zero fields, rho_t known from the inverse flow.
  const int n = 256;
  const double T = 0.5, h = 1e-4;
  LiftFields f;
  f.drift = grad(cos_pot(-1.0));
  const BrownianDriver w = BrownianDriver::zero(1, T, h);
  const DiscreteDiffeo phi0 = DiscreteDiffeo::identity(1, n);
  const auto path = horizontal_lift_measure_diffusion(f, phi0, w);
  const TangentPotential v0 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::sin(x(0)); });
  const auto states = integrate_Q(f, path, DiffeoTangent::horizontal_lift(phi0, v0), w);

  const Eigen::VectorXd y = spectral::nodes(n);
  auto flow = [](double x, double t) { return 2.0 * std::atan2(std::exp(t) * std::sin(x / 2), std::cos(x / 2)); };
  auto density = [&](double t) {
    Eigen::VectorXd rho(n);
    for (int j = 0; j < n; ++j) {
      const double x = flow(y(j), -t);
      const double c = std::cos(x / 2), s = std::sin(x / 2);
      rho(j) = (c * c + std::exp(2 * t) * s * s) / std::exp(t);
    }
    return rho;
  };
  auto rate = [&](const Eigen::VectorXd& a, double t) {
    const Eigen::VectorXd g = spectral::derivative(a).cwiseProduct(y.array().sin().matrix());
    const Eigen::VectorXd inv = density(t).cwiseInverse();
    return Eigen::VectorXd(-(g - (g.mean() / inv.mean()) * inv));
  };
  Eigen::VectorXd a = y.array().cos();
  const double dt = 1e-3;
  for (int k = 0; k < static_cast<int>(std::lround(T / dt)); ++k) {
    const double t = k * dt;
    const Eigen::VectorXd k1 = rate(a, t), k2 = rate(a + 0.5 * dt * k1, t + 0.5 * dt),
                          k3 = rate(a + 0.5 * dt * k2, t + 0.5 * dt), k4 = rate(a + dt * k3, t + dt);
    a += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  const spectral::Interpolant1D at(a);
  Eigen::VectorXd expect(n), images(n);
  for (int j = 0; j < n; ++j) {
    images(j) = flow(y(j), T);
    expect(j) = at.value(images(j));
  }
  EXPECT_LT(max_diff(path.maps.back().values.col(0), images), 1e-7);
  EXPECT_LT(max_diff(states.back().current.samples.col(0), expect), 1e-4);
  EXPECT_GT(max_diff(states.back().current.samples, states.front().current.samples), 0.1);
}

TEST(IntegrateQ, HeunAndMilsteinAgreeAtFirstOrder) {
  LiftFields f;
  f.drift = grad(cos_pot(0.5));
  f.noise = {grad(sin_pot(0.3))};
  const int n = 64;
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, n, 0.5));
  const TangentPotential v0 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::cos(2 * x(0)); });
  const auto u0 = DiffeoTangent::horizontal_lift(phi0, v0);
  std::vector<double> gaps;
  BrownianDriver w(1, 0.25, 5e-3, 21);
  for (int level = 0; level < 4; ++level, w = w.refined()) {
    const auto path = horizontal_lift_measure_diffusion(f, phi0, w);
    const auto heun = integrate_Q(f, path, u0, w, QScheme::heun);
    const auto mil = integrate_Q(f, path, u0, w, QScheme::milstein);
    gaps.push_back(max_diff(heun.back().current.samples, mil.back().current.samples));
  }
  const double rate = std::log2(gaps.front() / gaps.back()) / 3.0;
  EXPECT_GE(rate, 0.9) << gaps[0] << " " << gaps[1] << " " << gaps[2] << " " << gaps[3];
}

TEST(IntegrateQ, ItoEulerStaysCloseToHeun) {
  LiftFields f;
  f.drift = grad(cos_pot(0.5));
  f.noise = {grad(sin_pot(0.3))};
  const DiscreteDiffeo phi0 = DiscreteDiffeo::identity(1, 64);
  const auto u0 = DiffeoTangent::horizontal_lift(
      phi0, TangentPotential::from_function(1, 64, [](const Eigen::VectorXd& x) { return std::cos(x(0)); }));
  const BrownianDriver w(1, 0.25, 5e-4, 4);
  const auto path = horizontal_lift_measure_diffusion(f, phi0, w);
  const auto heun = integrate_Q(f, path, u0, w, QScheme::heun);
  const auto ito = integrate_Q(f, path, u0, w, QScheme::ito_euler);
  EXPECT_LT(max_diff(heun.back().current.samples, ito.back().current.samples), 0.05);
}

TEST(IntegrateQ, RejectsPathsWithoutEveryStep) {
  LiftFields f;
  const DiscreteDiffeo phi0 = DiscreteDiffeo::identity(1, 16);
  const BrownianDriver w = BrownianDriver::zero(1, 0.1, 1e-2);
  LiftOptions opt;
  opt.store_every = 2;
  const auto path = horizontal_lift_measure_diffusion(f, phi0, w, opt);
  const DiffeoTangent u0{phi0, GridField::Zero(16, 1), std::nullopt};
  EXPECT_THROW(integrate_Q(f, path, u0, w), Error);
}

// ---------------------------------------------------------------- transport on P

TEST(TransportP, ConstantPathKeepsVector) {
  LiftFields f;
  const int n = 64;
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::cosine(1, n, 0.4, 1));
  const TangentPotential v0 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::sin(x(0)); });
  const auto out = stochastic_parallel_transport_P(f, phi0, v0, BrownianDriver::zero(1, 0.1, 1e-2));
  EXPECT_LT(max_diff(out.projected.back().values, v0.values), 1e-10);
}

class TransportNoisy : public ::testing::Test {
 protected:
  static constexpr int n = 128;
  const GridDensity mu = GridDensity::von_mises(1, n, 1.0, 0.3);
  const TangentPotential v0 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) {
    return std::sin(x(0)) + 0.3 * std::cos(2 * x(0));
  });
  const BrownianDriver w{1, 0.5, 1e-3, 8};
};

TEST_F(TransportNoisy, PreservesNormAndStaysHorizontal) {
  const auto out = stochastic_parallel_transport_P(noisy_circle_fields(), DiscreteDiffeo::section(mu), v0, w);
  const double n0 = out.norms.front();
  EXPECT_NEAR(n0 * n0, weighted_norm(mu, grid_gradient(v0.values, 1)) * weighted_norm(mu, grid_gradient(v0.values, 1)), 1e-10);
  for (std::size_t k = 1; k < out.times.size(); ++k) {
    const double t = out.times[k];
    EXPECT_LE(std::abs(out.norms[k] - n0), 1e-3 * t);
    EXPECT_LE(out.lifted[k].vertical_norm, 1e-3 * t);
  }
  EXPECT_LT(out.high_frequency.back(), 1e-6);
  // The projected potential carries the same norm in L^2(mu_t).
  const auto& last = out.lifted.back().current.base;
  EXPECT_NEAR(weighted_norm(last.density(), grid_gradient(out.projected.back().values, 1)), out.norms.back(), 1e-8);
}

TEST_F(TransportNoisy, IndependentOfThePointInTheFiber) {
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(mu);
  const auto a = stochastic_parallel_transport_P(noisy_circle_fields(), phi0, v0, w);
  const auto b = stochastic_parallel_transport_P(noisy_circle_fields(),
                                                 phi0.compose_translation(Eigen::VectorXd::Constant(1, 1.1)), v0, w);
  EXPECT_LT(max_diff(a.projected.back().values, b.projected.back().values), 1e-6);
}

TEST_F(TransportNoisy, ReproducibleAndLinear) {
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(mu);
  const LiftFields f = noisy_circle_fields();
  const auto a = stochastic_parallel_transport_P(f, phi0, v0, w);
  const auto b = stochastic_parallel_transport_P(f, phi0, v0, w);
  EXPECT_TRUE(a.lifted.back().current.samples == b.lifted.back().current.samples);

  const auto path = horizontal_lift_measure_diffusion(f, phi0, w);
  const TangentPotential v1 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::cos(3 * x(0)); });
  const auto u0 = DiffeoTangent::horizontal_lift(phi0, v0), u1 = DiffeoTangent::horizontal_lift(phi0, v1);
  DiffeoTangent mix = u0;
  mix.samples = u0.samples - 2.5 * u1.samples;
  const auto s0 = integrate_Q(f, path, u0, w), s1 = integrate_Q(f, path, u1, w), sm = integrate_Q(f, path, mix, w);
  EXPECT_LT(max_diff(sm.back().current.samples, s0.back().current.samples - 2.5 * s1.back().current.samples), 1e-12);
}

// ---------------------------------------------------------------- full lift and connection form

TEST(FullTransport, VerticalVectorKeepsItsConnectionCoordinate) {
  const int n = 64;
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, n, 0.8));
  DiffeoTangent a0{phi0, 0.7 * phi0.jacobian(), std::nullopt};
  const BrownianDriver w(1, 0.2, 1e-3, 2);
  const auto out = lift_transport_full(noisy_circle_fields(), a0, w);
  EXPECT_LT((out.connection.array() - 0.7).abs().maxCoeff(), 1e-12);
  for (std::size_t k = 0; k < out.states.size(); ++k) {
    EXPECT_LT(out.connection_drift[k], 1e-10);
    EXPECT_LT(out.horizontal[k].norm, 1e-12);
    EXPECT_NEAR(out.states[k].vertical_norm, out.states[k].norm, 1e-12);
  }
}

TEST(FullTransport, HorizontalVectorReducesToQ) {
  const int n = 64;
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, n, 0.8));
  const auto u0 = DiffeoTangent::horizontal_lift(
      phi0, TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::sin(x(0)); }));
  const BrownianDriver w(1, 0.2, 1e-3, 2);
  const LiftFields f = noisy_circle_fields();
  const auto full = lift_transport_full(f, u0, w);
  const auto q = integrate_Q(f, horizontal_lift_measure_diffusion(f, phi0, w), u0, w);
  EXPECT_LT(max_diff(full.states.back().current.samples, q.back().current.samples), 1e-10);
}

TEST(FullTransport, MixedVectorProjectsToBaseTransport) {
  const int n = 64;
  const GridDensity mu = GridDensity::von_mises(1, n, 0.8);
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(mu);
  const TangentPotential v0 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::sin(x(0)); });
  DiffeoTangent a0 = DiffeoTangent::horizontal_lift(phi0, v0);
  a0.samples += 0.4 * phi0.jacobian();
  const BrownianDriver w(1, 0.2, 1e-3, 9);
  const LiftFields f = noisy_circle_fields();
  const auto full = lift_transport_full(f, a0, w);
  const auto base = stochastic_parallel_transport_P(f, phi0, v0, w);
  const FiberSplit at(full.states.back().current.base);
  EXPECT_LT(max_diff(at.horizontal(full.states.back().current.samples), base.lifted.back().current.samples), 1e-4);
  EXPECT_LT(full.connection_drift.back(), 1e-10);
}

TEST(ConnectionForm, OnCircleIsTheConstantVerticalCoefficient) {
  const DiscreteDiffeo phi = bumped(64, 0.4);
  const Eigen::VectorXd x = spectral::nodes(64);
  const GridField b = (x.array().cos() + 0.2).matrix();
  const GridField xi = connection_form(phi, b);
  const Eigen::VectorXd d = 1.0 + 0.4 * x.array().cos();
  EXPECT_LT((xi.array() - b.col(0).dot(d) / d.squaredNorm()).abs().maxCoeff(), 1e-13);
}

TEST(ConnectionForm, AtIdentityIsTheDivergenceFreePart) {
  const int n = 32;
  const GridField b = sample_field(DiscreteDiffeo::label_nodes(2, n));
  const GridField xi = connection_form(DiscreteDiffeo::identity(2, n), b);
  EXPECT_LT(max_diff(xi, hodge_split(GridDensity::uniform(2, n), b).divergence_free), 1e-8);
}

TEST(ConnectionForm, VanishesOnHorizontalVectors) {
  const int n = 32;
  const Eigen::MatrixXd x = DiscreteDiffeo::label_nodes(2, n);
  const DiscreteDiffeo phi{2, n, torus_map_at(x)};
  // B = Dphi^{-T} grad chi with the Jacobian in closed form.
  GridField b(x.rows(), 2);
  for (int j = 0; j < x.rows(); ++j) {
    const double x0 = x(j, 0), x1 = x(j, 1);
    Eigen::Matrix2d jac;
    jac << 1 - 0.1 * std::sin(x0 + x1), 0.2 * std::cos(x1) - 0.1 * std::sin(x0 + x1), 0.15 * std::cos(x0), 1;
    const Eigen::Vector2d g(std::cos(x0) * std::cos(x1), -std::sin(x0) * std::sin(x1) + 0.5 * std::cos(2 * x1));
    b.row(j) = jac.transpose().inverse() * g;
  }
  EXPECT_LT(connection_form(phi, b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ConnectionForm, DivergenceFreeAndEquivariant) {
  const int n = 32;
  const double a0 = 0.41, a1 = -0.73;
  const Eigen::MatrixXd x = DiscreteDiffeo::label_nodes(2, n), xr = translated_nodes(n, a0, a1);
  const DiscreteDiffeo phi{2, n, torus_map_at(x)}, phir{2, n, torus_map_at(xr)};
  const GridField xi = connection_form(phi, sample_field(x));
  EXPECT_GT(xi.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LT(grid_divergence(xi, 2).cwiseAbs().maxCoeff(), 1e-6);
  const GridField xir = connection_form(phir, sample_field(xr));
  GridField shifted(xi.rows(), 2);
  for (int c = 0; c < 2; ++c) shifted.col(c) = spectral::shift2(xi.col(c), a0, a1);
  EXPECT_LT(max_diff(xir, shifted), 1e-6);
}

// ---------------------------------------------------------------- decomposition

TEST(Decompose, HorizontalFieldsLeaveTheGroupPartFixed) {
  const int n = 64;
  const std::vector<RightInvariantField> fields{right_invariant(grad(cos_pot(0.5))), right_invariant(grad(sin_pot(0.3)))};
  const DiscreteDiffeo phi0 = bumped(n, 0.2);
  const BrownianDriver w(1, 0.3, 1e-3, 6);
  const auto d = equivariant_decompose_D(fields, phi0, w);
  EXPECT_LT(max_diff(d.g.back().values, DiscreteDiffeo::identity(1, n).values), 1e-12);
  EXPECT_LT(max_diff(d.reconstruction.back().values, d.h.back().values), 1e-12);
}

TEST(Decompose, UnitVerticalDriftRotates) {
  const int n = 64;
  const std::vector<RightInvariantField> fields{right_invariant(VerticalCoefficient{1.0, 0.0, 0.0})};
  const DiscreteDiffeo phi0 = DiscreteDiffeo::identity(1, n);
  const auto d = equivariant_decompose_D(fields, phi0, BrownianDriver::zero(0, 0.5, 1e-2));
  EXPECT_LT(max_diff(d.h.back().values, phi0.values), 1e-12);
  EXPECT_LT(((d.g.back().values - phi0.values).array() - 0.5).abs().maxCoeff(), 1e-12);
}

TEST(Decompose, MixedFieldsReconstructTheDirectFlow) {
  const int n = 256;
  const double h = 1e-3, T = 0.5;
  const std::vector<RightInvariantField> fields{
      right_invariant(grad(cos_pot(0.5))) + right_invariant(VerticalCoefficient{0.05, 0.1, 0.0}),
      right_invariant(grad(sin_pot(0.3))) + right_invariant(VerticalCoefficient{0.05, 0.0, 0.05})};
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, n, 0.7));
  const BrownianDriver w(1, T, h, 17);
  const auto d = equivariant_decompose_D(fields, phi0, w);
  // Direct Stratonovich Heun steps of the full flow.
  DiscreteDiffeo phi = phi0;
  for (int k = 0; k < w.steps(); ++k) {
    auto inc = [&](const DiscreteDiffeo& p) { return Eigen::VectorXd(h * fields[0](p) + w.increment(0, k) * fields[1](p)); };
    const Eigen::VectorXd d0 = inc(phi);
    DiscreteDiffeo pred = phi;
    pred.values.col(0) += d0;
    phi.values.col(0) += 0.5 * (d0 + inc(pred));
  }
  EXPECT_LT(max_diff(d.reconstruction.back().values, phi.values), 10 * h);
  EXPECT_GT(max_diff(d.g.back().values, DiscreteDiffeo::identity(1, n).values), 1e-3);
  for (const auto& g : d.g) EXPECT_LT((g.density().values.array() - 1.0).abs().maxCoeff(), 1e-10);
}

TEST(Decompose, RejectsTwoDimensionalMaps) {
  EXPECT_THROW(equivariant_decompose_D({right_invariant(grad(cos_pot(1.0)))}, DiscreteDiffeo::identity(2, 8),
                                       BrownianDriver::zero(0, 0.1, 1e-2)),
               Error);
}

TEST(VerticalItoDrift, RigidRotationLeavesHorizontalPartFixed) {
  // Coarse grid: the backward heat flow in labels amplifies round-off in high modes.
  const int n = 16;
  const BrownianDriver w(1, 0.5, 1e-2, 3);
  const auto rep = vertical_ito_drift({right_invariant(VerticalCoefficient{0.5, 0.0, 0.0})}, DiscreteDiffeo::identity(1, n), w);
  EXPECT_LT(max_diff(rep.path.h.back().values, DiscreteDiffeo::identity(1, n).values), 1e-10);
  EXPECT_TRUE(rep.finite_variation);
  EXPECT_LT(rep.initial_drift_norm, 1e-10);
}

TEST(VerticalItoDrift, HorizontalPartHasFiniteVariation) {
  const int n = 32;
  const double c = 0.3;
  const DiscreteDiffeo phi0 = bumped(n, 0.1);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const BrownianDriver w(1, 0.5, 1e-2, seed);
    const auto rep = vertical_ito_drift({right_invariant(VerticalCoefficient{c, 0.0, 0.0})}, phi0, w);
    ASSERT_TRUE(rep.finite_variation) << seed << " " << rep.quadratic_variation;
  }
}

TEST(VerticalItoDrift, NoiseOffMatchesBackwardHeatSolution) {
  // Drift -c^2/2 phi'' is horizontal for phi = x + eps sin x, so u = eps e^{c^2 t / 2} sin x.
  const int n = 32;
  const double c = 0.3, eps = 0.1, T = 0.5;
  const auto rep = vertical_ito_drift({right_invariant(VerticalCoefficient{c, 0.0, 0.0})}, bumped(n, eps),
                                      BrownianDriver::zero(1, T, 1e-2));
  const DiscreteDiffeo expect = bumped(n, eps * std::exp(0.5 * c * c * T));
  EXPECT_LT(max_diff(rep.path.h.back().values, expect.values), 1e-4);
  EXPECT_NEAR(rep.initial_drift_norm, 0.5 * c * c * eps / std::sqrt(2.0), 1e-10);
  const auto noisy = vertical_ito_drift({right_invariant(VerticalCoefficient{c, 0.0, 0.0})}, bumped(n, eps),
                                        BrownianDriver(1, T, 1e-2, 4));
  EXPECT_LT(max_diff(noisy.path.h.back().values, expect.values), 1e-4);
}

// ---------------------------------------------------------------- torus

TEST(Torus, LiftedTransportIsIsometricAndHorizontal) {
  const int n = 32;
  LiftFields f;
  f.drift = grad(TrigPotential(2, {{1, 0, 0.5, 0.0}, {0, 1, 0.0, 0.3}}));
  f.noise = {grad(TrigPotential(2, {{1, 1, 0.2, 0.0}}))};
  const DiscreteDiffeo phi0 = DiscreteDiffeo::identity(2, n);
  const TangentPotential v0 = TangentPotential::from_function(2, n, [](const Eigen::VectorXd& x) {
    return std::sin(x(0)) * std::cos(x(1)) + 0.3 * std::cos(x(1));
  });
  const BrownianDriver w(1, 0.2, 2e-3, 13);
  const auto out = stochastic_parallel_transport_P(f, phi0, v0, w);
  const double n0 = out.norms.front();
  EXPECT_GT(max_diff(out.lift.maps.back().values, phi0.values), 0.05);
  for (std::size_t k = 1; k < out.times.size(); ++k) {
    EXPECT_LE(std::abs(out.norms[k] - n0), 1e-3 * out.times[k]);
    EXPECT_LE(out.lifted[k].vertical_norm, 1e-3 * out.times[k]);
  }
}
