#include "otto/mckean_vlasov.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace otto;

namespace {

TrigPotential cos_pot(double a, int k = 1) { return TrigPotential(1, {{k, 0, a, 0.0}}); }
TrigPotential sin_pot(double a, int k = 1) { return TrigPotential(1, {{k, 0, 0.0, a}}); }

MKVProblem circle_problem(MeasureVectorField drift, std::vector<MeasureVectorField> noise, ParticleCloud init,
                          double h, double horizon, std::uint64_t seed = 7) {
  MKVProblem pb;
  pb.dim = 1;
  pb.drift = std::move(drift);
  pb.noise = std::move(noise);
  pb.initial = std::move(init);
  pb.step = h;
  pb.horizon = horizon;
  pb.seed = seed;
  return pb;
}

ParticleCloud two_atoms(double theta) {
  Eigen::MatrixXd pts(2, 1);
  pts << -theta, theta;
  return ParticleCloud::uniform_weights(pts);
}

double max_point_diff(const ParticleCloud& a, const ParticleCloud& b) {
  return (a.points - b.points).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Picard, ZeroFieldsGiveConstantPathInOneIteration) {
  const auto pb = circle_problem(MeasureVectorField::zero(1), {MeasureVectorField::zero(1)},
                                 ParticleCloud::from_grid(GridDensity::von_mises(1, 32, 1.0)), 1e-2, 0.5);
  const auto sol = picard_solve(pb);
  EXPECT_EQ(sol.diagnostics.max_iterations, 1);
  for (const auto& s : sol.path.states) EXPECT_EQ(max_point_diff(s, pb.initial), 0.0);
  const auto live = self_consistent_step_solve(pb);
  EXPECT_EQ(max_point_diff(live.path.states.back(), pb.initial), 0.0);
}

TEST(Picard, MeasureIndependentFieldsMatchDirectSde) {
  // Z0 = -0.7 sin x, Z1 = 0.4 cos x, integrated particle by particle.
  const auto pb = circle_problem(MeasureVectorField::gradient_potential(cos_pot(0.7)),
                                 {MeasureVectorField::gradient_potential(sin_pot(0.4))},
                                 ParticleCloud::from_grid(GridDensity::cosine(1, 64, 0.5, 1)), 1e-3, 0.5);
  const BrownianDriver w = pb.driver();
  PicardOptions opt;
  opt.tol = 1e-12;
  const auto sol = picard_solve(pb, w, opt);
  ASSERT_EQ(sol.diagnostics.window_gaps.size(), 1u);
  EXPECT_EQ(sol.diagnostics.window_gaps[0].size(), 2u);
  EXPECT_LE(sol.diagnostics.window_gaps[0][1], 1e-12);

  auto z0 = [](double x) { return -0.7 * std::sin(x); };
  auto z1 = [](double x) { return 0.4 * std::cos(x); };
  const auto live = self_consistent_step_solve(pb, w);
  double err = 0.0, err_live = 0.0;
  for (int p = 0; p < pb.initial.size(); ++p) {
    double x = pb.initial.points(p, 0);
    for (int k = 0; k < w.steps(); ++k) {
      const double dn = z1(x) * w.increment(0, k);
      const double pred = x + w.step() * z0(x) + dn;
      x += 0.5 * w.step() * (z0(x) + z0(pred)) + dn;
      err = std::max(err, std::abs(sol.path.states[k + 1].points(p, 0) - x));
      err_live = std::max(err_live, std::abs(live.path.states[k + 1].points(p, 0) - x));
    }
  }
  EXPECT_LE(err, 1e-10);
  EXPECT_LE(err_live, 1e-10);
}

TEST(Picard, SineKernelAtomsRotateRigidly) {
  // Z(x) = -s int cos(x - y) dmu: both atoms move at -(s/2)(1 + cos 2 theta0).
  const double s = 0.8, theta0 = 0.6, horizon = 1.0;
  const auto pb = circle_problem(MeasureVectorField::interaction(1, Kernel::sine, s), {}, two_atoms(theta0), 1e-3,
                                 horizon);
  const auto sol = picard_solve(pb, 1e-13, 60);
  const double v = -0.5 * s * (1 + std::cos(2 * theta0));
  for (std::size_t k = 0; k < sol.path.times.size(); k += 50) {
    const double t = sol.path.times[k];
    EXPECT_NEAR(sol.path.states[k].points(0, 0), -theta0 + v * t, 1e-6);
    EXPECT_NEAR(sol.path.states[k].points(1, 0), theta0 + v * t, 1e-6);
  }
}

TEST(Picard, CosineKernelAtomsFollowTwoBodyLaw) {
  // Z(x) = s int sin(x - y) dmu: half-gap obeys theta' = (s/2) sin 2 theta, so
  // tan theta = tan theta0 exp(s t); the midpoint stays fixed.
  const double s = -1.2, theta0 = 0.6, horizon = 1.0;
  const auto pb = circle_problem(MeasureVectorField::interaction(1, Kernel::cosine, s), {}, two_atoms(theta0), 5e-4,
                                 horizon);
  const auto sol = picard_solve(pb, 1e-13, 60);
  for (std::size_t k = 0; k < sol.path.times.size(); k += 100) {
    const double t = sol.path.times[k];
    const double theta = std::atan(std::tan(theta0) * std::exp(s * t));
    EXPECT_NEAR(sol.path.states[k].points(1, 0), theta, 1e-6) << t;
    EXPECT_NEAR(sol.path.states[k].points(0, 0), -theta, 1e-6) << t;
  }
}

TEST(Picard, GapsContractOverFirstIterations) {
  const auto pb = circle_problem(MeasureVectorField::interaction(1, Kernel::cosine, 1.5),
                                 {MeasureVectorField::gradient_potential(sin_pot(0.3))},
                                 ParticleCloud::from_grid(GridDensity::von_mises(1, 128, 1.0)), 1e-3, 0.5);
  const auto sol = picard_solve(pb, 1e-11, 60);
  for (const auto& gaps : sol.diagnostics.window_gaps) {
    ASSERT_GE(gaps.size(), 3u);
    EXPECT_LT(gaps[1], gaps[0]);
    EXPECT_LT(gaps[2], gaps[1]);
  }
  EXPECT_EQ(sol.diagnostics.monotonicity_violations, 0);
}

TEST(Picard, SlowContractionHalvesTheWindow) {
  const auto pb = circle_problem(MeasureVectorField::interaction(1, Kernel::cosine, 6.0), {},
                                 ParticleCloud::from_grid(GridDensity::von_mises(1, 32, 1.0)), 1e-2, 2.0);
  const auto sol = picard_solve(pb, 1e-10, 80);
  EXPECT_GT(sol.diagnostics.window_restarts, 0);
  EXPECT_GT(sol.diagnostics.window_steps.size(), 1u);
  EXPECT_NEAR(sol.path.times.back(), 2.0, 1e-12);
}

TEST(Picard, ReportsNoConvergence) {
  const auto pb = circle_problem(MeasureVectorField::interaction(1, Kernel::cosine, 1.0), {},
                                 ParticleCloud::from_grid(GridDensity::von_mises(1, 32, 1.0)), 1e-2, 0.5);
  PicardOptions opt;
  opt.tol = 1e-14;
  opt.max_iter = 2;
  try {
    picard_solve(pb, pb.driver(), opt);
    FAIL() << "expected NoConvergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "NoConvergence");
  }
}

TEST(Picard, RejectsBadInput) {
  auto pb = circle_problem(MeasureVectorField::zero(1), {}, two_atoms(0.3), 1e-2, 0.5);
  EXPECT_THROW(picard_solve(pb, -1.0), Error);
  pb.initial = ParticleCloud::uniform_weights(Eigen::MatrixXd::Zero(1, 1));
  EXPECT_THROW(picard_solve(pb), Error);
  auto ent = circle_problem(MeasureVectorField::entropy_drift(1, 0.1), {}, two_atoms(0.3), 1e-2, 0.5);
  EXPECT_THROW(picard_solve(ent), Error);
}

TEST(Picard, EntropyDriftOnLabelledCloudMatchesHeatFlow) {
  // Z = -s grad log rho: the density follows the heat equation with diffusivity s.
  const double s = 0.5, horizon = 0.2;
  const GridDensity mu = GridDensity::cosine(1, 64, 0.5, 1);
  const auto pb = circle_problem(MeasureVectorField::entropy_drift(1, s), {}, ParticleCloud::from_grid(mu), 1e-3,
                                 horizon);
  const auto sol = picard_solve(pb, 1e-10, 60);
  const GridDensity got = to_grid(sol.path.states.back(), 64);
  const GridDensity want = GridDensity::cosine(1, 64, 0.5 * std::exp(-s * horizon), 1);
  EXPECT_LE(l2_distance(got, want), 1e-4);
}

TEST(SelfConsistent, AgreesWithPicardOnInteractingEnsemble) {
  const int particles = 10000;
  const double h = 1e-3;
  const auto pb = circle_problem(MeasureVectorField::interaction(1, Kernel::cosine, 1.0),
                                 {MeasureVectorField::gradient_potential(cos_pot(0.0) + sin_pot(0.3))},
                                 initial_ensemble(GridDensity::von_mises(1, 128, 1.0), particles), h, 0.2);
  const BrownianDriver w = pb.driver();
  PicardOptions opt;
  opt.tol = 1e-9;
  opt.store_every = 50;
  const auto pic = picard_solve(pb, w, opt);
  const auto live = self_consistent_step_solve(pb, w, 50);
  ASSERT_EQ(pic.path.states.size(), live.path.states.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < pic.path.states.size(); ++k)
    worst = std::max(worst, w2_circle(pic.path.states[k], live.path.states[k]));
  EXPECT_LE(worst, 5 * (h + 1 / std::sqrt(particles)));
}

TEST(SdeResidual, ZeroFieldsGiveZero) {
  const auto pb = circle_problem(MeasureVectorField::zero(1), {MeasureVectorField::zero(1)},
                                 ParticleCloud::from_grid(GridDensity::von_mises(1, 32, 1.0)), 1e-2, 0.5);
  const BrownianDriver w = pb.driver();
  const auto sol = self_consistent_step_solve(pb, w);
  const auto rep = verify_wasserstein_sde(sol.path, pb.drift, pb.noise, {cos_pot(1.0), sin_pot(1.0, 2)}, w);
  EXPECT_EQ(rep.max_residual, 0.0);
}

TEST(SdeResidual, DeterministicDriftLeavesQuadratureError) {
  const auto drift =
      MeasureVectorField::gradient_potential(cos_pot(0.5)) + MeasureVectorField::interaction(1, Kernel::cosine, 0.7);
  const auto pb = circle_problem(drift, {}, ParticleCloud::from_grid(GridDensity::von_mises(1, 64, 1.0)), 1e-3, 0.5);
  const BrownianDriver w = pb.driver();
  const auto sol = picard_solve(pb, w, {});
  const auto rep = verify_wasserstein_sde(sol.path, pb.drift, pb.noise, {cos_pot(1.0), sin_pot(1.0), cos_pot(1.0, 2)}, w);
  EXPECT_LE(rep.max_residual, 1e-4);
}

TEST(SdeResidual, ShrinksLikeSquareRootOfStep) {
  // Mean sup residual over seeds on dyadically refined drivers; fitted log-log slope.
  const auto drift = MeasureVectorField::interaction(1, Kernel::cosine, 0.5);
  const std::vector<MeasureVectorField> noise{MeasureVectorField::gradient_potential(sin_pot(0.6))};
  const ParticleCloud init = ParticleCloud::from_grid(GridDensity::von_mises(1, 32, 1.0));
  const std::vector<TrigPotential> tests{cos_pot(1.0), sin_pot(1.0, 2)};
  const int levels = 4, seeds = 12;
  std::vector<double> mean_res(levels, 0.0), hs(levels);
  for (int s = 0; s < seeds; ++s) {
    BrownianDriver w(1, 0.5, 0.5 / 16, 100 + s);
    for (int l = 0; l < levels; ++l) {
      if (l > 0) w = w.refined();
      const auto pb = circle_problem(drift, noise, init, w.step(), 0.5);
      const auto sol = self_consistent_step_solve(pb, w);
      mean_res[l] += verify_wasserstein_sde(sol.path, drift, noise, tests, w).max_residual / seeds;
      hs[l] = w.step();
    }
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int l = 0; l < levels; ++l) {
    const double x = std::log(hs[l]), y = std::log(mean_res[l]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double slope = (levels * sxy - sx * sy) / (levels * sxx - sx * sx);
  EXPECT_GE(slope, 0.4) << "slope " << slope;
}

TEST(Diagnostics, LargeMultiplicativeNoiseBreaksParticleOrder) {
  const auto pb = circle_problem(MeasureVectorField::zero(1), {MeasureVectorField::gradient_potential(sin_pot(5.0))},
                                 ParticleCloud::from_grid(GridDensity::uniform(1, 32)), 0.1, 1.0, 3);
  const auto sol = self_consistent_step_solve(pb);
  EXPECT_GT(sol.diagnostics.monotonicity_violations, 0);
}

TEST(DensitySpde, ZeroFieldsKeepDensity) {
  const GridDensity rho = GridDensity::von_mises(1, 64, 1.0);
  const auto path = density_spde_evolve(rho, MeasureVectorField::zero(1), {MeasureVectorField::zero(1)},
                                        BrownianDriver(1, 0.1, 1e-2, 1));
  EXPECT_LE((path.densities.back().values - rho.values).cwiseAbs().maxCoeff(), 1e-13);
  EXPECT_EQ(path.clamp_events, 0);
}

TEST(DensitySpde, GradientDriftMatchesCharacteristics) {
  const int n = 256;
  const double h = 1e-4, horizon = 0.05;
  const GridDensity rho = GridDensity::von_mises(1, n, 1.0, 0.5);
  const auto drift = MeasureVectorField::gradient_potential(cos_pot(0.8) + sin_pot(0.3, 2));
  const auto path = density_spde_evolve(rho, drift, {}, BrownianDriver::zero(1, horizon, h), 100);
  const MeasurePath chars = ode_on_P(drift, rho, horizon, h, 100);
  EXPECT_LE(l2_distance(path.densities.back(), to_grid(chars.states.back(), n)), 1e-3);
}

TEST(DensitySpde, StaysPositiveUnderGradientFields) {
  const GridDensity rho = GridDensity::von_mises(1, 128, 2.0);
  const auto drift = MeasureVectorField::gradient_potential(cos_pot(0.5)) +
                     MeasureVectorField::interaction(1, Kernel::cosine, 0.5);
  const std::vector<MeasureVectorField> noise{MeasureVectorField::gradient_potential(sin_pot(0.3))};
  const auto path = density_spde_evolve(rho, drift, noise, BrownianDriver(1, 0.5, 1e-3, 5), 50);
  for (const auto& d : path.densities) EXPECT_GE(d.values.minCoeff(), 1e-6);
  for (const auto& d : path.densities) EXPECT_NEAR(d.mass(), 1.0, 1e-10);
  EXPECT_EQ(path.clamp_events, 0);
}

TEST(DensitySpde, NoisyEvolutionMatchesParticleKde) {
  // The SPDE drift is the Stratonovich drift; particles use the Ito drift Z0 + (1/2) Z1 Z1'.
  // With Z1 = 0.3 cos x the correction is grad((0.09 / 8) cos 2x).
  const int particles = 100000, n = 128, kde_n = 64;
  const double h = 2e-3, horizon = 0.2;
  const auto strat_drift = MeasureVectorField::interaction(1, Kernel::cosine, 0.8);
  const std::vector<MeasureVectorField> noise{MeasureVectorField::gradient_potential(sin_pot(0.3))};
  const auto ito_drift = strat_drift + MeasureVectorField::gradient_potential(cos_pot(0.09 / 8, 2));
  const GridDensity rho = GridDensity::von_mises(1, n, 1.0);
  const auto pb = circle_problem(ito_drift, noise, initial_ensemble(rho, particles), h, horizon, 11);
  const BrownianDriver w = pb.driver();
  PicardOptions opt;
  opt.tol = 1e-8;
  opt.store_every = 100;
  const auto sol = picard_solve(pb, w, opt);
  const auto spde = density_spde_evolve(rho, strat_drift, noise, w, 100);

  const double bandwidth = 2.0 * spectral::kTwoPi / kde_n;
  const GridDensity est = kde(sol.path.states.back(), kde_n, bandwidth);
  GridDensity ref = GridDensity::uniform(1, kde_n);
  for (int j = 0; j < kde_n; ++j) ref.values(j) = spde.densities.back().values(j * (n / kde_n));
  ref.values = spectral::gaussian_smooth(ref.values, bandwidth);
  EXPECT_LE(l2_distance(est, ref), 5e-2);
}

TEST(DensitySpde, RejectsTwoDimensionalInput) {
  EXPECT_THROW(density_spde_evolve(GridDensity::uniform(2, 8), MeasureVectorField::zero(2), {},
                                   BrownianDriver(1, 0.1, 0.05, 1)),
               Error);
}
