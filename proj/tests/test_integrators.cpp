#include "oracles.hpp"
#include "otto/integrators.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>

using otto::BrownianDriver;
using otto::EmbeddedManifold;
using otto::FieldSet;
using otto::Scheme;
using otto::Vec;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Vec rotate_z(const Vec& x) { return vec({-x(1), x(0), 0.0}); }

}  // namespace

TEST(BrownianDriver, SumVarianceAcrossSeeds) {
  double s2 = 0;
  const int seeds = 10000;
  for (int s = 0; s < seeds; ++s) {
    const BrownianDriver w(1, 1.0, 0.5, static_cast<std::uint64_t>(s));
    ASSERT_EQ(w.steps(), 2);
    const double sum = w.increment(0, 0) + w.increment(0, 1);
    s2 += sum * sum;
  }
  EXPECT_NEAR(s2 / seeds, 1.0, 0.05);
}

TEST(BrownianDriver, SameSeedIdentical) {
  const BrownianDriver a(3, 1.0, 1.0 / 64, 42), b(3, 1.0, 1.0 / 64, 42);
  EXPECT_TRUE((a.increments().array() == b.increments().array()).all());
  const BrownianDriver c(3, 1.0, 1.0 / 64, 43);
  EXPECT_FALSE((a.increments().array() == c.increments().array()).all());
}

TEST(BrownianDriver, RefinementKeepsCoarsePath) {
  const BrownianDriver w(2, 1.0, 1.0 / 16, 9);
  const BrownianDriver f = w.refined(3);
  ASSERT_EQ(f.steps(), 128);
  for (int c = 0; c < 2; ++c)
    for (int k = 0; k <= w.steps(); ++k) EXPECT_NEAR(f.path(c, 8 * k), w.path(c, k), 1e-13);
  EXPECT_LT((f.coarsened(3).increments() - w.increments()).cwiseAbs().maxCoeff(), 1e-13);
  // Fine increments keep the N(0, h) law.
  const BrownianDriver big = BrownianDriver(1, 64.0, 1.0 / 16, 1).refined(2);
  const double var = big.increments().squaredNorm() / big.steps();
  EXPECT_NEAR(var / big.step(), 1.0, 0.05);
}

TEST(BrownianDriver, BadGrid) {
  EXPECT_THROW(BrownianDriver(1, 1.0, 0.3, 1), otto::Error);
  try {
    BrownianDriver(1, 1.0, 0.3, 1);
  } catch (const otto::Error& e) {
    EXPECT_EQ(e.code(), "BadGrid");
  }
}

TEST(ManifoldSde, ZeroFieldsConstant) {
  const auto s2 = EmbeddedManifold::sphere(2);
  FieldSet f;
  f.noise = {[](const Vec& x) { return Vec::Zero(x.size()).eval(); }};
  const BrownianDriver w(1, 1.0, 1e-2, 3);
  for (auto scheme : {Scheme::ito_projected, Scheme::stratonovich_heun}) {
    const auto path = otto::integrate_manifold_sde(s2, f, vec({0, 0.6, 0.8}), w, scheme);
    for (const auto& p : path.points) EXPECT_LT((p - vec({0, 0.6, 0.8})).norm(), 1e-15);
  }
}

TEST(ManifoldSde, CircleRotationAdvancesOneRadian) {
  const auto s1 = EmbeddedManifold::circle();
  FieldSet f;
  f.drift = [](const Vec& x) { return vec({-x(1), x(0)}); };
  const auto w = BrownianDriver::zero(0, 1.0, 1e-3);
  const Vec end = otto::integrate_endpoint(s1, f, vec({1, 0}), w, Scheme::stratonovich_heun);
  EXPECT_NEAR(std::atan2(end(1), end(0)), 1.0, 1e-6);
  const Vec end_ito = otto::integrate_endpoint(s1, f, vec({1, 0}), w, Scheme::ito_projected);
  EXPECT_NEAR(std::atan2(end_ito(1), end_ito(0)), 1.0, 1e-6);
}

TEST(ManifoldSde, ConstraintPreserved) {
  const auto s2 = EmbeddedManifold::sphere(2);
  FieldSet f;
  f.drift = [](const Vec& x) { return rotate_z(x); };
  for (int i = 0; i < 3; ++i)
    f.noise.push_back([s2, i](const Vec& x) { return s2.tangent_project(x, Vec::Unit(3, i)); });
  const BrownianDriver w(3, 1.0, 1e-3, 17);
  for (auto scheme : {Scheme::ito_projected, Scheme::stratonovich_heun}) {
    const auto path = otto::integrate_manifold_sde(s2, f, vec({1, 0, 0}), w, scheme);
    ASSERT_EQ(path.points.size(), 1001u);
    for (const auto& p : path.points) EXPECT_LT(std::abs(p.norm() - 1.0), 1e-12);
  }
}

TEST(ManifoldSde, SphereHeatKernelFirstMode) {
  // Generator 1/2 sigma^2 Laplacian; the first spherical-harmonic mode decays at rate sigma^2.
  const auto s2 = EmbeddedManifold::sphere(2);
  const double sigma = 0.8, horizon = 0.5;
  FieldSet f;
  for (int i = 0; i < 3; ++i)
    f.noise.push_back([s2, i, sigma](const Vec& x) { return (sigma * s2.tangent_project(x, Vec::Unit(3, i))).eval(); });
  const double expected = oracle::rk4_scalar([&](double y) { return -sigma * sigma * y; }, 1.0, horizon, 100);
  const Vec x0 = vec({0, 0, 1});
  const int paths = 10000;
  for (auto scheme : {Scheme::ito_projected, Scheme::stratonovich_heun}) {
    double sum = 0, sum2 = 0;
    for (int p = 0; p < paths; ++p) {
      const BrownianDriver w(3, horizon, 1.0 / 64, 1000 + p);
      const double c = otto::integrate_endpoint(s2, f, x0, w, scheme).dot(x0);
      sum += c;
      sum2 += c * c;
    }
    const double mean = sum / paths, se = std::sqrt((sum2 / paths - mean * mean) / paths);
    EXPECT_NEAR(mean, expected, 4 * se + 5e-3);
  }
}

TEST(Conversion, GeodesicRotationUnchanged) {
  const auto s1 = EmbeddedManifold::circle();
  FieldSet f;
  f.noise = {[](const Vec& x) { return vec({-x(1), x(0)}); }};
  const auto g = otto::ito_stratonovich_convert(s1, f, otto::Conversion::ito_to_stratonovich);
  for (int k = 0; k < 16; ++k) {
    const double t = 0.4 * k;
    EXPECT_LT(g.drift_at(vec({std::cos(t), std::sin(t)})).norm(), 1e-9);
  }
}

TEST(Conversion, ModulatedCircleFieldMatchesDerivative) {
  const auto s1 = EmbeddedManifold::circle();
  auto a = [](double t) { return 1.0 + 0.5 * std::sin(t); };
  auto da = [](double t) { return 0.5 * std::cos(t); };
  FieldSet f;
  f.noise = {[a](const Vec& x) {
    const double t = std::atan2(x(1), x(0));
    return (a(t) * vec({-x(1), x(0)})).eval();
  }};
  const auto to_ito = otto::ito_stratonovich_convert(s1, f, otto::Conversion::stratonovich_to_ito);
  double worst = 0;
  for (int k = 0; k < 512; ++k) {
    const double t = 2 * std::numbers::pi * k / 512;
    const Vec x = vec({std::cos(t), std::sin(t)});
    const Vec expected = 0.5 * a(t) * da(t) * vec({-x(1), x(0)});
    worst = std::max(worst, (to_ito.drift_at(x) - expected).norm());
  }
  EXPECT_LT(worst, 1e-6);

  const auto back = otto::ito_stratonovich_convert(s1, to_ito, otto::Conversion::ito_to_stratonovich);
  for (int k = 0; k < 64; ++k) {
    const double t = 0.1 * k;
    EXPECT_LT(back.drift_at(vec({std::cos(t), std::sin(t)})).norm(), 1e-8);
  }
}

TEST(Conversion, SchemesAgreePathwiseAtFirstOrder) {
  // Ito on converted fields vs Heun on the originals, same driver, on T^2 with
  // state-dependent speeds along each factor.
  const auto t2 = EmbeddedManifold::torus2();
  auto ang = [](const Vec& x, int f) { return std::atan2(x(2 * f + 1), x(2 * f)); };
  FieldSet strat;
  strat.drift = [ang](const Vec& x) {
    Vec v = Vec::Zero(4);
    v.head<2>() = 0.3 * std::cos(ang(x, 1)) * vec({-x(1), x(0)});
    return v;
  };
  strat.noise = {[ang](const Vec& x) {
                   Vec v = Vec::Zero(4);
                   v.head<2>() = 0.7 * vec({-x(1), x(0)});
                   v.tail<2>() = 0.2 * vec({-x(3), x(2)});
                   return v;
                 },
                 [ang](const Vec& x) {
                   Vec v = Vec::Zero(4);
                   v.tail<2>() = 0.5 * vec({-x(3), x(2)});
                   return v;
                 }};
  const auto ito = otto::ito_stratonovich_convert(t2, strat, otto::Conversion::stratonovich_to_ito);
  const Vec x0 = vec({1, 0, std::cos(0.4), std::sin(0.4)});
  std::vector<double> hs, errs;
  const int paths = 20;
  for (int level = 5; level <= 8; ++level) {
    double err = 0;
    for (int p = 0; p < paths; ++p) {
      const BrownianDriver w = BrownianDriver(2, 1.0, 1.0 / 32, 500 + p).refined(level - 5);
      const Vec a = otto::integrate_endpoint(t2, ito, x0, w, Scheme::ito_projected);
      const Vec b = otto::integrate_endpoint(t2, strat, x0, w, Scheme::stratonovich_heun);
      err += (a - b).squaredNorm();
    }
    hs.push_back(std::ldexp(1.0, -level));
    errs.push_back(std::sqrt(err / paths));
  }
  EXPECT_GE(oracle::loglog_slope(hs, errs), 0.9);
}

TEST(ParallelTransport, ConstantPath) {
  const auto s2 = EmbeddedManifold::sphere(2);
  otto::PathSample p;
  for (int k = 0; k < 5; ++k) {
    p.times.push_back(k);
    p.points.push_back(vec({0, 0, 1}));
  }
  const auto ft = otto::parallel_transport_along(s2, p, vec({0.3, -0.2, 0}));
  for (const auto& v : ft.vectors) EXPECT_LT((v - vec({0.3, -0.2, 0})).norm(), 1e-15);
}

TEST(ParallelTransport, QuarterGreatCircleKeepsNormal) {
  const auto s2 = EmbeddedManifold::sphere(2);
  const auto arc = otto::great_circle_arc(vec({1, 0, 0}), vec({0, 1, 0}), 100);
  const auto ft = otto::parallel_transport_along(s2, arc, vec({0, 0, 1}));
  EXPECT_LT((ft.vectors.back() - vec({0, 0, 1})).norm(), 1e-14);
}

TEST(ParallelTransport, OctantHolonomyEqualsArea) {
  const auto s2 = EmbeddedManifold::sphere(2);
  const Vec a = vec({1, 0, 0}), b = vec({0, 1, 0}), c = vec({0, 0, 1});
  otto::PathSample loop = otto::great_circle_arc(a, b, 50);
  for (const auto& seg : {otto::great_circle_arc(b, c, 50), otto::great_circle_arc(c, a, 50)})
    for (std::size_t k = 1; k < seg.points.size(); ++k) {
      loop.points.push_back(seg.points[k]);
      loop.times.push_back(loop.times.back() + 1);
    }
  const Vec v0 = vec({0, 1, 0});
  const Vec v1 = otto::parallel_transport_along(s2, loop, v0).vectors.back();
  // Rotation angle in T_a S^2 with orientation given by the outward normal a.
  const double angle = std::atan2(Eigen::Vector3d(a).dot(Eigen::Vector3d(v0).cross(Eigen::Vector3d(v1))), v0.dot(v1));
  EXPECT_NEAR(std::abs(angle), std::numbers::pi / 2, 1e-12);
}

TEST(ParallelTransport, IsometryAlongNoisyPath) {
  const auto s2 = EmbeddedManifold::sphere(2);
  FieldSet f;
  f.drift = [](const Vec& x) { return rotate_z(x); };
  for (int i = 0; i < 3; ++i)
    f.noise.push_back([s2, i](const Vec& x) { return s2.tangent_project(x, Vec::Unit(3, i)); });
  const BrownianDriver w(3, 1.0, 1e-4, 21);
  const auto path = otto::integrate_manifold_sde(s2, f, vec({0, 1, 0}), w, Scheme::stratonovich_heun);
  const auto ft = otto::parallel_transport_along(s2, path, vec({0.5, 0, 0.5}));
  for (std::size_t k = 0; k < ft.vectors.size(); ++k) {
    EXPECT_LT(std::abs(ft.vectors[k].norm() - std::sqrt(0.5)), 1e-3);
    EXPECT_LT(std::abs(ft.vectors[k].dot(path.points[k])), 1e-12);
  }
}

TEST(ParallelTransport, MatchesFrameOdeOnTwoSphere) {
  // Transport ODE dv = -<v, dx> x along a smooth curve, integrated with fine RK4.
  const auto s2 = EmbeddedManifold::sphere(2);
  auto curve = [](double t) {
    return vec({std::cos(t) * std::cos(0.3 * std::sin(2 * t)), std::sin(t) * std::cos(0.3 * std::sin(2 * t)),
                std::sin(0.3 * std::sin(2 * t))});
  };
  const int n = 2000;
  otto::PathSample p;
  for (int k = 0; k <= n; ++k) {
    p.times.push_back(2.0 * k / n);
    p.points.push_back(curve(2.0 * k / n));
  }
  const Vec v0 = s2.tangent_project(curve(0), vec({0.2, 0.4, 1.0}));
  const Vec got = otto::parallel_transport_along(s2, p, v0).vectors.back();

  auto dcurve = [&](double t) { return ((curve(t + 1e-6) - curve(t - 1e-6)) / 2e-6).eval(); };
  auto rhs = [&](double t, const Vec& v) { return (-v.dot(dcurve(t)) * curve(t)).eval(); };
  Vec v = v0;
  const int m = 20000;
  const double dt = 2.0 / m;
  for (int k = 0; k < m; ++k) {
    const double t = k * dt;
    const Vec k1 = rhs(t, v), k2 = rhs(t + dt / 2, v + dt / 2 * k1), k3 = rhs(t + dt / 2, v + dt / 2 * k2),
              k4 = rhs(t + dt, v + dt * k3);
    v += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
  }
  EXPECT_LT((got - v).norm(), 1e-5);
}

TEST(ParallelTransport, AntipodalStepIsDegenerate) {
  const auto s2 = EmbeddedManifold::sphere(2);
  otto::PathSample p;
  p.times = {0, 1};
  p.points = {vec({1, 0, 0}), vec({-1, 0, 0})};
  try {
    otto::parallel_transport_along(s2, p, vec({0, 1, 0}));
    FAIL();
  } catch (const otto::Error& e) {
    EXPECT_EQ(e.code(), "DegenerateStep");
  }
}

TEST(ParallelTransport, FlatTorusIsComponentIdentity) {
  const auto t2 = EmbeddedManifold::torus2();
  const auto w = BrownianDriver(2, 1.0, 1e-3, 2);
  FieldSet f;
  f.noise = {[](const Vec& x) { Vec v = Vec::Zero(4); v.head<2>() = vec({-x(1), x(0)}); return v; },
             [](const Vec& x) { Vec v = Vec::Zero(4); v.tail<2>() = vec({-x(3), x(2)}); return v; }};
  const auto path = otto::integrate_manifold_sde(t2, f, vec({1, 0, 0, 1}), w, Scheme::stratonovich_heun);
  // Intrinsic components (coefficients along the unit rotation fields) are constant.
  const auto ft = otto::parallel_transport_along(t2, path, vec({0, 0.3, -0.7, 0}));
  const Vec& x = path.back();
  const Vec& v = ft.vectors.back();
  EXPECT_NEAR(v.head<2>().dot(vec({-x(1), x(0)})), 0.3, 1e-12);
  EXPECT_NEAR(v.tail<2>().dot(vec({-x(3), x(2)})), 0.7, 1e-12);
}
