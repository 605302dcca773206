#pragma once

// Built-in invariant battery on small default problems.

#include "scenarios.hpp"

#include "otto/hodge.hpp"

#include <map>
#include <random>

namespace otto::cli {

namespace suite_detail {

inline Check sphere_constraint(std::uint64_t seed) {
  const EmbeddedManifold s2 = EmbeddedManifold::sphere(2);
  FieldSet f;
  f.drift = [](const Point& x) -> Vec {
    Vec v(3);
    v << -x(1), x(0), 0.0;
    return v;
  };
  f.noise = {[s2](const Point& x) -> Vec { return s2.tangent_project(x, Vec(Eigen::Vector3d(0.3, -0.5, 0.8))); },
             [](const Point& x) -> Vec {
               Vec v(3);
               v << 0.0, -x(2), x(1);
               return v;
             }};
  Point x0(3);
  x0 << 0.0, 0.6, 0.8;
  double worst = 0.0;
  for (int p = 0; p < 10; ++p) {
    const auto path = integrate_manifold_sde(s2, f, x0, BrownianDriver(2, 1.0, 1e-3, seed + p), Scheme::ito_projected);
    for (const auto& x : path.points) worst = std::max(worst, std::abs(x.norm() - 1.0));
  }
  return check_le("sphere_constraint", worst, 1e-6);
}

inline Check hodge_projection(std::uint64_t seed) {
  const GridDensity rho = GridDensity::von_mises(1, 64, 1.0, 0.3);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  GridField a(64, 1);
  const Eigen::VectorXd x = spectral::nodes(64);
  a.col(0) = (0.2 + g(rng) * x.array().cos() + g(rng) * (2 * x.array()).sin()).matrix();
  const WeightedHodgeSolver solver(rho);
  const auto s = solver.split(a);
  const double sum = (s.gradient + s.divergence_free - a).cwiseAbs().maxCoeff();
  const double ortho = std::abs(weighted_inner(rho, s.gradient, s.divergence_free));
  const double idem = (solver.split(s.gradient).gradient - s.gradient).cwiseAbs().maxCoeff();
  return check_le("hodge_projection", std::max({sum, ortho, idem}), 1e-9);
}

inline Check hopf_holonomy() {
  const HopfFibration hopf;
  FieldSet f;
  f.drift = [](const Point& y) -> Vec {
    Vec v(3);
    v << 0.0, -2 * kPi * y(2), 2 * kPi * y(1);
    return v;
  };
  const double alpha = kPi / 2;
  Point q0(4);
  q0 << std::cos(alpha / 2), 0.0, std::sin(alpha / 2), 0.0;
  const auto path = horizontal_lift_diffusion(hopf, f, q0, BrownianDriver::zero(0, 1.0, 1e-3));
  const double area = kPi / 2 * (1 - std::cos(alpha));
  return check_le("hopf_holonomy", std::abs(std::remainder(hopf.phase_between(q0, path.back()) + 2 * area, kTwoPi)), 1e-4);
}

inline Check picard_collapse(std::uint64_t seed) {
  MKVProblem pb;
  pb.drift = MeasureVectorField::gradient_potential(TrigPotential(1, {{1, 0, 0.7, 0.0}}));
  pb.noise = {MeasureVectorField::gradient_potential(TrigPotential(1, {{1, 0, 0.0, 0.4}}))};
  pb.initial = ParticleCloud::from_grid(GridDensity::cosine(1, 256, 0.5, 1));
  pb.step = 1e-2;
  pb.horizon = 0.5;
  pb.seed = seed;
  PicardOptions po;
  po.tol = 1e-10;
  const auto sol = picard_solve(pb, pb.driver(), po);
  const auto& gaps = sol.diagnostics.window_gaps.front();
  const double value = sol.diagnostics.max_iterations == 2 ? gaps.back() : std::numeric_limits<double>::infinity();
  return check_le("picard_collapse", value, 1e-10);
}

inline Check heat_flow() {
  const int n = 128;
  const double horizon = 0.05;
  const GridDensity mu = GridDensity::from_function(1, n, [](const Eigen::VectorXd& x) { return 1 + 0.5 * std::cos(x(0)); });
  const auto path = ode_on_P(MeasureVectorField::entropy_drift(1, 1.0), mu, horizon, 1e-4, 100);
  const GridDensity heat = GridDensity::from_function(
      1, n, [&](const Eigen::VectorXd& x) { return 1 + 0.5 * std::exp(-horizon) * std::cos(x(0)); });
  return check_le("heat_flow", l2_distance(to_grid(path.states.back(), n), heat), 1e-3);
}

inline Check lipschitz(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  std::normal_distribution<double> g(0.0, 0.5);
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<TrigTerm> terms;
    for (int k = 1; k <= 3; ++k) terms.push_back({k, 0, g(rng), g(rng)});
    const TrigPotential f(1, terms);
    double lip = 0.0;
    for (int j = 0; j < 4096; ++j) lip = std::max(lip, std::abs(f.gradient(Eigen::VectorXd::Constant(1, kTwoPi * j / 4096))(0)));
    lip *= 1.0 + 1e-6;
    const int p = 20 + trial % 30;
    Eigen::MatrixXd a(p, 1), b(p, 1);
    for (int i = 0; i < p; ++i) a(i, 0) = u(rng), b(i, 0) = u(rng);
    const ParticleCloud mu = ParticleCloud::uniform_weights(a), nu = ParticleCloud::uniform_weights(b);
    if (std::abs(potential_energy(f, mu) - potential_energy(f, nu)) > lip * w2_circle(mu, nu) + 1e-10) ++violations;
  }
  return check_le("lipschitz", violations, 0.0);
}

inline std::vector<Check> circle_transport(std::uint64_t seed) {
  const int n = 64;
  LiftFields f;
  f.drift = MeasureVectorField::gradient_potential(TrigPotential(1, {{1, 0, 0.5, 0.0}})) +
            MeasureVectorField::interaction(1, Kernel::cosine, 0.4);
  f.noise = {MeasureVectorField::gradient_potential(TrigPotential(1, {{1, 0, 0.0, 0.3}}))};
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, n, 0.8, 0.3));
  const TangentPotential v0 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::sin(x(0)); });
  const BrownianDriver w(1, 0.2, 1e-3, seed);
  const auto a = stochastic_parallel_transport_P(f, phi0, v0, w);
  const auto b = stochastic_parallel_transport_P(f, phi0.compose_translation(Eigen::VectorXd::Constant(1, 0.9)), v0, w);
  double iso = 0.0, vert = 0.0;
  for (std::size_t k = 1; k < a.times.size(); ++k) {
    iso = std::max(iso, std::abs(a.norms[k] - a.norms[0]) / a.times[k]);
    vert = std::max(vert, a.lifted[k].vertical_norm / a.times[k]);
  }
  const double fiber = (a.projected.back().values - b.projected.back().values).cwiseAbs().maxCoeff();
  return {check_le("transport_isometry", iso, 1e-3), check_le("transport_horizontality", vert, 1e-3),
          check_le("fiber_independence", fiber, 1e-6)};
}

inline Check decomposition(std::uint64_t seed) {
  const int n = 64;
  const double h = 1e-3;
  const std::vector<RightInvariantField> fields{
      right_invariant(MeasureVectorField::gradient_potential(TrigPotential(1, {{1, 0, 0.5, 0.0}}))) +
          right_invariant(VerticalCoefficient{0.05, 0.1, 0.0}),
      right_invariant(MeasureVectorField::gradient_potential(TrigPotential(1, {{1, 0, 0.0, 0.3}}))) +
          right_invariant(VerticalCoefficient{0.05, 0.0, 0.05})};
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, n, 0.7));
  const BrownianDriver w(1, 0.2, h, seed);
  const auto d = equivariant_decompose_D(fields, phi0, w);
  const auto direct = integrate_right_invariant(fields, phi0, w);
  double err = 0.0;
  for (std::size_t k = 0; k < direct.size(); ++k)
    err = std::max(err, (d.reconstruction[k].values - direct[k].values).cwiseAbs().maxCoeff());
  return check_le("decomposition", err, 10 * h);
}

}  // namespace suite_detail

inline const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names{"sphere_constraint", "hodge_projection", "hopf_holonomy",
                                              "picard_collapse",   "heat_flow",        "lipschitz",
                                              "transport",         "decomposition"};
  return names;
}

// Runs the selected checks (all when empty) in a fixed order.
inline std::vector<Check> run_suite(std::uint64_t seed, const std::vector<std::string>& only = {}) {
  for (const auto& name : only)
    if (std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end())
      raise_config("UnknownCheck", "no invariant check named '" + name + "'");
  auto wanted = [&](const std::string& name) { return only.empty() || std::find(only.begin(), only.end(), name) != only.end(); };
  using namespace suite_detail;
  std::vector<Check> out;
  if (wanted("sphere_constraint")) out.push_back(sphere_constraint(seed));
  if (wanted("hodge_projection")) out.push_back(hodge_projection(seed));
  if (wanted("hopf_holonomy")) out.push_back(hopf_holonomy());
  if (wanted("picard_collapse")) out.push_back(picard_collapse(seed));
  if (wanted("heat_flow")) out.push_back(heat_flow());
  if (wanted("lipschitz")) out.push_back(lipschitz(seed));
  if (wanted("transport")) {
    const auto t = circle_transport(seed);
    out.insert(out.end(), t.begin(), t.end());
  }
  if (wanted("decomposition")) out.push_back(decomposition(seed));
  return out;
}

inline Table checks_table(const std::vector<Check>& checks) {
  Table t;
  t.columns = {"check", "value", "threshold", "pass"};
  for (const auto& c : checks) t.add_row({c.name, format_number(c.value), format_number(c.threshold), c.pass ? "1" : "0"});
  return t;
}

inline Runner prepare_invariants(Reader& r, const Common&) {
  const std::vector<std::string> only = r.strings("checks");
  for (const auto& name : only)
    if (std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end())
      raise_config("UnknownCheck", "no invariant check named '" + name + "'");
  return [only](std::uint64_t seed) {
    RunOutput out;
    out.checks = run_suite(seed, only);
    out.results = checks_table(out.checks);
    return out;
  };
}

}  // namespace otto::cli
