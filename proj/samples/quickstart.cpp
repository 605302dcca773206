// Three small runs: an SDE on the 2-sphere, an interacting particle system with common
// noise on the circle, and parallel transport of a tangent vector along the resulting
// measure path.

#include "otto/integrators.hpp"
#include "otto/mckean_vlasov.hpp"
#include "otto/transport.hpp"

#include <cstdio>

int main() {
  using namespace otto;

  // Brownian motion on S^2 with a rotation drift, projected Ito scheme.
  const EmbeddedManifold sphere = EmbeddedManifold::sphere(2);
  FieldSet fields;
  fields.drift = [](const Vec& x) {
    Vec v(3);
    v << -x(1), x(0), 0.0;
    return v;
  };
  for (int i = 0; i < 3; ++i)
    fields.noise.push_back([sphere, i](const Vec& x) { return sphere.tangent_project(x, Vec::Unit(3, i)); });
  Vec x0(3);
  x0 << 0.0, 0.6, 0.8;
  const BrownianDriver w3(3, 1.0, 1e-3, 42);
  const PathSample path = integrate_manifold_sde(sphere, fields, x0, w3, Scheme::ito_projected);
  std::printf("sphere endpoint (%.4f, %.4f, %.4f), |x| - 1 = %.1e\n", path.points.back()(0), path.points.back()(1),
              path.points.back()(2), path.points.back().norm() - 1.0);

  // Cosine interaction with a common noise channel, solved by Picard iteration.
  MKVProblem pb;
  pb.drift = MeasureVectorField::interaction(1, Kernel::cosine, 0.8);
  pb.noise = {MeasureVectorField::gradient_potential(TrigPotential(1, {{1, 0, 0.0, 0.3}}))};
  pb.initial = initial_ensemble(GridDensity::von_mises(1, 256, 1.0), 2000);
  pb.step = 1e-2;
  pb.horizon = 0.5;
  pb.seed = 7;
  const MKVSolution sol = picard_solve(pb);
  std::printf("particles: W2(mu_T, mu_0) = %.5f after at most %d Picard iterations\n",
              w2_circle(sol.path.states.front(), sol.path.states.back()), sol.diagnostics.max_iterations);

  // Parallel transport of grad(sin) along the horizontal lift of the same kind of flow.
  const int n = 128;
  LiftFields lift;
  lift.drift = pb.drift;
  lift.noise = pb.noise;
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(GridDensity::von_mises(1, n, 1.0));
  const TangentPotential v0 = TangentPotential::from_function(1, n, [](const Eigen::VectorXd& x) { return std::sin(x(0)); });
  const PTransportPath tr = stochastic_parallel_transport_P(lift, phi0, v0, BrownianDriver(1, 0.5, 1e-3, 7));
  std::printf("transport: norm %.8f -> %.8f, vertical part %.1e\n", tr.norms.front(), tr.norms.back(),
              tr.lifted.back().vertical_norm);
  return 0;
}
