#pragma once

// Scenario kinds of the batch runner. Each kind parses its keys up front and returns a
// runner that maps a seed to a results table, diagnostics and invariant checks.

#include "config.hpp"
#include "table.hpp"

#include "otto/integrators.hpp"
#include "otto/mckean_vlasov.hpp"
#include "otto/parallel.hpp"
#include "otto/submersion.hpp"
#include "otto/transport.hpp"
#include "otto/wasserstein.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace otto::cli {

struct Check {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

inline Check check_le(std::string name, double value, double threshold) {
  return {std::move(name), value, threshold, value <= threshold};
}

inline json to_json(const Check& c) {
  return {{"name", c.name}, {"value", c.value}, {"threshold", c.threshold}, {"pass", c.pass}};
}

struct RunOutput {
  Table results;
  json diagnostics = json::object();
  std::vector<Check> checks;
};

using Runner = std::function<RunOutput(std::uint64_t seed)>;

struct Common {
  std::string kind;
  std::string manifold;
  double h = 1e-3;
  double T = 0.5;
  int store_every = 1;
};

inline bool stored(int k, int steps, int every) { return k % every == 0 || k == steps; }

// A noise list entry is one catalog string or an array of strings summed into one channel.
inline std::vector<std::vector<std::string>> channels(Reader& r, const std::string& key) {
  if (!r.has(key)) return {};
  const json& v = r.raw(key);
  if (!v.is_array()) raise_config("ConfigSchema", key + " must be an array");
  std::vector<std::vector<std::string>> out;
  for (const auto& e : v) {
    if (e.is_string()) {
      out.push_back({e.get<std::string>()});
      continue;
    }
    if (!e.is_array()) raise_config("ConfigSchema", key + " entries must be strings or arrays of strings");
    std::vector<std::string> sum;
    for (const auto& s : e) {
      if (!s.is_string()) raise_config("ConfigSchema", key + " entries must be strings or arrays of strings");
      sum.push_back(s.get<std::string>());
    }
    out.push_back(std::move(sum));
  }
  return out;
}

inline std::vector<MeasureVectorField> measure_channels(const std::vector<std::vector<std::string>>& c, int dim) {
  std::vector<MeasureVectorField> out;
  for (const auto& e : c) out.push_back(parse_field_sum(e, dim));
  return out;
}

inline int grid_size(Reader& r, int fallback) {
  const int n = r.integer("n", fallback);
  if (n < 8 || n > 4096 || n % 2) raise_config("BadGrid", "n must be even and between 8 and 4096");
  return n;
}

// ---------------------------------------------------------------- manifold_sde

struct LinearField {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd offset;
};

// {"matrix": [[...]], "offset": [...]} gives x -> P_x(M x + b).
inline LinearField parse_linear_field(const json& j, int d, const std::string& where) {
  Reader r(j, where);
  LinearField f{Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d)};
  if (r.has("matrix")) {
    const json& m = r.raw("matrix");
    if (!m.is_array() || static_cast<int>(m.size()) != d)
      raise_config("ConfigSchema", where + ".matrix must be a " + std::to_string(d) + "x" + std::to_string(d) + " array");
    for (int i = 0; i < d; ++i) {
      if (!m[i].is_array() || static_cast<int>(m[i].size()) != d)
        raise_config("ConfigSchema", where + ".matrix must be square");
      for (int k = 0; k < d; ++k) {
        if (!m[i][k].is_number()) raise_config("ConfigSchema", where + ".matrix entries must be numbers");
        f.matrix(i, k) = m[i][k].get<double>();
      }
    }
  }
  const auto b = r.numbers("offset", static_cast<std::size_t>(d));
  for (int i = 0; i < static_cast<int>(b.size()); ++i) f.offset(i) = b[i];
  r.finish();
  return f;
}

inline TangentField tangent_field(const EmbeddedManifold& m, const LinearField& f) {
  return [m, f](const Point& x) -> Vec {
    const Eigen::VectorXd y = f.matrix * Eigen::VectorXd(x) + f.offset;
    return m.tangent_project(x, Vec(y));
  };
}

inline Runner prepare_manifold_sde(Reader& r, const Common& c) {
  const EmbeddedManifold m = EmbeddedManifold::from_id(c.manifold);
  const int d = m.ambient_dim();
  FieldSet fields;
  if (r.has("drift")) fields.drift = tangent_field(m, parse_linear_field(r.raw("drift"), d, "drift"));
  if (r.has("noise")) {
    const json& arr = r.raw("noise");
    if (!arr.is_array()) raise_config("ConfigSchema", "noise must be an array of field objects");
    for (std::size_t i = 0; i < arr.size(); ++i)
      fields.noise.push_back(tangent_field(m, parse_linear_field(arr[i], d, "noise[" + std::to_string(i) + "]")));
  }
  Point x0 = Point::Zero(d);
  x0(0) = 1.0;
  if (c.manifold == "torus2") x0(2) = 1.0;
  const auto xs = r.numbers("x0", static_cast<std::size_t>(d));
  for (int i = 0; i < static_cast<int>(xs.size()); ++i) x0(i) = xs[i];
  const int paths = r.integer("paths", 1);
  if (paths < 1) raise_config("ConfigSchema", "paths must be positive");
  const std::string scheme_id = r.str("scheme", std::string("ito"));
  if (scheme_id != "ito" && scheme_id != "stratonovich") raise_config("ConfigSchema", "scheme must be ito or stratonovich");
  const Scheme scheme = scheme_id == "ito" ? Scheme::ito_projected : Scheme::stratonovich_heun;
  return [=](std::uint64_t seed) {
    std::vector<PathSample> samples(static_cast<std::size_t>(paths));
    parallel_for(samples.size(), [&](std::size_t p) {
      const BrownianDriver w(static_cast<int>(fields.noise.size()), c.T, c.h, seed + p);
      samples[p] = integrate_manifold_sde(m, fields, x0, w, scheme);
    }, 1);
    RunOutput out;
    out.results.columns = {"path", "t"};
    for (int i = 0; i < d; ++i) out.results.columns.push_back("x" + std::to_string(i));
    out.results.columns.push_back("constraint_error");
    double worst = 0.0;
    for (int p = 0; p < paths; ++p) {
      const auto& s = samples[static_cast<std::size_t>(p)];
      const int steps = static_cast<int>(s.points.size()) - 1;
      for (int k = 0; k <= steps; ++k) {
        const Point& x = s.points[static_cast<std::size_t>(k)];
        const double err = (m.closest_point(x) - x).norm();
        worst = std::max(worst, err);
        if (!stored(k, steps, c.store_every)) continue;
        std::vector<double> row{static_cast<double>(p), s.times[static_cast<std::size_t>(k)]};
        for (int i = 0; i < d; ++i) row.push_back(x(i));
        row.push_back(err);
        out.results.add(row);
      }
    }
    out.diagnostics["max_constraint_error"] = worst;
    out.diagnostics["scheme"] = scheme_id;
    out.checks.push_back(check_le("constraint", worst, 1e-6));
    return out;
  };
}

// ---------------------------------------------------------------- hopf

// {"gradient": [g], "rotation": [r]} on the base sphere: y -> P_y(g) + r x y.
inline TangentField base_field(const EmbeddedManifold& base, const json& j, const std::string& where) {
  Reader r(j, where);
  const auto g = r.numbers("gradient", 3), rot = r.numbers("rotation", 3);
  r.finish();
  const Eigen::Vector3d gv = g.empty() ? Eigen::Vector3d::Zero() : Eigen::Vector3d(g[0], g[1], g[2]);
  const Eigen::Vector3d rv = rot.empty() ? Eigen::Vector3d::Zero() : Eigen::Vector3d(rot[0], rot[1], rot[2]);
  return [base, gv, rv](const Point& y) -> Vec {
    const Eigen::Vector3d p(y(0), y(1), y(2));
    return base.tangent_project(y, Vec(Eigen::VectorXd(gv))) + Vec(Eigen::VectorXd(rv.cross(p)));
  };
}

// [c0, c1, c2, c3]: q -> c0 + (c1, c2, c3) . p(q), constant along fibres.
inline std::function<double(const Point&)> vertical_scalar(const HopfFibration& b, const std::vector<double>& c) {
  return [b, c](const Point& q) {
    const Point y = b.project(q);
    return c[0] + c[1] * y(0) + c[2] * y(1) + c[3] * y(2);
  };
}

inline Runner prepare_hopf(Reader& r, const Common& c) {
  if (c.manifold != "sphere3") raise_config("ConfigSchema", "hopf scenarios live on sphere3");
  const HopfFibration b;
  EquivariantFields f;
  if (r.has("base_drift")) f.base.drift = base_field(b.base(), r.raw("base_drift"), "base_drift");
  if (r.has("base_noise")) {
    const json& arr = r.raw("base_noise");
    if (!arr.is_array()) raise_config("ConfigSchema", "base_noise must be an array of field objects");
    for (std::size_t i = 0; i < arr.size(); ++i)
      f.base.noise.push_back(base_field(b.base(), arr[i], "base_noise[" + std::to_string(i) + "]"));
  }
  const auto vd = r.numbers("vertical_drift", 4);
  if (!vd.empty()) f.vertical_drift = vertical_scalar(b, vd);
  if (r.has("vertical_noise")) {
    const json& arr = r.raw("vertical_noise");
    if (!arr.is_array()) raise_config("ConfigSchema", "vertical_noise must be an array of 4-vectors");
    for (const auto& e : arr) {
      if (!e.is_array() || e.size() != 4) raise_config("ConfigSchema", "vertical_noise entries must have 4 numbers");
      std::vector<double> cc;
      for (const auto& x : e) {
        if (!x.is_number()) raise_config("ConfigSchema", "vertical_noise entries must have 4 numbers");
        cc.push_back(x.get<double>());
      }
      f.vertical_noise.push_back(vertical_scalar(b, cc));
    }
  }
  Point q0 = Point::Zero(4);
  q0(0) = 1.0;
  const auto qs = r.numbers("q0", 4);
  for (int i = 0; i < static_cast<int>(qs.size()); ++i) q0(i) = qs[i];
  if (q0.norm() == 0.0) raise_config("ConfigSchema", "q0 must be nonzero");
  q0.normalize();
  Vec v0(3);
  v0 << 0.0, 1.0, 0.0;
  const auto vs = r.numbers("v0", 3);
  for (int i = 0; i < static_cast<int>(vs.size()); ++i) v0(i) = vs[i];
  const int nch = static_cast<int>(std::max(f.base.noise.size(), f.vertical_noise.size()));
  return [=](std::uint64_t seed) {
    const BrownianDriver w(nch, c.T, c.h, seed);
    const auto d = equivariant_decompose(b, f, q0, w);
    const auto rec = reconstruct(b, d);
    const auto direct = integrate_manifold_sde(b.total(), full_fields(b, f), q0, w, Scheme::stratonovich_heun);
    const Vec u0 = horizontal_lift_vector(b, q0, b.base().tangent_project(b.project(q0), v0));
    const auto moved = horizontal_transport(b, d.horizontal, u0);
    RunOutput out;
    out.results.columns = {"t", "y0", "y1", "y2", "phase", "reconstruction_error", "transported_norm"};
    double rec_err = 0.0, iso = 0.0;
    const int steps = w.steps();
    for (int k = 0; k <= steps; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      const double e = (rec[kk] - direct.points[kk]).norm();
      const double nrm = b.differential(d.horizontal.points[kk], moved[kk]).norm();
      rec_err = std::max(rec_err, e);
      if (k > 0) iso = std::max(iso, std::abs(nrm - u0.norm()) / d.horizontal.times[kk]);
      if (!stored(k, steps, c.store_every)) continue;
      const Point y = b.project(d.horizontal.points[kk]);
      out.results.add({d.horizontal.times[kk], y(0), y(1), y(2), d.group.phase[kk], e, nrm});
    }
    out.diagnostics["max_reconstruction_error"] = rec_err;
    out.diagnostics["norm_drift_rate"] = iso;
    out.checks.push_back(check_le("reconstruction", rec_err, 10 * c.h));
    // Norm drift is a discretization effect, so it is checked as a rate over elapsed time.
    out.checks.push_back(check_le("transport_isometry", iso, 1e-3));
    return out;
  };
}

// ---------------------------------------------------------------- mkv

inline double w2_to(const ParticleCloud& a, const ParticleCloud& b, int n) {
  if (a.dim == 1) return w2_circle(a, b);
  return w2_sinkhorn_torus(kde(a, n), kde(b, n)).distance;
}

inline Runner prepare_mkv(Reader& r, const Common& c) {
  const int dim = manifold_dim(c.manifold);
  const int n = grid_size(r, dim == 1 ? 128 : 32);
  if (dim == 2 && n < 32) raise_config("BadGrid", "torus distances use Sinkhorn on grids with n >= 32");
  const GridDensity mu = parse_measure(r.str("initial", std::string("uniform")), dim, n);
  const MeasureVectorField drift = parse_field_sum(r.strings("drift"), dim);
  const auto noise = measure_channels(channels(r, "noise"), dim);
  const int P = r.integer("P", mu.size());
  if (P < 2) raise_config("ConfigSchema", "P must be at least 2");
  const std::string solver = r.str("solver", std::string("picard"));
  if (solver != "picard" && solver != "self_consistent") raise_config("ConfigSchema", "solver must be picard or self_consistent");
  PicardOptions po;
  po.tol = r.num("tol", 1e-10);
  po.max_iter = r.integer("max_iter", 50);
  std::vector<std::string> obs_ids = r.strings("observables");
  std::vector<TrigPotential> observables;
  for (const auto& id : obs_ids) observables.push_back(parse_potential(id, dim));
  std::vector<std::string> test_ids = r.strings("test_functions");
  std::vector<TrigPotential> tests;
  for (const auto& id : test_ids) tests.push_back(parse_potential(id, dim));
  const std::optional<double> residual_tol = r.has("residual_tolerance") ? std::optional(r.num("residual_tolerance")) : std::nullopt;
  const ParticleCloud initial = initial_ensemble(mu, P);
  return [=](std::uint64_t seed) {
    MKVProblem pb;
    pb.dim = dim;
    pb.drift = drift;
    pb.noise = noise;
    pb.initial = initial;
    pb.step = c.h;
    pb.horizon = c.T;
    pb.seed = seed;
    pb.kde_n = n;
    const BrownianDriver w = pb.driver();
    const MKVSolution sol = solver == "picard" ? picard_solve(pb, w, po) : self_consistent_step_solve(pb, w);
    SdeResidualReport res;
    if (!tests.empty()) res = verify_wasserstein_sde(sol.path, drift, noise, tests, w, n);
    RunOutput out;
    out.results.columns = {"t", "w2_to_initial", "moment_cos", "moment_sin"};
    for (const auto& id : obs_ids) out.results.columns.push_back("F_" + id);
    for (const auto& id : test_ids) out.results.columns.push_back("residual_" + id);
    const int steps = w.steps();
    for (int k = 0; k <= steps; ++k) {
      if (!stored(k, steps, c.store_every)) continue;
      const auto& s = sol.path.states[static_cast<std::size_t>(k)];
      const auto [mc, ms] = fourier_moment(s, 0, 1);
      std::vector<double> row{sol.path.times[static_cast<std::size_t>(k)], w2_to(initial, s, n), mc, ms};
      for (const auto& f : observables) row.push_back(potential_energy(f, s));
      for (const auto& rv : res.residuals) row.push_back(rv(k));
      out.results.add(row);
    }
    const auto& d = sol.diagnostics;
    out.diagnostics["solver"] = solver;
    out.diagnostics["window_gaps"] = d.window_gaps;
    out.diagnostics["window_starts"] = d.window_starts;
    out.diagnostics["window_steps"] = d.window_steps;
    out.diagnostics["window_restarts"] = d.window_restarts;
    out.diagnostics["max_iterations"] = d.max_iterations;
    out.diagnostics["monotonicity_violations"] = d.monotonicity_violations;
    json sup = json::object();
    for (std::size_t i = 0; i < test_ids.size(); ++i) sup[test_ids[i]] = res.sup_residual[i];
    out.diagnostics["sup_residual"] = sup;
    if (residual_tol) out.checks.push_back(check_le("sde_residual", res.max_residual, *residual_tol));
    return out;
  };
}

// ---------------------------------------------------------------- wtransport

inline QScheme parse_q_scheme(const std::string& s) {
  if (s == "heun") return QScheme::heun;
  if (s == "ito_euler") return QScheme::ito_euler;
  if (s == "milstein") return QScheme::milstein;
  raise_config("ConfigSchema", "scheme must be heun, ito_euler or milstein");
}

inline Runner prepare_wtransport(Reader& r, const Common& c) {
  const int dim = manifold_dim(c.manifold);
  const int n = grid_size(r, dim == 1 ? 128 : 32);
  const GridDensity mu = parse_measure(r.str("initial", std::string("uniform")), dim, n);
  LiftFields f;
  f.drift = parse_field_sum(r.strings("drift"), dim);
  f.noise = measure_channels(channels(r, "noise"), dim);
  const TangentPotential v0 = TangentPotential{dim, n, parse_potential(r.str("v0", std::string(dim == 1 ? "sin" : "sin_x")), dim).sample(n)};
  const double shift = r.num("fiber_shift", 0.5);
  const QScheme scheme = parse_q_scheme(r.str("scheme", std::string("heun")));
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(mu);
  return [=](std::uint64_t seed) {
    const BrownianDriver w(static_cast<int>(f.noise.size()), c.T, c.h, seed);
    TangentPotential v = v0;
    v.values.array() -= v.values.mean();
    const auto main = stochastic_parallel_transport_P(f, phi0, v, w, scheme, c.store_every);
    std::optional<PTransportPath> other;
    const Eigen::VectorXd a = Eigen::VectorXd::Constant(1, shift);
    if (dim == 1) other = stochastic_parallel_transport_P(f, phi0.compose_translation(a), v, w, scheme, c.store_every);
    RunOutput out;
    out.results.columns = {"t", "norm", "vertical_norm", "high_frequency"};
    if (dim == 1) out.results.columns.insert(out.results.columns.end(), {"fiber_gap", "reconstruction_error"});
    double iso = 0.0, vert = 0.0, fiber = 0.0;
    for (std::size_t k = 0; k < main.times.size(); ++k) {
      const double t = main.times[k];
      std::vector<double> row{t, main.norms[k], main.lifted[k].vertical_norm, main.high_frequency[k]};
      if (t > 0) {
        iso = std::max(iso, std::abs(main.norms[k] - main.norms[0]) / t);
        vert = std::max(vert, main.lifted[k].vertical_norm / t);
      }
      if (other) {
        const double gap = (main.projected[k].values - other->projected[k].values).cwiseAbs().maxCoeff();
        const double rec =
            (other->lift.maps[k].values - main.lift.maps[k].compose_translation(a).values).cwiseAbs().maxCoeff();
        fiber = std::max(fiber, gap);
        row.push_back(gap);
        row.push_back(rec);
      }
      out.results.add(row);
    }
    out.diagnostics["initial_norm"] = main.norms.front();
    out.diagnostics["isometry_rate"] = iso;
    out.diagnostics["horizontality_rate"] = vert;
    out.diagnostics["final_high_frequency"] = main.high_frequency.back();
    out.checks.push_back(check_le("isometry", iso, 1e-3));
    out.checks.push_back(check_le("horizontality", vert, 1e-3));
    if (dim == 1) {
      out.diagnostics["max_fiber_gap"] = fiber;
      out.checks.push_back(check_le("fiber_independence", fiber, 1e-6));
    }
    return out;
  };
}

// ---------------------------------------------------------------- decompose

inline Runner prepare_decompose(Reader& r, const Common& c) {
  if (c.manifold != "circle") raise_config("ConfigSchema", "decompose scenarios run on the circle");
  const int n = grid_size(r, 128);
  const GridDensity mu = parse_measure(r.str("initial", std::string("uniform")), 1, n);
  const bool ito_vertical = r.boolean("ito_vertical", false);
  const std::vector<std::string> drift_ids = r.strings("drift");
  const auto noise_ids = channels(r, "noise");
  if (ito_vertical && !drift_ids.empty()) raise_config("ConfigSchema", "ito_vertical scenarios take noise fields only");
  std::vector<RightInvariantField> fields{parse_right_invariant(drift_ids)};
  for (const auto& ch : noise_ids) fields.push_back(parse_right_invariant(ch));
  const DiscreteDiffeo phi0 = DiscreteDiffeo::section(mu);
  const int nch = static_cast<int>(noise_ids.size());
  return [=](std::uint64_t seed) {
    const BrownianDriver w(nch, c.T, c.h, seed);
    RunOutput out;
    if (ito_vertical) {
      const std::vector<RightInvariantField> ito(fields.begin() + 1, fields.end());
      const auto rep = vertical_ito_drift(ito, phi0, w);
      out.results.columns = {"t", "h_quadratic_variation", "h_displacement"};
      double qv = 0.0;
      for (std::size_t k = 0; k < rep.path.h.size(); ++k) {
        if (k > 0) {
          const Eigen::VectorXd d = rep.path.h[k].values - rep.path.h[k - 1].values;
          qv += d.squaredNorm() / static_cast<double>(d.size());
        }
        if (!stored(static_cast<int>(k), w.steps(), c.store_every)) continue;
        out.results.add({rep.path.times[k], qv, (rep.path.h[k].values - phi0.values).cwiseAbs().maxCoeff()});
      }
      out.diagnostics["quadratic_variation"] = rep.quadratic_variation;
      out.diagnostics["field_scale"] = rep.field_scale;
      out.diagnostics["initial_drift_norm"] = rep.initial_drift_norm;
      out.diagnostics["finite_variation"] = rep.finite_variation;
      out.checks.push_back(check_le("finite_variation", rep.quadratic_variation,
                                    1e-6 * rep.field_scale * rep.field_scale * w.horizon()));
      return out;
    }
    const auto d = equivariant_decompose_D(fields, phi0, w);
    const auto direct = integrate_right_invariant(fields, phi0, w);
    const GridDensity vol = GridDensity::uniform(1, n);
    out.results.columns = {"t", "reconstruction_error", "group_shift", "group_pushforward_w2", "h_quadratic_variation"};
    double rec = 0.0, push = 0.0, qv = 0.0;
    const Eigen::VectorXd x = spectral::nodes(n);
    for (std::size_t k = 0; k < d.h.size(); ++k) {
      if (k > 0) {
        const Eigen::VectorXd dh = d.h[k].values - d.h[k - 1].values;
        qv += dh.squaredNorm() / static_cast<double>(dh.size());
      }
      const double e = (d.reconstruction[k].values - direct[k].values).cwiseAbs().maxCoeff();
      const double p = std::sqrt(std::max(0.0, w2_circle_squared(d.g[k].density(), vol)));
      rec = std::max(rec, e);
      push = std::max(push, p);
      if (!stored(static_cast<int>(k), w.steps(), c.store_every)) continue;
      out.results.add({d.times[k], e, (d.g[k].values.col(0) - x).mean(), p, qv});
    }
    out.diagnostics["max_reconstruction_error"] = rec;
    out.diagnostics["max_group_pushforward_w2"] = push;
    out.diagnostics["h_quadratic_variation"] = qv;
    out.checks.push_back(check_le("reconstruction", rec, 10 * c.h));
    out.checks.push_back(check_le("group_preserves_volume", push, 1e-4));
    return out;
  };
}

}  // namespace otto::cli
