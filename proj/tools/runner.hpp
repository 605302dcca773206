#pragma once

// run <config>: validation, execution over seeds and artifact writing.

#include "scenarios.hpp"
#include "suite.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace otto::cli {

inline constexpr const char* kVersion = "0.1.0";

struct Plan {
  json config;
  Common common;
  std::vector<std::uint64_t> seeds;
  bool sweep = false;
  std::string output;
  Runner runner;
};

// Validates the whole config before anything runs.
inline Plan make_plan(const json& cfg, const std::optional<std::string>& output_override = std::nullopt) {
  Plan plan;
  plan.config = cfg;
  Reader r(cfg, "config");
  Common& c = plan.common;
  c.kind = r.str("kind");
  static const std::vector<std::string> kinds{"manifold_sde", "hopf", "mkv", "wtransport", "decompose", "invariants"};
  if (std::find(kinds.begin(), kinds.end(), c.kind) == kinds.end())
    raise_config("UnknownKind", "unknown scenario kind '" + c.kind + "'");
  const std::string default_manifold = c.kind == "manifold_sde" ? "sphere2" : c.kind == "hopf" ? "sphere3" : "circle";
  c.manifold = r.str("manifold", default_manifold);
  c.h = r.num("h", 1e-3);
  c.T = r.num("T", 0.5);
  c.store_every = r.integer("store_every", 1);
  if (!(c.h > 0.0) || !(c.T > 0.0)) raise_config("ConfigSchema", "h and T must be positive");
  if (c.store_every < 1) raise_config("ConfigSchema", "store_every must be positive");
  if (c.kind != "invariants") BrownianDriver::zero(0, c.T, c.h);  // validates the time grid
  if (r.has("seed") && r.has("seeds")) raise_config("ConfigSchema", "give either seed or seeds");
  if (r.has("seeds")) {
    const json& s = r.raw("seeds");
    if (!s.is_array() || s.empty()) raise_config("ConfigSchema", "seeds must be a non-empty array");
    for (const auto& e : s) plan.seeds.push_back(parse_seed(e));
    plan.sweep = true;
  } else {
    plan.seeds.push_back(r.has("seed") ? parse_seed(r.raw("seed")) : 0);
  }
  plan.output = r.str("output", "otto_out/" + c.kind);
  if (output_override) plan.output = *output_override;
  if (c.kind == "manifold_sde") plan.runner = prepare_manifold_sde(r, c);
  else if (c.kind == "hopf") plan.runner = prepare_hopf(r, c);
  else if (c.kind == "mkv") plan.runner = prepare_mkv(r, c);
  else if (c.kind == "wtransport") plan.runner = prepare_wtransport(r, c);
  else if (c.kind == "decompose") plan.runner = prepare_decompose(r, c);
  else plan.runner = prepare_invariants(r, c);
  r.finish();
  return plan;
}

inline json manifest_for(const Plan& plan) {
  json seeds = json::array();
  for (auto s : plan.seeds) seeds.push_back(std::to_string(s));
  return {{"kind", plan.common.kind},
          {"config_hash", config_hash(plan.config)},
          {"hash_algorithm", "fnv1a64 over the canonical JSON dump"},
          {"seeds", seeds},
          {"versions",
           {{"otto", kVersion},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__}}},
          {"files", {"results.csv", "diagnostics.json"}}};
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) raise_config("OutputWrite", "cannot write '" + p.string() + "'");
  out << text;
}

// Executes the plan and writes results.csv, diagnostics.json and manifest.json. Returns
// the exit code: 0, 3 on a numeric failure, 4 when an invariant check fails.
inline int execute(const Plan& plan, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  const fs::path dir(plan.output);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise_config("OutputWrite", "cannot create '" + dir.string() + "'");
  write_text(dir / "manifest.json", manifest_for(plan).dump(2) + "\n");

  std::vector<RunOutput> runs(plan.seeds.size());
  std::vector<std::optional<Error>> failures(plan.seeds.size());
  parallel_for(plan.seeds.size(), [&](std::size_t i) {
    try {
      runs[i] = plan.runner(plan.seeds[i]);
    } catch (const Error& e) {
      failures[i] = e;
    }
  }, 1);

  json diag = json::object();
  json per_seed = json::array();
  Table results;
  bool all_pass = true;
  std::optional<Error> first_failure;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    json d = runs[i].diagnostics;
    d["seed"] = std::to_string(plan.seeds[i]);
    if (failures[i]) {
      d["error"] = {{"code", failures[i]->code()}, {"message", failures[i]->what()}};
      if (!first_failure) first_failure = failures[i];
    } else {
      json checks = json::array();
      for (const auto& c : runs[i].checks) {
        checks.push_back(to_json(c));
        all_pass = all_pass && c.pass;
      }
      d["invariants"] = checks;
      Table t = runs[i].results;
      if (plan.sweep) t.prepend("seed", std::to_string(plan.seeds[i]));
      results.append(t);
    }
    per_seed.push_back(d);
  }
  diag["kind"] = plan.common.kind;
  diag["runs"] = per_seed;
  diag["all_invariants_pass"] = all_pass && !first_failure;
  write_text(dir / "diagnostics.json", diag.dump(2) + "\n");
  std::ostringstream csv;
  results.write(csv);
  write_text(dir / "results.csv", csv.str());

  if (first_failure) {
    log << "error: " << first_failure->what() << '\n';
    return exit_code_for(first_failure->error_class());
  }
  for (const auto& run : runs)
    for (const auto& c : run.checks)
      if (!c.pass) log << "invariant failed: " << c.name << " value " << format_number(c.value) << " > " << format_number(c.threshold) << '\n';
  return all_pass ? 0 : exit_code_for(ErrorClass::invariant);
}

}  // namespace otto::cli
