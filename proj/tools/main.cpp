#include "runner.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace otto;
using namespace otto::cli;

int run_command(const std::string& config_path, const std::string& out) {
  const Plan plan = make_plan(load_json(config_path), out.empty() ? std::nullopt : std::optional(out));
  const int code = execute(plan);
  std::cout << plan.output << '\n';
  return code;
}

int suite_command(std::uint64_t seed, const std::vector<std::string>& only, const std::string& out) {
  const auto checks = run_suite(seed, only);
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " value=" << format_number(c.value)
              << " threshold=" << format_number(c.threshold) << '\n';
    ok = ok && c.pass;
  }
  if (!out.empty()) {
    std::ofstream f(out);
    if (!f) raise_config("OutputWrite", "cannot write '" + out + "'");
    checks_table(checks).write(f);
  }
  return ok ? 0 : exit_code_for(ErrorClass::invariant);
}

int plotdata_command(const std::string& csv_path, const std::string& out) {
  std::ifstream in(csv_path);
  if (!in) raise_config("InputRead", "cannot open '" + csv_path + "'");
  const Table wide = read_csv(in);
  const Table longf = plotdata(wide);
  if (out.empty()) {
    longf.write(std::cout);
    return 0;
  }
  std::ofstream f(out);
  if (!f) raise_config("OutputWrite", "cannot write '" + out + "'");
  longf.write(f);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic flows on manifolds and Wasserstein space: batch runner"};
  app.require_subcommand(1);

  std::string config_path, run_out;
  auto* run = app.add_subcommand("run", "Run a scenario config and write results.csv, diagnostics.json, manifest.json");
  run->add_option("config", config_path, "Scenario JSON file")->required();
  run->add_option("-o,--output", run_out, "Output directory (overrides the config)");

  std::string seed_text = "0", suite_out;
  std::vector<std::string> only;
  auto* suite = app.add_subcommand("suite", "Run the built-in invariant battery");
  suite->add_option("--seed", seed_text, "Seed as a decimal string");
  suite->add_option("--check", only, "Run only the named checks");
  suite->add_option("-o,--output", suite_out, "Write the check table as CSV");

  std::string csv_path, plot_out;
  auto* plot = app.add_subcommand("plotdata", "Reshape results.csv into long format for plotting");
  plot->add_option("csv", csv_path, "results.csv")->required();
  plot->add_option("-o,--output", plot_out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) return run_command(config_path, run_out);
    if (*suite) return suite_command(parse_seed(json(seed_text)), only, suite_out);
    return plotdata_command(csv_path, plot_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.error_class());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
