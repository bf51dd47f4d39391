// Command-line runner: kdvhl <experiment> --config <path> [--out <dir>] [--levels <k>] [--quiet]
//
// Exit codes: 0 success, 2 configuration error, 3 solver failure (partial
// outputs are still written).

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "kdvhl/config.hpp"
#include "kdvhl/experiments.hpp"

namespace {

constexpr int kConfigError = 2;

int run(kdvhl::ExperimentKind kind, const std::string& config_path, const std::string& out_dir,
        std::optional<int> levels, bool quiet) {
  kdvhl::ExperimentConfig cfg;
  try {
    // The subcommand decides the experiment; flags override file values.
    cfg = kdvhl::ExperimentConfig::parse(kdvhl::KeyValueFile::load(config_path));
    cfg.experiment = kind;
    if (levels) cfg.levels = *levels;
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    cfg.validate();
  } catch (const kdvhl::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  kdvhl::ExperimentOutput out;
  try {
    out = kdvhl::run_experiment(cfg);
  } catch (const kdvhl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }
  kdvhl::write_outputs(cfg.output_dir, out);
  if (!quiet) {
    for (const auto& line : out.summary) std::cout << line << "\n";
    std::cout << "outputs written to " << cfg.output_dir << "\n";
  }
  if (out.solver_failed) std::cerr << "solver failure; partial outputs written\n";
  return out.exit_code();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Half-line KdV simulation and weighted-energy diagnostics"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<int> levels;
  bool quiet = false;

  const std::pair<const char*, kdvhl::ExperimentKind> commands[] = {
      {"simulate", kdvhl::ExperimentKind::Simulate},
      {"converge", kdvhl::ExperimentKind::Converge},
      {"propagation", kdvhl::ExperimentKind::Propagation},
      {"traces", kdvhl::ExperimentKind::Traces},
      {"identity", kdvhl::ExperimentKind::Identity},
      {"oracle-compare", kdvhl::ExperimentKind::OracleCompare},
  };
  std::optional<kdvhl::ExperimentKind> chosen;
  for (const auto& [name, kind] : commands) {
    auto* sub = app.add_subcommand(name, "run the " + std::string(name) + " experiment");
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--levels", levels, "refinement levels (overrides study.levels)");
    sub->add_flag("--quiet", quiet, "do not print the summary");
    sub->callback([&chosen, k = kind] { chosen = k; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  try {
    return run(*chosen, config_path, out_dir, levels, quiet);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
