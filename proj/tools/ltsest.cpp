#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Link-tracing sample estimation: Monte Carlo experiments and estimates for sample files"};
  app.require_subcommand(1);
  app.set_version_flag("--version", LTS_VERSION);

  ltscli::SimulateOptions sim;
  auto* simulate = app.add_subcommand("simulate", "Run a Monte Carlo experiment from a JSON config");
  simulate->add_option("config", sim.config_path, "Config file")->required();
  simulate->add_option("-o,--out", sim.out_dir, "Output directory")->required();
  simulate->add_option("--set", sim.overrides, "Override a config entry, key=value with a dotted key");
  simulate->add_option("--threads", sim.threads, "Worker threads (results do not depend on it)");
  simulate->add_flag("--persist-samples", sim.persist_samples, "Also write every replicate sample to samples/");
  simulate->add_flag("--progress", sim.progress, "Report progress on stderr");

  ltscli::EstimateOptions est;
  auto* estimate = app.add_subcommand("estimate", "Estimate population size and means from one sample file");
  estimate->add_option("sample", est.sample_path, "Sample file")->required();
  estimate->add_option("--config", est.config_path, "Config file supplying fit and bootstrap settings");
  estimate->add_option("--set", est.overrides, "Override a config entry, key=value with a dotted key");
  estimate->add_option("--method", est.method, "unconditional (U) or conditional (C)")
      ->check(CLI::IsMember({"unconditional", "conditional", "U", "C"}));
  estimate->add_option("--bootstrap", est.bootstrap, "Bootstrap replicates, 0 for none");
  estimate->add_option("--seed", est.seed, "Bootstrap seed");
  estimate->add_option("--csv", est.csv_path, "Write records CSV to this path, - for stdout");
  estimate->add_option("--replicate", est.replicate, "Replicate label for the CSV");

  ltscli::ValidateOptions val;
  auto* validate = app.add_subcommand("validate", "Check a config and print the effective configuration");
  validate->add_option("config", val.config_path, "Config file")->required();
  validate->add_option("--set", val.overrides, "Override a config entry, key=value with a dotted key");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ltscli::kInputError;
  }

  if (simulate->parsed()) {
    return ltscli::run_simulate(sim, std::cout, std::cerr);
  }
  if (estimate->parsed()) {
    return ltscli::run_estimate(est, std::cout, std::cerr);
  }
  return ltscli::run_validate(val, std::cout, std::cerr);
}
