#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ltscli {

// exit codes
inline constexpr int kOk = 0;
inline constexpr int kInputError = 2;
inline constexpr int kIoError = 3;
inline constexpr int kEstimationError = 4;

struct SimulateOptions {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<int> threads;
  bool persist_samples = false;
  bool progress = false;
};

struct EstimateOptions {
  std::string sample_path;
  std::string config_path;  // optional: fit and bootstrap settings
  std::vector<std::string> overrides;
  std::string method = "unconditional";
  std::optional<int> bootstrap;  // replicates, 0 for none; unset keeps the config's setting
  std::uint64_t seed = 1;
  std::string csv_path;  // "-" for stdout
  int replicate = 0;     // label written to the CSV
};

struct ValidateOptions {
  std::string config_path;
  std::vector<std::string> overrides;
};

/// Runs the Monte Carlo experiment and writes records.csv, report.csv,
/// report.txt and manifest.json (plus samples/ when asked) under out_dir.
int run_simulate(const SimulateOptions& opts, std::ostream& out, std::ostream& err);

/// Fits one sample file and prints estimates, bootstrap sds and intervals.
int run_estimate(const EstimateOptions& opts, std::ostream& out, std::ostream& err);

/// Checks a config and prints the effective configuration.
int run_validate(const ValidateOptions& opts, std::ostream& out, std::ostream& err);

/// Sample file name used by --persist-samples.
std::string sample_file_name(int replicate);

}  // namespace ltscli
