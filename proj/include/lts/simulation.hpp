#pragma once

#include "lts/bootstrap.hpp"
#include "lts/estimators.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace lts {

enum class PopulationKind { PopulationI, PopulationII, ExplicitFile };
enum class ResponseKind { Continuous, Binary };

const char* to_string(PopulationKind k);
const char* to_string(ResponseKind k);

/// Recipe for a synthetic population. Index 0 of each pair is portion 1.
///   venue sizes  ~ zero-truncated negative binomial(size_mean, size_var)
///   alpha_i^(k)  = c_k / (0.001 + M_i^(1/4))
///   kind I:  beta_j ~ N(0, 1), p_ij = sigmoid(alpha_i + beta_j)
///   kind II: class 1 with probability class1_prob, beta = class_effect for
///            class 1 and 0 otherwise, (ab)_i1 ~ N(0, interaction_sd^2),
///            p_ij = sigmoid(mu_k + alpha_i + beta_j + (ab)_ij)
///   continuous y ~ noncentral chi^2_2(5 + d_k sigmoid(mu_k + beta_j))
///   binary y     ~ Bernoulli(g_k sigmoid(mu_k + beta_j))
/// When fraction_targets is set, c_k is replaced by the value that makes the
/// expected sampling fraction of portion k equal the target for a sample of
/// calibration_n venues.
struct PopulationSpec {
  PopulationKind kind = PopulationKind::PopulationI;
  ResponseKind response = ResponseKind::Continuous;
  std::string path;  // ExplicitFile only
  int n_frame = 150;
  double size_mean = 8.0;
  double size_var = 24.0;
  int tau2 = 400;
  std::array<double, 2> c{-5.45, -5.85};
  std::array<double, 2> mu{0.0, 0.0};
  double class_effect = 1.5;
  double interaction_sd = 1.25;
  double class1_prob = 0.3;
  std::array<double, 2> d{87.0, 65.0};
  std::array<double, 2> g{0.6, 0.39};
  std::optional<std::array<double, 2>> fraction_targets;
  int calibration_n = 15;

  /// The constants of population I or II.
  static PopulationSpec standard(PopulationKind kind, ResponseKind response);

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Draws a zero-truncated negative binomial variate with the given mean and
/// variance of the untruncated law (zeros are rejected).
int draw_truncated_negbin(double mean, double var, Rng& rng);

/// Noncentral chi-square with `df` degrees of freedom and noncentrality
/// `lambda`, as a Poisson(lambda/2) mixture of central chi-squares.
double draw_noncentral_chi2(double df, double lambda, Rng& rng);

/// Expected (m + r1)/tau1 (frame = true) or r2/tau2 over SRSWOR samples of n
/// venues, for a generator population with the given venue sizes.
double expected_fraction(const LinkGenerator& gen, const std::vector<int>& venue_sizes, bool frame, int n);

/// Builds the population (or loads it for ExplicitFile).
Population synth_population(const PopulationSpec& spec, Rng& rng);

/// True values of the nine parameters, indexed by Target.
std::array<double, 9> true_parameters(const Population& pop);

/// Pearson correlations of y with the true inclusion probabilities given a
/// venue sample of size n, averaged over `draws` venue samples. Missing (NaN)
/// when y or the probabilities are constant. Explicit link matrices are
/// rejected with std::invalid_argument.
std::array<double, 2> correlation_check(const Population& pop, int n, std::uint64_t seed = 0,
                                        int draws = 50);

struct McConfig {
  PopulationSpec population;
  int n = 15;
  int r = 100;
  std::vector<FitMethod> methods{FitMethod::Unconditional};
  bool bootstrap = false;
  BootConfig boot;
  FitOptions fit;
  std::uint64_t master_seed = 1;
  int threads = 1;

  void validate() const;
};

/// One (replicate, method, estimator) outcome.
struct McRecord {
  int replicate = 0;
  FitMethod method = FitMethod::Unconditional;
  EstimatorId id{Family::Mle, Target::Tau1};
  double truth = kMissing;
  double value = kMissing;
  double sd = kMissing;
  double ci_lower = kMissing;
  double ci_upper = kMissing;
  std::string ci_kind;  // empty when no interval
  bool ci_degenerate = false;
  FitStatus fit1 = FitStatus::Ok;
  FitStatus fit2 = FitStatus::Ok;
  long nu1 = 0;  // m + r1
  long nu2 = 0;  // r2
  int boot_failures = 0;
  bool variance_unreliable = false;
  std::uint64_t boot_seed = 0;
};

struct McMetric {
  FitMethod method = FitMethod::Unconditional;
  EstimatorId id{Family::Mle, Target::Tau1};
  double truth = kMissing;
  int ok = 0;
  int failed = 0;
  double r_bias = kMissing;
  double sqrt_r_mse = kMissing;
  double mdre = kMissing;
  double mdare = kMissing;
  // bootstrap sd against the Monte Carlo sd of the point estimates
  int sd_count = 0;
  double sd_r_bias = kMissing;
  double sd_sqrt_r_mse = kMissing;
  double sd_mdre = kMissing;
  double sd_mdare = kMissing;
  // intervals
  int ci_count = 0;
  double cp = kMissing;
  double mrl = kMissing;
  double mdrl = kMissing;
};

struct McFailures {
  FitMethod method = FitMethod::Unconditional;
  int samples = 0;
  int fit1_failures = 0;
  int fit2_failures = 0;
  double mean_f1 = kMissing;  // average (m + r1) / tau1
  double mean_f2 = kMissing;  // average r2 / tau2
};

struct McReport {
  std::vector<McMetric> metrics;
  std::vector<McFailures> failures;

  const McMetric* find(FitMethod m, EstimatorId id) const;
  const McFailures* find(FitMethod m) const;
};

struct McRun {
  Population population;
  std::array<double, 9> truth{};
  std::vector<McRecord> records;  // sorted by replicate, method, estimator
  McReport report;
  std::vector<LtsSample> samples;  // filled when requested
};

/// Hook for tests: replaces estimation of a replicate sample.
using ReplicateEstimator = std::function<EstimateSet(const LtsSample&, FitMethod, std::uint64_t boot_seed)>;

struct McHooks {
  bool keep_samples = false;
  ReplicateEstimator estimator;                 // empty: the real pipeline
  std::function<void(int done, int total)> progress;  // called from worker threads under a lock
};

/// Population from substream(seed, {kPopulation}); sample r from
/// substream(seed, {kSample, r}); bootstrap seed of (r, method) from
/// substream(seed, {kBootstrap, r, method}).
McRun run_monte_carlo(const McConfig& config, const McHooks& hooks = {});

/// The eighteen records of one estimate set; truth may hold missing values.
std::vector<McRecord> make_records(int replicate, const EstimateSet& e, const std::array<double, 9>& truth,
                                   long nu1, long nu2, std::uint64_t boot_seed);

/// Recomputes the report from records; run_monte_carlo uses exactly this.
McReport aggregate(const std::vector<McRecord>& records);

void write_records_csv(std::ostream& out, const std::vector<McRecord>& records);
std::vector<McRecord> read_records_csv(std::istream& in);
void write_report_csv(std::ostream& out, const McReport& report);
/// Human-readable tables, one row per estimator.
void write_report_table(std::ostream& out, const McReport& report);

std::uint64_t boot_seed_for(std::uint64_t master_seed, int replicate, FitMethod method);

}  // namespace lts
