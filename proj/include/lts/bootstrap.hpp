#pragma once

#include "lts/estimators.hpp"
#include "lts/random.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace lts {

enum class RegressionMode { Auto, ForceLinear, ForceLogistic };

struct BootConfig {
  int replicates = 50;       // B
  double alpha_level = 0.05;  // CIs have level 1 - alpha_level
  double huber_tuning = 1.5;
  RegressionMode regression_mode = RegressionMode::Auto;

  /// Throws std::invalid_argument naming the violated field.
  void validate() const;
};

/// The world could not be built (no frame-portion fit, or an impossible size).
class DegenerateWorld : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Model for the y-values of unobserved persons: OLS of y on the estimated
/// inclusion probability (continuous) or a logistic regression (binary), with
/// the sample mean/variance fallback when the design is numerically singular.
struct ResponseModel {
  bool binary = false;
  bool fallback = false;
  double intercept = 0.0;
  double slope = 0.0;
  double noise_sd = 0.0;  // continuous only

  /// Mean response (success probability when binary) at inclusion probability pi.
  double mean_at(double pi) const;
  double draw(double pi, Rng& rng) const;
};

ResponseModel fit_response_model(const std::vector<double>& pi, const std::vector<double>& y,
                                 bool binary);

/// Bootstrap population built from one sample and its fits.
struct BootWorld {
  std::vector<int> m_boot;
  Eigen::VectorXd alpha1;  // aligned with m_boot
  Eigen::VectorXd alpha2;  // empty when portion 2 has no fit
  Eigen::VectorXd beta1;   // floor(tau1_hat) entries
  Eigen::VectorXd beta2;
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;
  long observed1 = 0;  // m + r1 leading entries copied from the sample
  long observed2 = 0;
  double beta1_zero = 0.0;
  double beta2_zero = 0.0;
  bool binary = false;
  ResponseModel response1;
  ResponseModel response2;

  int n_frame() const { return static_cast<int>(m_boot.size()); }
  bool has_portion2() const { return alpha2.size() > 0; }
};

/// Steps (i)-(iv). Throws DegenerateWorld when portion 1 has no fit.
BootWorld build_boot_world(const LtsSample& sample, const PortionFits& fits, const QuadratureRule& rule,
                           const BootConfig& config, Rng& rng);

/// Steps (v)-(vi): one synthetic sample drawn from the world.
LtsSample draw_boot_sample(const BootWorld& world, int n, Rng& rng);

/// Steps (v)-(vii): a synthetic sample re-estimated by the original procedure.
EstimateSet boot_replicate(const BootWorld& world, int n, FitMethod method, const QuadratureRule& rule,
                           const FitOptions& opts, Rng& rng);

struct HuberResult {
  double location = 0.0;
  double scale = 0.0;
  bool zero_spread = false;
  int used = 0;  // finite values that entered the fit
};

/// Huber's proposal 2: joint M-estimates of location and scale. Non-finite
/// values are dropped; fewer than two remaining values is an invalid argument.
HuberResult huber_scale(const std::vector<double>& values, double tuning = 1.5);

/// (nu + (tau-nu)/c, nu + (tau-nu) c) with c = exp(z sqrt(log(1 + V/(tau-nu)^2))).
CiRecord ci_lognormal_size(double tau_hat, double nu, double var_hat, double alpha_level);
/// Clopper-Pearson-type interval with effective sample size p(1-p)/V.
CiRecord ci_korn_graubard(double p_hat, double var_hat, double alpha_level);
CiRecord ci_wald(double theta_hat, double var_hat, double alpha_level);

/// Upper alpha/2 point of the standard normal.
double normal_upper(double alpha_level);

/// Whether the observed y-values are treated as binary under `mode`.
bool response_is_binary(const LtsSample& sample, RegressionMode mode);

/// Runs the whole bootstrap on top of `point` (the estimates of `sample` with
/// `fits`) and returns a copy with sd and CI attached. Replicate b uses the
/// stream substream(seed, {b + 1}); the world uses substream(seed, {0}).
EstimateSet bootstrap_estimates(const LtsSample& sample, const PortionFits& fits,
                                const EstimateSet& point, const QuadratureRule& rule,
                                const BootConfig& config, const FitOptions& opts, std::uint64_t seed);

}  // namespace lts
