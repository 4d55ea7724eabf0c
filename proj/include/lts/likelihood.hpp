#pragma once

#include "lts/model.hpp"
#include "lts/quadrature.hpp"
#include "lts/sampling.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace lts {

enum class FitMethod { Unconditional, Conditional };
enum class OptimizerKind { Bfgs, NelderMead };

/// How the unconditional fit couples tau with (alpha, sigma).
///  Profile: tau is maximized out exactly for every (alpha, sigma), and the
///    profile likelihood is optimized directly.
///  Alternating: tau fixed -> optimize (alpha, sigma) -> re-maximize tau -> ...
/// Both converge to the same point; Profile is much cheaper.
enum class FitScheme { Profile, Alternating };

const char* to_string(FitMethod m);
/// "U" or "C", the labels used in output tables.
const char* method_tag(FitMethod m);

struct FitOptions {
  int quadrature_nodes = 15;
  OptimizerKind optimizer = OptimizerKind::Bfgs;
  FitScheme scheme = FitScheme::Profile;
  double grad_tol = 1e-5;
  double rel_tol = 1e-6;  // outer alternations
  int max_outer = 500;
  int max_iterations = 500;
  int max_evaluations = 20000;
  double tau_cap = 1e6;
  double denominator_floor = 1e-8;
  double sigma_start = 0.5;
};

struct RaschFit {
  Portion portion = Portion::U1;
  FitMethod method = FitMethod::Unconditional;
  double tau_hat = 0.0;
  Eigen::VectorXd alpha_hat;
  double sigma_hat = 0.0;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  int evaluations = 0;
  long observed = 0;       // nu_k: m + r1 for U1, r2 for U2
  double pi0 = 0.0;        // zero-pattern cell probability at the estimate
  bool sigma_fixed = false;  // every pattern saturated, sigma pinned at 0
  std::vector<double> objective_trace;  // per outer alternation (Alternating scheme)

  RaschParams params() const { return {alpha_hat, sigma_hat, portion}; }
};

class FitError : public std::runtime_error {
 public:
  FitError(Portion k, const std::string& what) : std::runtime_error(what), portion_(k) {}
  Portion portion() const { return portion_; }

 private:
  Portion portion_;
};

/// The data carry no information about the parameters (no observed persons, or
/// a conditional likelihood that is constant).
class NonIdentifiable : public FitError {
 public:
  using FitError::FitError;
};

/// tau ran past the configured cap or the nu / (1 - kappa pi_0) denominator vanished.
class Diverged : public FitError {
 public:
  Diverged(Portion k, const std::string& what, RaschFit partial)
      : FitError(k, what), partial_(std::move(partial)) {}
  const RaschFit& partial() const { return partial_; }

 private:
  RaschFit partial_;
};

/// Unconditional log-likelihood for portion `params.portion`, omitting the
/// parameter-free multinomial coefficients (-sum log R_x!, -sum log m_i!, m log(1/N)).
/// U1: lgamma(tau+1) - lgamma(tau-m-r1+1) + (tau-m) log(1-n/N)
///     + sum_named log pi_x + (tau-m-r1) log pi_0 + sum_members log pi_(Ai)x
/// U2: lgamma(tau+1) - lgamma(tau-r2+1) + sum_named log pi_x + (tau-r2) log pi_0
/// Throws std::invalid_argument when tau is below the observed count.
double loglik_unconditional(const ObservedCounts& counts, const FrameGeometry& geom, double tau,
                            const RaschParams& params, const QuadratureRule& rule);

/// Conditional log-likelihood of the observed patterns given that the persons
/// were observed: each observed person contributes the log of its cell
/// probability divided by 1 - kappa pi_0 (kappa = 1 - n/N for U1, 1 for U2).
double loglik_conditional(const ObservedCounts& counts, const FrameGeometry& geom,
                          const RaschParams& params, const QuadratureRule& rule);

/// nu_k / (1 - kappa pi_0). Throws Diverged when the denominator is
/// at or below `denominator_floor`.
double tau_update(const ObservedCounts& counts, const FrameGeometry& geom, const RaschParams& params,
                  const QuadratureRule& rule, double denominator_floor = 1e-8);

RaschFit fit_unconditional(const ObservedCounts& counts, const FrameGeometry& geom, Portion portion,
                           const QuadratureRule& rule, const FitOptions& opts = {});

RaschFit fit_conditional(const ObservedCounts& counts, const FrameGeometry& geom, Portion portion,
                         const QuadratureRule& rule, const FitOptions& opts = {});

RaschFit fit(FitMethod method, const ObservedCounts& counts, const FrameGeometry& geom,
             Portion portion, const QuadratureRule& rule, const FitOptions& opts = {});

/// Maximizer over continuous tau >= observed of
///   lgamma(tau+1) - lgamma(tau-observed+1) + tau * log_rate,
/// the tau-dependent part of the unconditional likelihood with
/// log_rate = log(kappa pi_0). Returns `cap` if the root lies beyond it.
double profile_tau(double observed, double log_rate, double cap);

}  // namespace lts
