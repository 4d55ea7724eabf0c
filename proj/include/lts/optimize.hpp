#pragma once

#include <Eigen/Dense>

#include <functional>

namespace lts {

/// Objective to minimize. When `grad` is non-null it must be filled with the
/// gradient at x (same length as x).
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct OptimOptions {
  int max_iterations = 500;
  int max_evaluations = 20000;
  double grad_tol = 1e-6;   // on the infinity norm of the gradient
  double rel_tol = 1e-12;   // relative decrease below which an iteration counts as stalled
  double initial_step = 0.5;  // Nelder-Mead simplex edge
};

struct OptimResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Quasi-Newton BFGS with a strong-Wolfe line search.
OptimResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const OptimOptions& opts = {});

/// Derivative-free Nelder-Mead simplex search (gradient never requested).
OptimResult minimize_nelder_mead(const Objective& f, Eigen::VectorXd x0,
                                 const OptimOptions& opts = {});

}  // namespace lts
