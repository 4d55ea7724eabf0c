#include "lts/likelihood.hpp"

#include "lts/optimize.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace lts {

const char* to_string(FitMethod m) {
  return m == FitMethod::Unconditional ? "unconditional" : "conditional";
}

const char* method_tag(FitMethod m) { return m == FitMethod::Unconditional ? "U" : "C"; }

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct Group {
  std::vector<int> ones;  // venue indices in [0, n)
  int excluded = -1;
  double count = 0.0;
};

// Observed data of one portion, flattened for repeated likelihood evaluation.
struct PortionData {
  Portion portion = Portion::U1;
  int n = 0;
  double observed = 0.0;  // nu_k
  double members = 0.0;   // m for U1, 0 for U2
  double log_kappa = 0.0;
  std::vector<Group> groups;
  Eigen::VectorXd link_totals;  // sum over persons of x_i
  bool saturated = true;
};

PortionData compile(const ObservedCounts& counts, const FrameGeometry& geom, Portion portion) {
  if (counts.n != geom.n_sampled) {
    throw std::invalid_argument("likelihood: counts were built for n = " + std::to_string(counts.n) +
                                " but geometry has n = " + std::to_string(geom.n_sampled));
  }
  PortionData d;
  d.portion = portion;
  d.n = counts.n;
  d.link_totals = Eigen::VectorXd::Zero(d.n);
  auto add = [&](const PatternCount& pc, int excluded) {
    Group g;
    g.excluded = excluded;
    g.count = static_cast<double>(pc.count);
    for (int k : pc.pattern.ones()) {
      g.ones.push_back(excluded >= 0 && k >= excluded ? k + 1 : k);
    }
    const auto full = static_cast<std::size_t>(excluded >= 0 ? d.n - 1 : d.n);
    if (pc.pattern.size() != full) {
      throw std::invalid_argument("likelihood: pattern " + pc.pattern.to_string() +
                                  " has the wrong length for n = " + std::to_string(d.n));
    }
    if (g.ones.size() != full) {
      d.saturated = false;
    }
    for (int i : g.ones) {
      d.link_totals[i] += g.count;
    }
    d.groups.push_back(std::move(g));
  };
  if (portion == Portion::U2) {
    d.observed = static_cast<double>(counts.r2);
    for (const auto& pc : counts.named2) {
      add(pc, -1);
    }
  } else {
    d.members = static_cast<double>(counts.m);
    d.observed = static_cast<double>(counts.m + counts.r1);
    d.log_kappa = geom.n_sampled == geom.n_frame ? kNegInf : std::log1p(-geom.fraction());
    for (const auto& pc : counts.named1) {
      add(pc, -1);
    }
    for (std::size_t i = 0; i < counts.in_venue.size(); ++i) {
      for (const auto& pc : counts.in_venue[i]) {
        add(pc, static_cast<int>(i));
      }
    }
  }
  return d;
}

// Sum over observed groups of count * log pi_g, the zero-cell log pi_0, and
// their gradients with respect to (alpha, sigma).
struct Evaluation {
  double sum_log = 0.0;
  double log_pi0 = 0.0;
  Eigen::VectorXd grad_sum;  // n + 1, sigma last
  Eigen::VectorXd grad_pi0;
};

Evaluation evaluate(const PortionData& d, const QuadratureRule& rule,
                    const Eigen::Ref<const Eigen::VectorXd>& alpha, double sigma, bool want_grad) {
  const NodeTable table(rule, alpha, sigma);
  const int q = table.nodes();
  const int n = d.n;
  Evaluation ev;

  Eigen::VectorXd w0;
  ev.log_pi0 = table.log_cell({}, -1, want_grad ? &w0 : nullptr);

  Eigen::VectorXd lf(q);
  Eigen::VectorXd big_w = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd big_v = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd big_e;
  if (want_grad) {
    big_e = Eigen::MatrixXd::Zero(q, n);
  }
  for (const auto& g : d.groups) {
    table.log_conditional(g.ones, g.excluded, lf);
    lf += table.log_weights();
    const double total = log_sum_exp(lf);
    ev.sum_log += g.count * total;
    if (want_grad) {
      const Eigen::VectorXd w = (lf.array() - total).exp();
      big_w += g.count * w;
      big_v += (g.count * static_cast<double>(g.ones.size())) * w;
      if (g.excluded >= 0) {
        big_e.col(g.excluded) += g.count * w;
      }
    }
  }
  if (!want_grad) {
    return ev;
  }
  const Eigen::MatrixXd& p = table.prob();
  const Eigen::VectorXd& z = rule.nodes;
  const Eigen::VectorXd p_row = p.rowwise().sum();
  ev.grad_sum.resize(n + 1);
  ev.grad_sum.head(n) = d.link_totals - p.transpose() * big_w +
                        p.cwiseProduct(big_e).colwise().sum().transpose();
  const Eigen::VectorXd excluded_mass = p.cwiseProduct(big_e).rowwise().sum();
  ev.grad_sum[n] = z.dot(big_v - big_w.cwiseProduct(p_row) + excluded_mass);

  ev.grad_pi0.resize(n + 1);
  ev.grad_pi0.head(n) = -p.transpose() * w0;
  ev.grad_pi0[n] = -z.dot(w0.cwiseProduct(p_row));
  return ev;
}

// (tau - m) log(1 - n/N) with the n = N convention 0 * log 0 = 0.
double miss_term(double tau, const PortionData& d) {
  const double k = tau - d.members;
  if (k <= 0.0) {
    return 0.0;
  }
  return k * d.log_kappa;
}

double unconditional_value(const PortionData& d, double tau, const Evaluation& ev) {
  const double unseen = tau - d.observed;
  double v = std::lgamma(tau + 1.0) - std::lgamma(unseen + 1.0) + miss_term(tau, d) + ev.sum_log;
  if (unseen > 0.0) {
    v += unseen * ev.log_pi0;
  }
  return v;
}

// log(1 - kappa pi_0)
double log_included(const PortionData& d, double log_pi0) {
  const double log_rate = d.log_kappa + log_pi0;
  if (log_rate == kNegInf) {
    return 0.0;
  }
  return std::log(-std::expm1(log_rate));
}

double conditional_value(const PortionData& d, const Evaluation& ev) {
  return ev.sum_log - d.observed * log_included(d, ev.log_pi0);
}

Eigen::VectorXd initial_alpha(const PortionData& d) {
  Eigen::VectorXd den = Eigen::VectorXd::Zero(d.n);
  for (const auto& g : d.groups) {
    den.array() += g.count;
    if (g.excluded >= 0) {
      den[g.excluded] -= g.count;
    }
  }
  Eigen::VectorXd alpha(d.n);
  for (int i = 0; i < d.n; ++i) {
    const double eps = 0.5 / (den[i] + 1.0);
    const double rate = den[i] > 0.0 ? std::clamp(d.link_totals[i] / den[i], eps, 1.0 - eps) : 0.5;
    alpha[i] = std::log(rate / (1.0 - rate));
  }
  return alpha;
}

// Maps between optimizer coordinates and (alpha, sigma). sigma is carried with
// its sign (the likelihood is even in sigma because the nodes are symmetric),
// which keeps sigma = 0 an interior point.
struct Coordinates {
  int n = 0;
  bool sigma_fixed = false;

  Eigen::VectorXd pack(const Eigen::VectorXd& alpha, double sigma) const {
    Eigen::VectorXd th(sigma_fixed ? n : n + 1);
    th.head(n) = alpha;
    if (!sigma_fixed) {
      th[n] = sigma;
    }
    return th;
  }
  double sigma(const Eigen::VectorXd& th) const { return sigma_fixed ? 0.0 : th[n]; }
  void copy_grad(const Eigen::VectorXd& full, Eigen::VectorXd& out) const {
    out = full.head(sigma_fixed ? n : n + 1);
  }
};

OptimResult run_optimizer(const Objective& f, const Eigen::VectorXd& start, const FitOptions& opts) {
  OptimOptions o;
  o.max_iterations = opts.max_iterations;
  o.max_evaluations = opts.max_evaluations;
  o.grad_tol = opts.grad_tol;
  if (opts.optimizer == OptimizerKind::NelderMead) {
    o.rel_tol = 1e-12;
    return minimize_nelder_mead(f, start, o);
  }
  return minimize_bfgs(f, start, o);
}

RaschFit make_fit(const PortionData& d, FitMethod method, const Coordinates& c,
                  const Eigen::VectorXd& th) {
  RaschFit fit;
  fit.portion = d.portion;
  fit.method = method;
  fit.alpha_hat = th.head(d.n);
  fit.sigma_hat = std::abs(c.sigma(th));
  fit.observed = static_cast<long>(d.observed);
  fit.sigma_fixed = c.sigma_fixed;
  return fit;
}

void check_identifiable(const PortionData& d, FitMethod method) {
  if (d.observed <= 0.0) {
    throw NonIdentifiable(d.portion, std::string("portion ") + (d.portion == Portion::U1 ? "1" : "2") +
                                         " has no observed persons; its size is not estimable");
  }
  if (method == FitMethod::Conditional && d.portion == Portion::U2 && d.n == 1) {
    throw NonIdentifiable(d.portion,
                          "single sampled venue: the conditional likelihood of portion 2 is constant");
  }
}

[[noreturn]] void throw_diverged(const RaschFit& fit, const std::string& why) {
  throw Diverged(fit.portion, "fit diverged: " + why, fit);
}

}  // namespace

double profile_tau(double observed, double log_rate, double cap) {
  using boost::math::digamma;
  using boost::math::trigamma;
  if (observed <= 0.0) {
    return 0.0;
  }
  if (log_rate == kNegInf) {
    return observed;
  }
  if (log_rate >= 0.0) {
    return cap;
  }
  auto h = [&](double tau) { return digamma(tau + 1.0) - digamma(tau - observed + 1.0) + log_rate; };
  if (h(observed) <= 0.0) {
    return observed;
  }
  double lo = observed;
  double hi = std::max(observed / -std::expm1(log_rate), observed + 1.0);
  while (h(hi) > 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi >= cap) {
      if (h(cap) > 0.0) {
        return cap;
      }
      hi = cap;
      break;
    }
  }
  // h is decreasing; safeguarded Newton inside [lo, hi].
  double tau = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double v = h(tau);
    if (v > 0.0) {
      lo = tau;
    } else {
      hi = tau;
    }
    const double slope = trigamma(tau + 1.0) - trigamma(tau - observed + 1.0);
    double next = tau - v / slope;
    if (!(next > lo && next < hi)) {
      next = 0.5 * (lo + hi);
    }
    if (std::abs(next - tau) <= 1e-13 * tau || hi - lo <= 1e-13 * hi) {
      return next;
    }
    tau = next;
  }
  return tau;
}

double loglik_unconditional(const ObservedCounts& counts, const FrameGeometry& geom, double tau,
                            const RaschParams& params, const QuadratureRule& rule) {
  const PortionData d = compile(counts, geom, params.portion);
  if (params.alpha.size() != d.n) {
    throw std::invalid_argument("loglik_unconditional: alpha has the wrong length");
  }
  if (!(tau >= d.observed)) {
    throw std::invalid_argument("loglik_unconditional: tau = " + std::to_string(tau) +
                                " is below the observed count " + std::to_string(d.observed));
  }
  if (d.observed == 0.0 && tau == 0.0) {
    return 0.0;
  }
  const Evaluation ev = evaluate(d, rule, params.alpha, params.sigma, false);
  return unconditional_value(d, tau, ev);
}

double loglik_conditional(const ObservedCounts& counts, const FrameGeometry& geom,
                          const RaschParams& params, const QuadratureRule& rule) {
  const PortionData d = compile(counts, geom, params.portion);
  if (params.alpha.size() != d.n) {
    throw std::invalid_argument("loglik_conditional: alpha has the wrong length");
  }
  const Evaluation ev = evaluate(d, rule, params.alpha, params.sigma, false);
  return conditional_value(d, ev);
}

double tau_update(const ObservedCounts& counts, const FrameGeometry& geom, const RaschParams& params,
                  const QuadratureRule& rule, double denominator_floor) {
  const PortionData d = compile(counts, geom, params.portion);
  const NodeTable table(rule, params.alpha, params.sigma);
  const double log_pi0 = table.log_cell({}, -1);
  const double log_rate = d.log_kappa + log_pi0;
  const double den = log_rate == kNegInf ? 1.0 : -std::expm1(log_rate);
  if (den <= denominator_floor) {
    RaschFit partial;
    partial.portion = params.portion;
    partial.alpha_hat = params.alpha;
    partial.sigma_hat = params.sigma;
    partial.observed = static_cast<long>(d.observed);
    partial.pi0 = std::exp(log_pi0);
    throw_diverged(partial, "zero-pattern probability is too close to one");
  }
  return d.observed / den;
}

RaschFit fit_unconditional(const ObservedCounts& counts, const FrameGeometry& geom, Portion portion,
                           const QuadratureRule& rule, const FitOptions& opts) {
  const PortionData d = compile(counts, geom, portion);
  check_identifiable(d, FitMethod::Unconditional);
  const Coordinates coord{d.n, d.saturated};
  Eigen::VectorXd th = coord.pack(initial_alpha(d), opts.sigma_start);

  auto tau_at = [&](const Evaluation& ev) {
    return profile_tau(d.observed, d.log_kappa + ev.log_pi0, opts.tau_cap);
  };
  // -loglik at fixed tau (tau < 0 means profile it out).
  auto objective_for = [&](double fixed_tau) {
    return Objective([&, fixed_tau](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
      const Evaluation ev = evaluate(d, rule, x.head(d.n), coord.sigma(x), grad != nullptr);
      const double tau = fixed_tau < 0.0 ? tau_at(ev) : fixed_tau;
      if (grad != nullptr) {
        coord.copy_grad(-(ev.grad_sum + (tau - d.observed) * ev.grad_pi0), *grad);
      }
      return -unconditional_value(d, tau, ev);
    });
  };

  RaschFit fit;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> trace;
  if (opts.scheme == FitScheme::Profile) {
    const OptimResult res = run_optimizer(objective_for(-1.0), th, opts);
    th = res.x;
    iterations = res.iterations;
    evaluations = res.evaluations;
    converged = res.converged;
  } else {
    double tau = tau_at(evaluate(d, rule, th.head(d.n), coord.sigma(th), false));
    double previous = std::numeric_limits<double>::quiet_NaN();
    for (int outer = 0; outer < opts.max_outer; ++outer) {
      const OptimResult res = run_optimizer(objective_for(tau), th, opts);
      th = res.x;
      iterations += res.iterations;
      evaluations += res.evaluations;
      const Evaluation ev = evaluate(d, rule, th.head(d.n), coord.sigma(th), false);
      tau = tau_at(ev);
      const double value = unconditional_value(d, tau, ev);
      trace.push_back(value);
      if (std::isfinite(previous) && std::abs(value - previous) <= opts.rel_tol * std::max(1.0, std::abs(value))) {
        converged = res.converged;
        break;
      }
      previous = value;
    }
  }

  fit = make_fit(d, FitMethod::Unconditional, coord, th);
  const Evaluation ev = evaluate(d, rule, th.head(d.n), coord.sigma(th), false);
  fit.tau_hat = tau_at(ev);
  fit.loglik = unconditional_value(d, fit.tau_hat, ev);
  fit.pi0 = std::exp(ev.log_pi0);
  fit.iterations = iterations;
  fit.evaluations = evaluations;
  fit.converged = converged;
  fit.objective_trace = std::move(trace);
  if (fit.tau_hat >= opts.tau_cap) {
    throw_diverged(fit, "tau reached the cap " + std::to_string(opts.tau_cap));
  }
  if (-std::expm1(d.log_kappa + ev.log_pi0) <= opts.denominator_floor) {
    throw_diverged(fit, "zero-pattern probability is too close to one");
  }
  return fit;
}

RaschFit fit_conditional(const ObservedCounts& counts, const FrameGeometry& geom, Portion portion,
                         const QuadratureRule& rule, const FitOptions& opts) {
  const PortionData d = compile(counts, geom, portion);
  check_identifiable(d, FitMethod::Conditional);
  const Coordinates coord{d.n, d.saturated};
  const Eigen::VectorXd start = coord.pack(initial_alpha(d), opts.sigma_start);

  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* grad) {
    const Evaluation ev = evaluate(d, rule, x.head(d.n), coord.sigma(x), grad != nullptr);
    if (grad != nullptr) {
      const double log_rate = d.log_kappa + ev.log_pi0;
      // d/dtheta of -nu log(1 - kappa pi_0) = nu * kappa pi_0 / (1 - kappa pi_0) * dlog pi_0
      const double odds = log_rate == kNegInf ? 0.0 : std::exp(log_rate) / -std::expm1(log_rate);
      coord.copy_grad(-(ev.grad_sum + d.observed * odds * ev.grad_pi0), *grad);
    }
    return -conditional_value(d, ev);
  };
  const OptimResult res = run_optimizer(f, start, opts);

  RaschFit fit = make_fit(d, FitMethod::Conditional, coord, res.x);
  const Evaluation ev = evaluate(d, rule, fit.alpha_hat, fit.sigma_hat, false);
  fit.loglik = conditional_value(d, ev);
  fit.pi0 = std::exp(ev.log_pi0);
  fit.iterations = res.iterations;
  fit.evaluations = res.evaluations;
  fit.converged = res.converged;
  const double log_rate = d.log_kappa + ev.log_pi0;
  const double den = log_rate == kNegInf ? 1.0 : -std::expm1(log_rate);
  if (den <= opts.denominator_floor) {
    throw_diverged(fit, "zero-pattern probability is too close to one");
  }
  fit.tau_hat = d.observed / den;
  if (fit.tau_hat >= opts.tau_cap) {
    throw_diverged(fit, "tau reached the cap " + std::to_string(opts.tau_cap));
  }
  return fit;
}

RaschFit fit(FitMethod method, const ObservedCounts& counts, const FrameGeometry& geom,
             Portion portion, const QuadratureRule& rule, const FitOptions& opts) {
  return method == FitMethod::Unconditional ? fit_unconditional(counts, geom, portion, rule, opts)
                                            : fit_conditional(counts, geom, portion, rule, opts);
}

}  // namespace lts
