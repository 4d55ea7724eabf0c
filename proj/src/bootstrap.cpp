#include "lts/bootstrap.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace lts {

void BootConfig::validate() const {
  if (replicates < 2) {
    throw std::invalid_argument("BootConfig: replicates must be at least 2");
  }
  if (!(alpha_level > 0.0 && alpha_level < 1.0)) {
    throw std::invalid_argument("BootConfig: alpha_level must lie in (0, 1)");
  }
  if (!(huber_tuning > 0.0) || !std::isfinite(huber_tuning)) {
    throw std::invalid_argument("BootConfig: huber_tuning must be positive");
  }
}

namespace {

constexpr double kSingularCondition = 1e10;

double condition_number(const Eigen::MatrixXd& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  return s(0) / s(s.size() - 1);
}

void sample_moments(const std::vector<double>& y, double* mean, double* var) {
  const double n = static_cast<double>(y.size());
  *mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : y) {
    ss += (v - *mean) * (v - *mean);
  }
  *var = y.size() > 1 ? ss / (n - 1.0) : 0.0;
}

}  // namespace

double ResponseModel::mean_at(double pi) const {
  const double eta = intercept + slope * pi;
  return binary ? sigmoid(eta) : eta;
}

double ResponseModel::draw(double pi, Rng& rng) const {
  if (binary) {
    return bernoulli(rng, mean_at(pi)) ? 1.0 : 0.0;
  }
  std::normal_distribution<double> noise(mean_at(pi), noise_sd);
  return noise_sd > 0.0 ? noise(rng) : mean_at(pi);
}

ResponseModel fit_response_model(const std::vector<double>& pi, const std::vector<double>& y,
                                 bool binary) {
  if (pi.size() != y.size() || y.empty()) {
    throw std::invalid_argument("fit_response_model: need matching, non-empty pi and y");
  }
  const auto n = static_cast<Eigen::Index>(y.size());
  ResponseModel out;
  out.binary = binary;
  double mean = 0.0;
  double var = 0.0;
  sample_moments(y, &mean, &var);

  auto fallback = [&] {
    out.fallback = true;
    out.slope = 0.0;
    if (binary) {
      const double p = std::clamp(mean, 0.0, 1.0);
      // intercept carries the logit; keep p = 0 and 1 exact
      out.intercept = p <= 0.0 ? -std::numeric_limits<double>::infinity()
                      : p >= 1.0 ? std::numeric_limits<double>::infinity()
                                 : std::log(p / (1.0 - p));
    } else {
      out.intercept = mean;
      out.noise_sd = std::sqrt(var);
    }
    return out;
  };

  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd Y(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    X(j, 0) = 1.0;
    X(j, 1) = pi[static_cast<std::size_t>(j)];
    Y(j) = y[static_cast<std::size_t>(j)];
  }
  if (n < 3 || condition_number(X) > kSingularCondition) {
    return fallback();
  }

  if (!binary) {
    const Eigen::Vector2d b = X.colPivHouseholderQr().solve(Y);
    const double rss = (Y - X * b).squaredNorm();
    out.intercept = b(0);
    out.slope = b(1);
    out.noise_sd = std::sqrt(rss / static_cast<double>(n - 2));
    return out;
  }

  if (mean <= 0.0 || mean >= 1.0) {
    return fallback();
  }
  Eigen::Vector2d b(std::log(mean / (1.0 - mean)), 0.0);
  for (int it = 0; it < 50; ++it) {
    const Eigen::VectorXd eta = X * b;
    Eigen::VectorXd p(n);
    Eigen::VectorXd w(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      p(j) = sigmoid(eta(j));
      w(j) = std::max(p(j) * (1.0 - p(j)), 1e-12);
    }
    const Eigen::Matrix2d H = X.transpose() * w.asDiagonal() * X;
    const Eigen::Vector2d g = X.transpose() * (Y - p);
    const Eigen::Vector2d step = H.ldlt().solve(g);
    if (!step.allFinite()) {
      return fallback();
    }
    b += step;
    if (step.cwiseAbs().maxCoeff() < 1e-10 * (1.0 + b.cwiseAbs().maxCoeff())) {
      break;
    }
  }
  if (!b.allFinite()) {
    return fallback();
  }
  out.intercept = b(0);
  out.slope = b(1);
  return out;
}

BootWorld build_boot_world(const LtsSample& sample, const PortionFits& fits, const QuadratureRule& rule,
                           const BootConfig& config, Rng& rng) {
  if (!fits.fit1) {
    throw DegenerateWorld("bootstrap world needs a portion-1 fit");
  }
  const RaschFit& f1 = *fits.fit1;
  const int n = sample.n();
  const int N = sample.n_frame;
  const double tau1_floor = std::floor(f1.tau_hat);
  const int max_m = *std::max_element(sample.venue_sizes.begin(), sample.venue_sizes.end());
  if (f1.tau_hat < max_m) {
    throw DegenerateWorld("tau1 estimate " + std::to_string(f1.tau_hat) +
                          " is below the largest venue size " + std::to_string(max_m));
  }

  BootWorld w;
  // (i) + (ii): sizes and venue effects travel together
  std::vector<int> source;
  const int a = N / n;
  const int b = N - a * n;
  for (int r = 0; r < a; ++r) {
    for (int i = 0; i < n; ++i) {
      source.push_back(i);
    }
  }
  for (int i : srswor(n, b, rng)) {
    source.push_back(i);
  }
  long total = 0;
  for (int i : source) {
    total += sample.venue_sizes[static_cast<std::size_t>(i)];
  }
  while (static_cast<double>(total) > tau1_floor) {
    total -= sample.venue_sizes[static_cast<std::size_t>(source.back())];
    source.pop_back();
  }
  const auto nb = static_cast<Eigen::Index>(source.size());
  w.alpha1.resize(nb);
  if (fits.fit2) {
    w.alpha2.resize(nb);
  }
  for (Eigen::Index t = 0; t < nb; ++t) {
    const int i = source[static_cast<std::size_t>(t)];
    w.m_boot.push_back(sample.venue_sizes[static_cast<std::size_t>(i)]);
    w.alpha1(t) = f1.alpha_hat(i);
    if (fits.fit2) {
      w.alpha2(t) = fits.fit2->alpha_hat(i);
    }
  }

  // (iii) + (iv)
  w.binary = response_is_binary(sample, config.regression_mode);
  const FrameGeometry geom = sample.geometry();
  const BetaPredictor p1(f1, rule);
  std::optional<BetaPredictor> p2;
  if (fits.fit2) {
    p2.emplace(*fits.fit2, rule);
  }
  const RaschFit* f2 = fits.fit2 ? &*fits.fit2 : nullptr;
  const auto pi = inclusion_probabilities(sample, &f1, f2, rule);

  std::vector<double> beta1, y1, pi1, beta2, y2, pi2;
  for (std::size_t j = 0; j < sample.persons.size(); ++j) {
    const auto& p = sample.persons[j];
    const int s = p.pattern.count_ones();
    if (p.stratum == Stratum::OutsideFrame) {
      if (p2) {
        beta2.push_back(p2->named(s));
        y2.push_back(p.y);
        pi2.push_back(pi[j]);
      }
    } else {
      beta1.push_back(p.stratum == Stratum::InVenue ? p1.member(p.venue, s) : p1.named(s));
      y1.push_back(p.y);
      pi1.push_back(pi[j]);
    }
  }

  auto fill = [&](const std::vector<double>& beta_obs, const std::vector<double>& y_obs,
                  const std::vector<double>& pi_obs, double beta0, double pi0, double tau_floor,
                  Eigen::VectorXd& beta, Eigen::VectorXd& y, ResponseModel& model) {
    const auto len = static_cast<Eigen::Index>(std::max(tau_floor, static_cast<double>(beta_obs.size())));
    beta = Eigen::VectorXd::Constant(len, beta0);
    y.resize(len);
    for (std::size_t j = 0; j < beta_obs.size(); ++j) {
      beta(static_cast<Eigen::Index>(j)) = beta_obs[j];
      y(static_cast<Eigen::Index>(j)) = y_obs[j];
    }
    if (len == static_cast<Eigen::Index>(beta_obs.size())) {
      return;
    }
    if (y_obs.empty()) {
      // nothing to regress on; unobserved y set to zero
      y.tail(len - static_cast<Eigen::Index>(beta_obs.size())).setZero();
      return;
    }
    model = fit_response_model(pi_obs, y_obs, w.binary);
    for (auto j = static_cast<Eigen::Index>(beta_obs.size()); j < len; ++j) {
      y(j) = model.draw(pi0, rng);
    }
  };

  w.observed1 = static_cast<long>(beta1.size());
  w.beta1_zero = p1.zero();
  const double pi1_zero = clamp_probability(inclusion_prob_u1(f1.params(), w.beta1_zero, geom));
  fill(beta1, y1, pi1, w.beta1_zero, pi1_zero, tau1_floor, w.beta1, w.y1, w.response1);

  if (p2) {
    w.observed2 = static_cast<long>(beta2.size());
    w.beta2_zero = p2->zero();
    const double pi2_zero =
        clamp_probability(-std::expm1(log_miss_all(fits.fit2->alpha_hat, w.beta2_zero)));
    fill(beta2, y2, pi2, w.beta2_zero, pi2_zero, std::floor(fits.fit2->tau_hat), w.beta2, w.y2,
         w.response2);
  }
  return w;
}

LtsSample draw_boot_sample(const BootWorld& world, int n, Rng& rng) {
  const int nb = world.n_frame();
  if (n < 1 || n > nb) {
    throw std::invalid_argument("draw_boot_sample: need 1 <= n <= N_boot");
  }
  LtsSample s;
  s.n_frame = nb;
  s.selected_venues = srswor(nb, n, rng);
  std::vector<long> off(static_cast<std::size_t>(nb) + 1, 0);
  for (int v = 0; v < nb; ++v) {
    off[static_cast<std::size_t>(v) + 1] = off[static_cast<std::size_t>(v)] + world.m_boot[static_cast<std::size_t>(v)];
  }
  std::vector<int> owner(static_cast<std::size_t>(world.beta1.size()), -1);
  for (int i = 0; i < n; ++i) {
    const int v = s.selected_venues[static_cast<std::size_t>(i)];
    s.venue_sizes.push_back(world.m_boot[static_cast<std::size_t>(v)]);
    for (long j = off[static_cast<std::size_t>(v)]; j < off[static_cast<std::size_t>(v) + 1]; ++j) {
      owner[static_cast<std::size_t>(j)] = i;
    }
  }

  std::vector<std::uint8_t> bits;
  auto links = [&](const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, long j, int skip) {
    bits.clear();
    bool any = false;
    for (int i = 0; i < n; ++i) {
      if (i == skip) {
        continue;
      }
      const double a = alpha(s.selected_venues[static_cast<std::size_t>(i)]);
      const bool l = bernoulli(rng, sigmoid(a + beta(static_cast<Eigen::Index>(j))));
      any = any || l;
      bits.push_back(l);
    }
    return any;
  };

  for (int i = 0; i < n; ++i) {
    const int v = s.selected_venues[static_cast<std::size_t>(i)];
    for (long j = off[static_cast<std::size_t>(v)]; j < off[static_cast<std::size_t>(v) + 1]; ++j) {
      links(world.alpha1, world.beta1, j, i);
      s.persons.push_back({Stratum::InVenue, i, LinkPattern(bits), world.y1(j), static_cast<int>(j)});
    }
  }
  for (long j = 0; j < world.beta1.size(); ++j) {
    if (owner[static_cast<std::size_t>(j)] >= 0) {
      continue;
    }
    if (links(world.alpha1, world.beta1, j, -1)) {
      s.persons.push_back({Stratum::BeyondFrameSample, -1, LinkPattern(bits), world.y1(j), static_cast<int>(j)});
    }
  }
  if (world.has_portion2()) {
    for (long j = 0; j < world.beta2.size(); ++j) {
      if (links(world.alpha2, world.beta2, j, -1)) {
        s.persons.push_back({Stratum::OutsideFrame, -1, LinkPattern(bits), world.y2(j), static_cast<int>(j)});
      }
    }
  }
  return s;
}

EstimateSet boot_replicate(const BootWorld& world, int n, FitMethod method, const QuadratureRule& rule,
                           const FitOptions& opts, Rng& rng) {
  return estimate_sample(draw_boot_sample(world, n, rng), method, rule, opts);
}

namespace {

double huber_chi(double k) {
  const boost::math::normal z;
  const double Phi = boost::math::cdf(z, k);
  const double phi = boost::math::pdf(z, k);
  return (2.0 * Phi - 1.0) - 2.0 * k * phi + 2.0 * k * k * (1.0 - Phi);
}

double median_of(std::vector<double> v) {
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h), v.end());
  const double upper = v[h];
  if (v.size() % 2 == 1) {
    return upper;
  }
  return 0.5 * (upper + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(h)));
}

}  // namespace

HuberResult huber_scale(const std::vector<double>& values, double tuning) {
  std::vector<double> v;
  for (double x : values) {
    if (std::isfinite(x)) {
      v.push_back(x);
    }
  }
  if (v.size() < 2) {
    throw std::invalid_argument("huber_scale: need at least two finite values");
  }
  if (!(tuning > 0.0)) {
    throw std::invalid_argument("huber_scale: tuning must be positive");
  }
  HuberResult r;
  r.used = static_cast<int>(v.size());
  const double B = static_cast<double>(v.size());
  double mu = median_of(v);
  std::vector<double> dev(v.size());
  for (std::size_t j = 0; j < v.size(); ++j) {
    dev[j] = std::abs(v[j] - mu);
  }
  double s = median_of(dev) / 0.6744897501960817;
  if (!(s > 0.0)) {
    double mean = 0.0;
    double var = 0.0;
    sample_moments(v, &mean, &var);
    s = std::sqrt(var);
  }
  if (!(s > 0.0)) {
    r.location = mu;
    r.zero_spread = true;
    return r;
  }
  const double chi = huber_chi(tuning);
  for (int it = 0; it < 1000; ++it) {
    double sum_psi = 0.0;
    for (double x : v) {
      sum_psi += std::clamp((x - mu) / s, -tuning, tuning);
    }
    const double mu_new = mu + s * sum_psi / B;
    double sum_psi2 = 0.0;
    for (double x : v) {
      const double p = std::clamp((x - mu_new) / s, -tuning, tuning);
      sum_psi2 += p * p;
    }
    const double s_new = s * std::sqrt(sum_psi2 / ((B - 1.0) * chi));
    const bool done = std::abs(mu_new - mu) <= 1e-13 * s && std::abs(s_new - s) <= 1e-13 * s;
    mu = mu_new;
    s = s_new;
    if (done) {
      break;
    }
  }
  r.location = mu;
  r.scale = s;
  return r;
}

double normal_upper(double alpha_level) {
  return boost::math::quantile(boost::math::complement(boost::math::normal(), alpha_level / 2.0));
}

CiRecord ci_lognormal_size(double tau_hat, double nu, double var_hat, double alpha_level) {
  CiRecord ci;
  ci.kind = CiKind::LognormalSize;
  ci.sd_used = std::sqrt(std::max(var_hat, 0.0));
  if (!(tau_hat > nu)) {
    ci.lower = ci.upper = nu;
    ci.degenerate = true;
    return ci;
  }
  const double d = tau_hat - nu;
  const double c = std::exp(normal_upper(alpha_level) * std::sqrt(std::log1p(std::max(var_hat, 0.0) / (d * d))));
  ci.lower = nu + d / c;
  ci.upper = nu + d * c;
  ci.degenerate = !(var_hat > 0.0);
  return ci;
}

CiRecord ci_korn_graubard(double p_hat, double var_hat, double alpha_level) {
  CiRecord ci;
  ci.kind = CiKind::KornGraubardProportion;
  ci.sd_used = std::sqrt(std::max(var_hat, 0.0));
  if (!(var_hat > 0.0)) {
    ci.lower = ci.upper = std::clamp(p_hat, 0.0, 1.0);
    ci.degenerate = true;
    return ci;
  }
  const double n_eff = p_hat * (1.0 - p_hat) / var_hat;
  if (!(n_eff > 1.0)) {
    ci.lower = 0.0;
    ci.upper = 1.0;
    ci.degenerate = true;
    return ci;
  }
  const double y_eff = n_eff * p_hat;
  using boost::math::fisher_f;
  const double nu1 = 2.0 * y_eff;
  const double nu2 = 2.0 * (n_eff - y_eff + 1.0);
  const double nu3 = 2.0 * (y_eff + 1.0);
  const double nu4 = 2.0 * (n_eff - y_eff);
  const double f_lo = boost::math::quantile(fisher_f(nu1, nu2), alpha_level / 2.0);
  const double f_hi = boost::math::quantile(fisher_f(nu3, nu4), 1.0 - alpha_level / 2.0);
  ci.lower = std::clamp(nu1 * f_lo / (nu2 + nu1 * f_lo), 0.0, 1.0);
  ci.upper = std::clamp(nu3 * f_hi / (nu4 + nu3 * f_hi), 0.0, 1.0);
  return ci;
}

CiRecord ci_wald(double theta_hat, double var_hat, double alpha_level) {
  CiRecord ci;
  ci.kind = CiKind::WaldNormal;
  ci.sd_used = std::sqrt(std::max(var_hat, 0.0));
  const double h = normal_upper(alpha_level) * ci.sd_used;
  ci.lower = theta_hat - h;
  ci.upper = theta_hat + h;
  ci.degenerate = !(var_hat > 0.0);
  return ci;
}

bool response_is_binary(const LtsSample& sample, RegressionMode mode) {
  switch (mode) {
    case RegressionMode::ForceLinear:
      return false;
    case RegressionMode::ForceLogistic:
      return true;
    case RegressionMode::Auto:
      break;
  }
  return std::all_of(sample.persons.begin(), sample.persons.end(),
                     [](const PersonRecord& p) { return p.y == 0.0 || p.y == 1.0; });
}

EstimateSet bootstrap_estimates(const LtsSample& sample, const PortionFits& fits,
                                const EstimateSet& point, const QuadratureRule& rule,
                                const BootConfig& config, const FitOptions& opts, std::uint64_t seed) {
  config.validate();
  EstimateSet out = point;
  out.boot_replicates = config.replicates;
  out.boot_failures = 0;

  std::optional<BootWorld> world;
  try {
    Rng wrng = substream(seed, {0});
    world = build_boot_world(sample, fits, rule, config, wrng);
  } catch (const DegenerateWorld&) {
    out.boot_failures = config.replicates;
    out.variance_unreliable = true;
    return out;
  }

  std::vector<std::array<double, kEstimators.size()>> reps;
  for (int b = 0; b < config.replicates; ++b) {
    Rng rng = substream(seed, {static_cast<std::uint64_t>(b) + 1});
    const EstimateSet e = boot_replicate(*world, sample.n(), point.method, rule, opts, rng);
    const bool failed = (fits.fit1 && !e.fit1_error.empty()) || (fits.fit2 && !e.fit2_error.empty());
    out.boot_failures += failed ? 1 : 0;
    std::array<double, kEstimators.size()> row{};
    for (std::size_t t = 0; t < kEstimators.size(); ++t) {
      row[t] = e.values[t].value;
    }
    reps.push_back(row);
  }
  out.variance_unreliable = 2 * out.boot_failures > config.replicates;

  const bool binary = response_is_binary(sample, config.regression_mode);
  const double nu1 = static_cast<double>(sample.m_total() + sample.r1());
  const double nu2 = static_cast<double>(sample.r2());
  for (std::size_t t = 0; t < kEstimators.size(); ++t) {
    Estimate& est = out.values[t];
    std::vector<double> vals;
    for (const auto& row : reps) {
      if (std::isfinite(row[t])) {
        vals.push_back(row[t]);
      }
    }
    if (vals.size() < 2) {
      continue;
    }
    est.sd = huber_scale(vals, config.huber_tuning).scale;
    if (is_missing(est.value)) {
      continue;
    }
    const double var = est.sd * est.sd;
    const Target target = kEstimators[t].target;
    switch (quantity_of(target)) {
      case Quantity::Size: {
        const int k = portion_of(target);
        const double nu = k == 1 ? nu1 : (k == 2 ? nu2 : nu1 + nu2);
        est.ci = ci_lognormal_size(est.value, nu, var, config.alpha_level);
        break;
      }
      case Quantity::Mean:
        est.ci = binary ? ci_korn_graubard(est.value, var, config.alpha_level)
                        : ci_wald(est.value, var, config.alpha_level);
        break;
      case Quantity::Total:
        est.ci = ci_wald(est.value, var, config.alpha_level);
        break;
    }
  }
  return out;
}

}  // namespace lts
