#include "lts/estimators.hpp"

#include <stdexcept>

namespace lts {

namespace {

// log of the unnormalized posterior node weight for a pattern with `ones` links;
// sum_{i in x} alpha_i is common to all nodes and dropped.
double predict_from(const RaschFit& fit, const QuadratureRule& rule, int ones, int excluded) {
  const double sigma = fit.sigma_hat;
  if (sigma == 0.0) {
    return 0.0;
  }
  const int q = rule.size();
  Eigen::VectorXd lw(q);
  for (int t = 0; t < q; ++t) {
    const double z = rule.nodes[t];
    double v = sigma * z * ones + std::log(rule.weights[t]);
    for (int i = 0; i < fit.alpha_hat.size(); ++i) {
      if (i != excluded) {
        v -= softplus(fit.alpha_hat[i] + sigma * z);
      }
    }
    lw[t] = v;
  }
  const double total = log_sum_exp(lw);
  return sigma * rule.nodes.dot((lw.array() - total).exp().matrix());
}

double divide(double num, double den) {
  if (is_missing(num) || is_missing(den) || den == 0.0) {
    return kMissing;
  }
  return num / den;
}

}  // namespace

double predict_beta(const RaschFit& fit, const LinkPattern& pattern, std::optional<int> excluded,
                    const QuadratureRule& rule) {
  const auto n = static_cast<std::size_t>(fit.alpha_hat.size());
  if (excluded) {
    if (*excluded < 0 || static_cast<std::size_t>(*excluded) >= n) {
      throw std::invalid_argument("predict_beta: excluded venue out of range");
    }
    if (pattern.size() + 1 != n) {
      throw std::invalid_argument("predict_beta: pattern must have length n - 1");
    }
  } else if (pattern.size() != n) {
    throw std::invalid_argument("predict_beta: pattern must have length n");
  }
  return predict_from(fit, rule, pattern.count_ones(), excluded.value_or(-1));
}

BetaPredictor::BetaPredictor(const RaschFit& fit, const QuadratureRule& rule) {
  const int n = static_cast<int>(fit.alpha_hat.size());
  named_.resize(static_cast<std::size_t>(n + 1));
  for (int s = 0; s <= n; ++s) {
    named_[static_cast<std::size_t>(s)] = predict_from(fit, rule, s, -1);
  }
  member_ = Eigen::MatrixXd::Constant(n, n, kMissing);
  for (int v = 0; v < n; ++v) {
    for (int s = 0; s < n; ++s) {
      member_(v, s) = predict_from(fit, rule, s, v);
    }
  }
}

std::vector<double> inclusion_probabilities(const LtsSample& sample, const RaschFit* fit1,
                                            const RaschFit* fit2, const QuadratureRule& rule,
                                            int* clamped) {
  const FrameGeometry geom = sample.geometry();
  std::optional<BetaPredictor> b1;
  std::optional<BetaPredictor> b2;
  if (fit1 != nullptr) {
    b1.emplace(*fit1, rule);
  }
  if (fit2 != nullptr) {
    b2.emplace(*fit2, rule);
  }
  std::vector<double> out;
  out.reserve(sample.persons.size());
  int moved = 0;
  for (const auto& p : sample.persons) {
    double pi = kMissing;
    if (p.stratum == Stratum::OutsideFrame) {
      if (fit2 != nullptr) {
        pi = -std::expm1(log_miss_all(fit2->alpha_hat, b2->named(p.pattern.count_ones())));
      }
    } else if (fit1 != nullptr) {
      const double beta = p.stratum == Stratum::InVenue ? b1->member(p.venue, p.pattern.count_ones())
                                                        : b1->named(p.pattern.count_ones());
      pi = inclusion_prob_u1(fit1->params(), beta, geom);
    }
    if (!is_missing(pi)) {
      bool c = false;
      pi = clamp_probability(pi, &c);
      moved += c ? 1 : 0;
    }
    out.push_back(pi);
  }
  if (clamped != nullptr) {
    *clamped += moved;
  }
  return out;
}

namespace {

Triple weighted_totals(const LtsSample& sample, const RaschFit* fit1, const RaschFit* fit2,
                       const QuadratureRule& rule, bool unit_y, int* clamped) {
  const auto pi = inclusion_probabilities(sample, fit1, fit2, rule, clamped);
  Triple t{0.0, 0.0, 0.0};
  for (std::size_t j = 0; j < pi.size(); ++j) {
    const auto& p = sample.persons[j];
    const double y = unit_y ? 1.0 : p.y;
    (p.stratum == Stratum::OutsideFrame ? t.k2 : t.k1) += y / pi[j];  // NaN if no fit
  }
  t.all = t.k1 + t.k2;  // NaN propagates
  return t;
}

}  // namespace

Triple ht_total(const LtsSample& sample, const RaschFit* fit1, const RaschFit* fit2,
                const FrameGeometry& geom, const QuadratureRule& rule, int* clamped) {
  if (geom.n_sampled != sample.n() || geom.n_frame != sample.n_frame) {
    throw std::invalid_argument("ht_total: geometry does not match the sample");
  }
  return weighted_totals(sample, fit1, fit2, rule, false, clamped);
}

Triple ht_size(const LtsSample& sample, const RaschFit* fit1, const RaschFit* fit2,
               const FrameGeometry& geom, const QuadratureRule& rule, int* clamped) {
  if (geom.n_sampled != sample.n() || geom.n_frame != sample.n_frame) {
    throw std::invalid_argument("ht_size: geometry does not match the sample");
  }
  return weighted_totals(sample, fit1, fit2, rule, true, clamped);
}

Triple ht_mean(const Triple& ht_totals, const Triple& mle_sizes) {
  return {divide(ht_totals.k1, mle_sizes.k1), divide(ht_totals.k2, mle_sizes.k2),
          divide(ht_totals.all, mle_sizes.all)};
}

Triple hk_mean(const Triple& ht_totals, const Triple& ht_sizes) {
  return {divide(ht_totals.k1, ht_sizes.k1), divide(ht_totals.k2, ht_sizes.k2),
          divide(ht_totals.all, ht_sizes.all)};
}

Triple hk_total(const Triple& hk_means, const Triple& mle_sizes) {
  return {hk_means.k1 * mle_sizes.k1, hk_means.k2 * mle_sizes.k2, hk_means.all * mle_sizes.all};
}

const char* to_string(Family f) {
  switch (f) {
    case Family::Mle:
      return "MLE";
    case Family::Ht:
      return "HT";
    case Family::Hk:
      return "HK";
  }
  return "?";
}

const char* to_string(Target t) {
  static constexpr const char* names[] = {"tau1", "tau2", "tau", "Y1", "Y2", "Y", "Ybar1", "Ybar2", "Ybar"};
  return names[static_cast<int>(t)];
}

Quantity quantity_of(Target t) {
  const int i = static_cast<int>(t);
  return i < 3 ? Quantity::Size : (i < 6 ? Quantity::Total : Quantity::Mean);
}

int portion_of(Target t) {
  static constexpr int parts[] = {1, 2, 0};
  return parts[static_cast<int>(t) % 3];
}

std::size_t estimator_index(EstimatorId id) {
  for (std::size_t i = 0; i < kEstimators.size(); ++i) {
    if (kEstimators[i] == id) {
      return i;
    }
  }
  throw std::invalid_argument(std::string("no estimator ") + to_string(id.family) + " of " +
                              to_string(id.target));
}

const char* to_string(CiKind k) {
  switch (k) {
    case CiKind::LognormalSize:
      return "lognormal";
    case CiKind::KornGraubardProportion:
      return "korn-graubard";
    case CiKind::WaldNormal:
      return "wald";
  }
  return "?";
}

const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Ok:
      return "ok";
    case FitStatus::NonIdentifiable:
      return "nonidentifiable";
    case FitStatus::Diverged:
      return "diverged";
    case FitStatus::NotConverged:
      return "notconverged";
  }
  return "?";
}

FitStatus parse_fit_status(const std::string& text) {
  for (FitStatus s : {FitStatus::Ok, FitStatus::NonIdentifiable, FitStatus::Diverged, FitStatus::NotConverged}) {
    if (text == to_string(s)) {
      return s;
    }
  }
  throw std::invalid_argument("unknown fit status '" + text + "'");
}

PortionFits fit_portions(const ObservedCounts& counts, FitMethod method, const QuadratureRule& rule,
                         const FitOptions& opts) {
  PortionFits out;
  auto one = [&](Portion k, std::optional<RaschFit>& slot, std::string& error, FitStatus& status) {
    try {
      RaschFit f = fit(method, counts, counts.geometry(), k, rule, opts);
      if (!f.converged) {
        error = "optimizer did not converge";
        status = FitStatus::NotConverged;
        return;
      }
      slot = std::move(f);
    } catch (const NonIdentifiable& e) {
      error = std::string("non-identifiable: ") + e.what();
      status = FitStatus::NonIdentifiable;
    } catch (const Diverged& e) {
      error = e.what();
      status = FitStatus::Diverged;
    }
  };
  one(Portion::U1, out.fit1, out.error1, out.status1);
  one(Portion::U2, out.fit2, out.error2, out.status2);
  return out;
}

EstimateSet compute_estimates(const LtsSample& sample, const PortionFits& fits, FitMethod method,
                              const QuadratureRule& rule) {
  EstimateSet e;
  e.method = method;
  e.fit1_error = fits.error1;
  e.fit2_error = fits.error2;
  e.fit1_status = fits.status1;
  e.fit2_status = fits.status2;
  const RaschFit* f1 = fits.fit1 ? &*fits.fit1 : nullptr;
  const RaschFit* f2 = fits.fit2 ? &*fits.fit2 : nullptr;
  const FrameGeometry geom = sample.geometry();

  Triple mle{f1 ? f1->tau_hat : kMissing, f2 ? f2->tau_hat : kMissing, kMissing};
  mle.all = mle.k1 + mle.k2;
  const Triple totals = ht_total(sample, f1, f2, geom, rule, &e.clamped);
  const Triple sizes = ht_size(sample, f1, f2, geom, rule);
  const Triple means = ht_mean(totals, mle);
  const Triple hk_means = hk_mean(totals, sizes);
  const Triple hk_totals = hk_total(hk_means, mle);

  auto put = [&](Family f, Target t1, const Triple& v) {
    const int base = static_cast<int>(t1);
    e[{f, static_cast<Target>(base)}].value = v.k1;
    e[{f, static_cast<Target>(base + 1)}].value = v.k2;
    e[{f, static_cast<Target>(base + 2)}].value = v.all;
  };
  put(Family::Mle, Target::Tau1, mle);
  put(Family::Ht, Target::Tau1, sizes);
  put(Family::Ht, Target::Y1, totals);
  put(Family::Ht, Target::Ybar1, means);
  put(Family::Hk, Target::Y1, hk_totals);
  put(Family::Hk, Target::Ybar1, hk_means);
  return e;
}

EstimateSet estimate_sample(const LtsSample& sample, FitMethod method, const QuadratureRule& rule,
                            const FitOptions& opts) {
  const ObservedCounts counts = observed_counts(sample);
  return compute_estimates(sample, fit_portions(counts, method, rule, opts), method, rule);
}

}  // namespace lts
