#pragma once

#include "lts/likelihood.hpp"
#include "lts/sampling.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace lts {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

/// Posterior mean of the random effect given a link pattern, by quadrature.
/// `excluded` names the person's own venue for venue members (pattern length n-1).
double predict_beta(const RaschFit& fit, const LinkPattern& pattern, std::optional<int> excluded,
                    const QuadratureRule& rule);

/// The predictor depends on a pattern only through its number of ones (and the
/// excluded venue), so all values are tabulated once per fit.
class BetaPredictor {
 public:
  BetaPredictor(const RaschFit& fit, const QuadratureRule& rule);

  /// Length-n pattern with `ones` links.
  double named(int ones) const { return named_[static_cast<std::size_t>(ones)]; }
  /// Member of sampled venue `venue` with `ones` links to the other n-1 venues.
  double member(int venue, int ones) const { return member_(venue, ones); }
  /// The all-zero pattern, used for persons never observed.
  double zero() const { return named(0); }

 private:
  std::vector<double> named_;
  Eigen::MatrixXd member_;  // n x n
};

/// Estimated inclusion probability of every person in the sample (same order
/// as sample.persons), clamped to [1e-12, 1 - 1e-12]. Entries whose portion
/// has no fit are missing. `clamped` counts probabilities that were moved.
std::vector<double> inclusion_probabilities(const LtsSample& sample, const RaschFit* fit1,
                                            const RaschFit* fit2, const QuadratureRule& rule,
                                            int* clamped = nullptr);

/// Portion 1, portion 2 and combined values; missing entries are NaN.
struct Triple {
  double k1 = kMissing;
  double k2 = kMissing;
  double all = kMissing;
};

/// Horvitz-Thompson-like totals sum y / pi over each portion's observed persons.
/// A portion with no observed persons has total 0 even without a fit.
Triple ht_total(const LtsSample& sample, const RaschFit* fit1, const RaschFit* fit2,
                const FrameGeometry& geom, const QuadratureRule& rule, int* clamped = nullptr);
/// ht_total with y = 1.
Triple ht_size(const LtsSample& sample, const RaschFit* fit1, const RaschFit* fit2,
               const FrameGeometry& geom, const QuadratureRule& rule, int* clamped = nullptr);
/// HT totals divided by the likelihood-based sizes.
Triple ht_mean(const Triple& ht_totals, const Triple& mle_sizes);
/// HT totals divided by HT sizes.
Triple hk_mean(const Triple& ht_totals, const Triple& ht_sizes);
/// HK means times the likelihood-based sizes.
Triple hk_total(const Triple& hk_means, const Triple& mle_sizes);

enum class Family { Mle, Ht, Hk };
enum class Target { Tau1, Tau2, Tau, Y1, Y2, Y, Ybar1, Ybar2, Ybar };
enum class Quantity { Size, Total, Mean };

struct EstimatorId {
  Family family;
  Target target;
  friend bool operator==(const EstimatorId&, const EstimatorId&) = default;
};

inline constexpr std::array<EstimatorId, 18> kEstimators{{
    {Family::Mle, Target::Tau1},  {Family::Mle, Target::Tau2},  {Family::Mle, Target::Tau},
    {Family::Ht, Target::Tau1},   {Family::Ht, Target::Tau2},   {Family::Ht, Target::Tau},
    {Family::Ht, Target::Y1},     {Family::Ht, Target::Y2},     {Family::Ht, Target::Y},
    {Family::Ht, Target::Ybar1},  {Family::Ht, Target::Ybar2},  {Family::Ht, Target::Ybar},
    {Family::Hk, Target::Y1},     {Family::Hk, Target::Y2},     {Family::Hk, Target::Y},
    {Family::Hk, Target::Ybar1},  {Family::Hk, Target::Ybar2},  {Family::Hk, Target::Ybar},
}};

const char* to_string(Family f);
const char* to_string(Target t);
Quantity quantity_of(Target t);
/// 1, 2, or 0 for the combined population.
int portion_of(Target t);
std::size_t estimator_index(EstimatorId id);

enum class CiKind { LognormalSize, KornGraubardProportion, WaldNormal };
const char* to_string(CiKind k);

struct CiRecord {
  double lower = kMissing;
  double upper = kMissing;
  CiKind kind = CiKind::WaldNormal;
  double sd_used = kMissing;
  bool degenerate = false;
};

struct Estimate {
  double value = kMissing;
  double sd = kMissing;
  std::optional<CiRecord> ci;
};

enum class FitStatus { Ok, NonIdentifiable, Diverged, NotConverged };
const char* to_string(FitStatus s);
/// Inverse of to_string; throws std::invalid_argument.
FitStatus parse_fit_status(const std::string& text);

/// All eighteen estimates for one sample and one fitting method.
struct EstimateSet {
  FitMethod method = FitMethod::Unconditional;
  std::array<Estimate, kEstimators.size()> values{};
  std::string fit1_error;  // empty when the portion fitted
  std::string fit2_error;
  FitStatus fit1_status = FitStatus::Ok;
  FitStatus fit2_status = FitStatus::Ok;
  int clamped = 0;
  int boot_failures = 0;
  int boot_replicates = 0;
  bool variance_unreliable = false;

  Estimate& operator[](EstimatorId id) { return values[estimator_index(id)]; }
  const Estimate& operator[](EstimatorId id) const { return values[estimator_index(id)]; }
};

/// Fit both portions (errors recorded, not thrown) and compute every estimate.
struct PortionFits {
  std::optional<RaschFit> fit1;
  std::optional<RaschFit> fit2;
  std::string error1;
  std::string error2;
  FitStatus status1 = FitStatus::Ok;
  FitStatus status2 = FitStatus::Ok;
};

PortionFits fit_portions(const ObservedCounts& counts, FitMethod method, const QuadratureRule& rule,
                         const FitOptions& opts);

EstimateSet compute_estimates(const LtsSample& sample, const PortionFits& fits, FitMethod method,
                              const QuadratureRule& rule);

/// fit_portions followed by compute_estimates.
EstimateSet estimate_sample(const LtsSample& sample, FitMethod method, const QuadratureRule& rule,
                            const FitOptions& opts);

}  // namespace lts
