#pragma once

#include <Eigen/Dense>

namespace lts {

enum class Portion { U1, U2 };

inline int portion_index(Portion k) { return k == Portion::U1 ? 1 : 2; }

/// Venue effects and random-effect SD of the Rasch link model for one portion.
struct RaschParams {
  Eigen::VectorXd alpha;
  double sigma = 0.0;
  Portion portion = Portion::U1;

  int venues() const { return static_cast<int>(alpha.size()); }
};

/// n sampled venues out of a frame of N.
struct FrameGeometry {
  int n_sampled = 1;
  int n_frame = 1;

  FrameGeometry() = default;
  FrameGeometry(int n, int N);

  double fraction() const { return static_cast<double>(n_sampled) / n_frame; }
  /// 1 - n/N, the chance that a given venue is left out of the sample.
  double miss_fraction() const { return 1.0 - fraction(); }
};

/// Probability that person with effect beta is linked to a venue with effect alpha.
double link_prob(double alpha_i, double beta_j);

/// 1 - (1 - n/N) prod_i (1 - p_ij): inclusion chance of a frame-covered person.
/// Throws std::invalid_argument unless params.portion == U1.
double inclusion_prob_u1(const RaschParams& params, double beta_j, const FrameGeometry& geom);

/// 1 - prod_i (1 - p_ij): inclusion chance of a person outside the frame.
/// Throws std::invalid_argument unless params.portion == U2.
double inclusion_prob_u2(const RaschParams& params, double beta_j);

/// log prod_i (1 - p_ij), the log-probability of escaping every sampled venue.
double log_miss_all(const Eigen::Ref<const Eigen::VectorXd>& alpha, double beta_j);

inline constexpr double kProbabilityFloor = 1e-12;

/// Clamps into [1e-12, 1 - 1e-12]; `clamped` is set when the value moved.
double clamp_probability(double p, bool* clamped = nullptr);

}  // namespace lts
