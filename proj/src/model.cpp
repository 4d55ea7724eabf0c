#include "lts/model.hpp"

#include "lts/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace lts {

FrameGeometry::FrameGeometry(int n, int N) : n_sampled(n), n_frame(N) {
  if (n < 1 || N < 1 || n > N) {
    throw std::invalid_argument("FrameGeometry: need 1 <= n <= N, got n = " + std::to_string(n) +
                                ", N = " + std::to_string(N));
  }
}

double link_prob(double alpha_i, double beta_j) { return sigmoid(alpha_i + beta_j); }

double log_miss_all(const Eigen::Ref<const Eigen::VectorXd>& alpha, double beta_j) {
  double acc = 0.0;
  for (int i = 0; i < alpha.size(); ++i) {
    acc -= softplus(alpha[i] + beta_j);
  }
  return acc;
}

double inclusion_prob_u1(const RaschParams& params, double beta_j, const FrameGeometry& geom) {
  if (params.portion != Portion::U1) {
    throw std::invalid_argument("inclusion_prob_u1: parameters belong to portion U2");
  }
  const double miss = geom.miss_fraction();
  if (miss == 0.0) {
    return 1.0;
  }
  return -std::expm1(std::log(miss) + log_miss_all(params.alpha, beta_j));
}

double inclusion_prob_u2(const RaschParams& params, double beta_j) {
  if (params.portion != Portion::U2) {
    throw std::invalid_argument("inclusion_prob_u2: parameters belong to portion U1");
  }
  return -std::expm1(log_miss_all(params.alpha, beta_j));
}

double clamp_probability(double p, bool* clamped) {
  const double c = std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
  if (clamped != nullptr) {
    *clamped = (c != p);
  }
  return c;
}

}  // namespace lts
