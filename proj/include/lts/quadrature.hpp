#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lts {

/// Gauss-Hermite rule re-weighted for integration against the N(0,1) density:
///   E[f(Z)] ~= sum_t weights[t] * f(nodes[t]).
/// Nodes are sorted ascending and exactly symmetric about zero; weights sum to one.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Builds the q-node rule by Golub-Welsch on the Hermite Jacobi matrix.
/// Throws std::invalid_argument for q < 2.
QuadratureRule make_rule(int q);

/// A 0/1 link vector across sampled venues (length n, or n-1 for a venue member
/// whose own venue is omitted).
class LinkPattern {
 public:
  LinkPattern() = default;
  explicit LinkPattern(std::vector<std::uint8_t> bits);

  /// Parses a string of '0'/'1' characters.
  static LinkPattern parse(std::string_view text);
  static LinkPattern zeros(std::size_t length);

  std::size_t size() const { return bits_.size(); }
  int count_ones() const { return ones_; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  /// Positions of the set bits, ascending.
  std::vector<int> ones() const;
  std::string to_string() const;

  friend bool operator==(const LinkPattern&, const LinkPattern&) = default;
  friend std::strong_ordering operator<=>(const LinkPattern& a, const LinkPattern& b) {
    return a.bits_ <=> b.bits_;
  }

 private:
  std::vector<std::uint8_t> bits_;
  int ones_ = 0;
};

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// exp(x) / (1 + exp(x)) without overflow.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Quadrature-approximated probability that a person with N(0, sigma^2) random
/// effect shows link pattern x across venues with effects alpha.
/// Throws std::invalid_argument on dimension mismatch or negative sigma.
double cell_prob(const Eigen::Ref<const Eigen::VectorXd>& alpha, double sigma,
                 const LinkPattern& x, const QuadratureRule& rule);

/// Same as cell_prob but the product skips venue `excluded` (0-based) and x has
/// length n-1, listing the remaining venues in order.
double cell_prob_excluding(const Eigen::Ref<const Eigen::VectorXd>& alpha, double sigma,
                           int excluded, const LinkPattern& x, const QuadratureRule& rule);

/// Per-node linear predictors alpha_i + sigma z_t together with their sigmoids and
/// softplus sums. Evaluating a pattern then costs q * (popcount + 1) operations,
/// which is what lets the likelihood work per observed person instead of per cell.
class NodeTable {
 public:
  NodeTable(const QuadratureRule& rule, const Eigen::Ref<const Eigen::VectorXd>& alpha,
            double sigma);

  int nodes() const { return static_cast<int>(eta_.rows()); }
  int venues() const { return static_cast<int>(eta_.cols()); }

  /// log f_t(x) = sum_{i in ones} eta_ti - sum_{i != excluded} softplus(eta_ti), per node.
  /// `ones` are venue indices in [0, n). excluded < 0 means none.
  void log_conditional(const std::vector<int>& ones, int excluded,
                       Eigen::Ref<Eigen::VectorXd> out) const;

  /// log of sum_t nu_t f_t(x), with the normalized posterior node weights
  /// nu_t f_t / sum written to `posterior` when non-null.
  double log_cell(const std::vector<int>& ones, int excluded,
                  Eigen::VectorXd* posterior = nullptr) const;

  const Eigen::MatrixXd& eta() const { return eta_; }
  const Eigen::MatrixXd& prob() const { return prob_; }
  const Eigen::VectorXd& softplus_total() const { return sp_total_; }
  const Eigen::VectorXd& log_weights() const { return log_nu_; }

 private:
  Eigen::MatrixXd eta_;   // q x n
  Eigen::MatrixXd prob_;  // q x n
  Eigen::MatrixXd sp_;    // q x n
  Eigen::VectorXd sp_total_;
  Eigen::VectorXd log_nu_;
};

/// log(sum exp(v)).
double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace lts
