#include "lts/quadrature.hpp"

#include <algorithm>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lts {

QuadratureRule make_rule(int q) {
  if (q < 2) {
    throw std::invalid_argument("make_rule: q must be at least 2, got " + std::to_string(q));
  }
  // Jacobi matrix of the probabilists' Hermite polynomials: zero diagonal,
  // off-diagonal sqrt(k). Its eigenvalues are the nodes for the N(0,1) weight
  // and the squared first eigenvector components are the normalized weights.
  // (Equivalent to the physicists' rule with z = sqrt(2) x, nu = w / sqrt(pi).)
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd sub(q - 1);
  for (int k = 1; k < q; ++k) {
    sub[k - 1] = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("make_rule: eigen-decomposition failed");
  }

  const Eigen::VectorXd& values = solver.eigenvalues();
  Eigen::VectorXd raw_w = solver.eigenvectors().row(0).transpose().array().square();

  QuadratureRule rule;
  rule.nodes.resize(q);
  rule.weights.resize(q);
  // Symmetrize: average each node with its mirror so z_t == -z_{q+1-t} exactly.
  for (int t = 0; t < q; ++t) {
    const int mirror = q - 1 - t;
    rule.nodes[t] = 0.5 * (values[t] - values[mirror]);
    rule.weights[t] = 0.5 * (raw_w[t] + raw_w[mirror]);
  }
  if (q % 2 == 1) {
    rule.nodes[q / 2] = 0.0;
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

LinkPattern::LinkPattern(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) {
    if (b > 1) {
      throw std::invalid_argument("LinkPattern: entries must be 0 or 1");
    }
    ones_ += b;
  }
}

LinkPattern LinkPattern::parse(std::string_view text) {
  std::vector<std::uint8_t> bits;
  bits.reserve(text.size());
  for (char c : text) {
    if (c != '0' && c != '1') {
      throw std::invalid_argument("LinkPattern: invalid character '" + std::string(1, c) + "'");
    }
    bits.push_back(static_cast<std::uint8_t>(c - '0'));
  }
  return LinkPattern(std::move(bits));
}

LinkPattern LinkPattern::zeros(std::size_t length) {
  return LinkPattern(std::vector<std::uint8_t>(length, 0));
}

std::vector<int> LinkPattern::ones() const {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(ones_));
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

std::string LinkPattern::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (auto b : bits_) {
    s.push_back(static_cast<char>('0' + b));
  }
  return s;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double hi = v.maxCoeff();
  if (!std::isfinite(hi)) {
    return hi;
  }
  return hi + std::log((v.array() - hi).exp().sum());
}

NodeTable::NodeTable(const QuadratureRule& rule, const Eigen::Ref<const Eigen::VectorXd>& alpha,
                     double sigma) {
  const int q = rule.size();
  const int n = static_cast<int>(alpha.size());
  eta_.resize(q, n);
  prob_.resize(q, n);
  sp_.resize(q, n);
  for (int i = 0; i < n; ++i) {
    for (int t = 0; t < q; ++t) {
      const double e = alpha[i] + sigma * rule.nodes[t];
      eta_(t, i) = e;
      prob_(t, i) = sigmoid(e);
      sp_(t, i) = softplus(e);
    }
  }
  sp_total_ = sp_.rowwise().sum();
  log_nu_ = rule.weights.array().log();
}

void NodeTable::log_conditional(const std::vector<int>& ones, int excluded,
                                Eigen::Ref<Eigen::VectorXd> out) const {
  out = -sp_total_;
  if (excluded >= 0) {
    out += sp_.col(excluded);
  }
  for (int i : ones) {
    out += eta_.col(i);
  }
}

double NodeTable::log_cell(const std::vector<int>& ones, int excluded,
                           Eigen::VectorXd* posterior) const {
  Eigen::VectorXd lf(nodes());
  log_conditional(ones, excluded, lf);
  lf += log_nu_;
  const double total = log_sum_exp(lf);
  if (posterior != nullptr) {
    *posterior = (lf.array() - total).exp();
  }
  return total;
}

namespace {

void check_alpha_sigma(const Eigen::Ref<const Eigen::VectorXd>& alpha, double sigma,
                       const char* who) {
  if (!alpha.allFinite()) {
    throw std::invalid_argument(std::string(who) + ": alpha must be finite");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument(std::string(who) + ": sigma must be finite and nonnegative");
  }
}

// Closed-form Bernoulli product used when sigma == 0.
double bernoulli_product(const Eigen::Ref<const Eigen::VectorXd>& alpha, int excluded,
                         const LinkPattern& x) {
  double log_p = 0.0;
  std::size_t k = 0;
  for (int i = 0; i < alpha.size(); ++i) {
    if (i == excluded) {
      continue;
    }
    log_p += (x[k] ? alpha[i] : 0.0) - softplus(alpha[i]);
    ++k;
  }
  return std::exp(log_p);
}

}  // namespace

double cell_prob(const Eigen::Ref<const Eigen::VectorXd>& alpha, double sigma,
                 const LinkPattern& x, const QuadratureRule& rule) {
  check_alpha_sigma(alpha, sigma, "cell_prob");
  if (x.size() != static_cast<std::size_t>(alpha.size())) {
    throw std::invalid_argument("cell_prob: pattern length " + std::to_string(x.size()) +
                                " does not match n = " + std::to_string(alpha.size()));
  }
  if (sigma == 0.0) {
    return bernoulli_product(alpha, -1, x);
  }
  NodeTable table(rule, alpha, sigma);
  return std::exp(table.log_cell(x.ones(), -1));
}

double cell_prob_excluding(const Eigen::Ref<const Eigen::VectorXd>& alpha, double sigma,
                           int excluded, const LinkPattern& x, const QuadratureRule& rule) {
  check_alpha_sigma(alpha, sigma, "cell_prob_excluding");
  const auto n = static_cast<int>(alpha.size());
  if (excluded < 0 || excluded >= n) {
    throw std::invalid_argument("cell_prob_excluding: venue index " + std::to_string(excluded) +
                                " out of range for n = " + std::to_string(n));
  }
  if (x.size() + 1 != static_cast<std::size_t>(n)) {
    throw std::invalid_argument("cell_prob_excluding: pattern must have length n - 1");
  }
  if (sigma == 0.0) {
    return bernoulli_product(alpha, excluded, x);
  }
  std::vector<int> ones;
  for (int k : x.ones()) {
    ones.push_back(k < excluded ? k : k + 1);
  }
  NodeTable table(rule, alpha, sigma);
  return std::exp(table.log_cell(ones, excluded));
}

}  // namespace lts
