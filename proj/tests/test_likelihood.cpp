#include "lts/likelihood.hpp"

#include "oracles.hpp"

#include <catch_amalgamated.hpp>

#include <map>
#include <random>

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

lts::PatternCount pc(const char* bits, long count) { return {lts::LinkPattern::parse(bits), count}; }

lts::RaschParams rasch(std::vector<double> alpha, double sigma, lts::Portion k) {
  return {Eigen::Map<Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size())), sigma, k};
}

std::string bits_string(unsigned mask, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) {
    s += ((mask >> i) & 1U) != 0 ? '1' : '0';
  }
  return s;
}

// U2 counts for n venues, from a map pattern -> count.
lts::ObservedCounts u2_counts(int n, int N, const std::map<std::string, long>& cells) {
  lts::ObservedCounts c;
  c.n = n;
  c.n_frame = N;
  c.in_venue.resize(static_cast<std::size_t>(n));
  for (const auto& [bits, count] : cells) {
    c.named2.push_back(pc(bits.c_str(), count));
    c.r2 += count;
  }
  return c;
}

// Draws a U2-style count table from the model itself.
lts::ObservedCounts simulate_u2(int n, int tau, const std::vector<double>& alpha, double sigma,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::map<std::string, long> cells;
  for (int j = 0; j < tau; ++j) {
    const double beta = normal(rng);
    std::string bits;
    bool any = false;
    for (int i = 0; i < n; ++i) {
      const bool l = unif(rng) < oracle::logistic(alpha[static_cast<std::size_t>(i)] + beta);
      bits += l ? '1' : '0';
      any = any || l;
    }
    if (any) {
      ++cells[bits];
    }
  }
  return u2_counts(n, n * 10, cells);
}

}  // namespace

TEST_CASE("empty portion contributes nothing") {
  const auto c = u2_counts(3, 10, {});
  const auto rule = lts::make_rule(15);
  CHECK(lts::loglik_unconditional(c, {3, 10}, 0.0, rasch({0.0, 1.0, -1.0}, 0.5, lts::Portion::U2), rule) == 0.0);
}

TEST_CASE("two-venue binomial arithmetic") {
  const auto c = u2_counts(2, 10, {{"10", 1}});
  const auto rule = lts::make_rule(15);
  const double ll = lts::loglik_unconditional(c, {2, 10}, 2.0, rasch({0.0, 0.0}, 0.0, lts::Portion::U2), rule);
  CHECK_THAT(ll, WithinAbs(std::log(0.125), 1e-14));
  CHECK_THROWS_AS(lts::loglik_unconditional(c, {2, 10}, 0.5, rasch({0.0, 0.0}, 0.0, lts::Portion::U2), rule),
                  std::invalid_argument);
}

TEST_CASE("outside-frame likelihood equals the full multinomial up to a constant") {
  const auto rule = lts::make_rule(15);
  const std::map<std::string, long> cells{{"100", 1}, {"011", 1}, {"111", 1}};
  const auto c = u2_counts(3, 10, cells);
  const double tau = 5.0;
  const double constant = 0.0;  // every observed cell has count 1
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ua(-2.0, 2.0);
  for (int rep = 0; rep < 10; ++rep) {
    const auto params = rasch({ua(rng), ua(rng), ua(rng)}, std::abs(ua(rng)), lts::Portion::U2);
    std::vector<double> counts;
    std::vector<double> probs;
    for (unsigned mask = 0; mask < 8; ++mask) {
      const auto bits = bits_string(mask, 3);
      const auto it = cells.find(bits);
      counts.push_back(mask == 0 ? tau - 3.0 : (it == cells.end() ? 0.0 : static_cast<double>(it->second)));
      probs.push_back(lts::cell_prob(params.alpha, params.sigma, lts::LinkPattern::parse(bits), rule));
    }
    const double full = oracle::log_multinomial(counts, probs);
    CHECK_THAT(lts::loglik_unconditional(c, {3, 10}, tau, params, rule), WithinAbs(full + constant, 1e-10));
  }
}

TEST_CASE("frame likelihood equals the product of its multinomials up to a constant") {
  const auto rule = lts::make_rule(15);
  const int n = 3;
  const int N = 7;
  lts::ObservedCounts c;
  c.n = n;
  c.n_frame = N;
  c.venue_sizes = {2, 1, 3};
  c.m = 6;
  c.named1 = {pc("010", 2), pc("110", 1)};
  c.r1 = 3;
  c.in_venue = {{pc("00", 1), pc("10", 1)}, {pc("01", 1)}, {pc("00", 2), pc("11", 1)}};
  const double tau = 12.0;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ua(-2.0, 2.0);
  double first_gap = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto params = rasch({ua(rng), ua(rng), ua(rng)}, std::abs(ua(rng)), lts::Portion::U1);
    // M_s multinomial
    std::vector<double> mc{2, 1, 3, tau - 6.0};
    std::vector<double> mp{1.0 / N, 1.0 / N, 1.0 / N, 1.0 - 3.0 / N};
    double full = oracle::log_multinomial(mc, mp);
    // patterns of U1 - S0 persons, size tau - m
    std::vector<double> rc(8, 0.0);
    std::vector<double> rp(8, 0.0);
    rc[0] = tau - 6.0 - 3.0;
    for (const auto& cell : c.named1) {
      unsigned mask = 0;
      for (int i : cell.pattern.ones()) {
        mask |= 1U << i;
      }
      rc[mask] = static_cast<double>(cell.count);
    }
    for (unsigned mask = 0; mask < 8; ++mask) {
      rp[mask] = lts::cell_prob(params.alpha, params.sigma, lts::LinkPattern::parse(bits_string(mask, 3)), rule);
    }
    full += oracle::log_multinomial(rc, rp);
    // members of each sampled venue over the other two venues
    for (int i = 0; i < n; ++i) {
      std::vector<double> vc(4, 0.0);
      std::vector<double> vp(4, 0.0);
      for (const auto& cell : c.in_venue[static_cast<std::size_t>(i)]) {
        unsigned mask = 0;
        for (int k : cell.pattern.ones()) {
          mask |= 1U << k;
        }
        vc[mask] = static_cast<double>(cell.count);
      }
      for (unsigned mask = 0; mask < 4; ++mask) {
        vp[mask] = lts::cell_prob_excluding(params.alpha, params.sigma, i, lts::LinkPattern::parse(bits_string(mask, 2)), rule);
      }
      full += oracle::log_multinomial(vc, vp);
    }
    const double gap = lts::loglik_unconditional(c, c.geometry(), tau, params, rule) - full;
    if (rep == 0) {
      first_gap = gap;
    }
    CHECK_THAT(gap, WithinAbs(first_gap, 1e-10));
  }
}

TEST_CASE("zero-pattern update") {
  const auto rule = lts::make_rule(15);
  const auto c2 = u2_counts(1, 10, {{"1", 10}});
  CHECK_THAT(lts::tau_update(c2, {1, 10}, rasch({0.0}, 0.0, lts::Portion::U2), rule), WithinRel(20.0, 1e-14));
  CHECK_THAT(lts::tau_update(c2, {1, 10}, rasch({40.0}, 0.0, lts::Portion::U2), rule), WithinRel(10.0, 1e-14));

  lts::ObservedCounts c1;
  c1.n = 2;
  c1.n_frame = 2;
  c1.venue_sizes = {3, 4};
  c1.m = 7;
  c1.in_venue = {{pc("0", 3)}, {pc("1", 4)}};
  CHECK(lts::tau_update(c1, {2, 2}, rasch({-1.0, 0.5}, 1.0, lts::Portion::U1), rule) == 7.0);

  CHECK_THROWS_AS(lts::tau_update(c2, {1, 10}, rasch({-40.0}, 0.0, lts::Portion::U2), rule), lts::Diverged);
}

TEST_CASE("profile tau solves the score equation") {
  for (double observed : {1.0, 7.0, 250.0}) {
    for (double rate : {0.05, 0.5, 0.9}) {
      const double tau = lts::profile_tau(observed, std::log(rate), 1e9);
      const double h = 1e-5 * tau;
      auto g = [&](double t) { return std::lgamma(t + 1.0) - std::lgamma(t - observed + 1.0) + t * std::log(rate); };
      if (tau == observed) {
        // boundary maximum: the objective falls off to the right
        CHECK(g(tau + h) < g(tau));
        continue;
      }
      const double score = (g(tau + h) - g(tau - h)) / (2.0 * h);
      CHECK_THAT(score, WithinAbs(0.0, 1e-6));
      // close to the closed form nu / (1 - kappa pi_0)
      CHECK(std::abs(tau - observed / (1.0 - rate)) < 1.0);
    }
  }
  CHECK(lts::profile_tau(5.0, -std::numeric_limits<double>::infinity(), 1e6) == 5.0);
  CHECK(lts::profile_tau(5.0, std::log(1.0 - 1e-9), 1e6) == 1e6);
  // When even tau = observed has a negative score the boundary is the maximizer.
  CHECK(lts::profile_tau(1.0, std::log(1e-3), 1e6) == 1.0);
}

TEST_CASE("fits recover simulated parameters") {
  const auto rule = lts::make_rule(15);
  const std::vector<double> alpha{-1.5, -1.0, -0.5, -2.0, -1.2, -0.8};
  const auto c = simulate_u2(6, 3000, alpha, 1.0, 17);
  const lts::FrameGeometry g(6, 60);
  const auto fu = lts::fit_unconditional(c, g, lts::Portion::U2, rule);
  const auto fc = lts::fit_conditional(c, g, lts::Portion::U2, rule);
  CHECK(fu.converged);
  CHECK(fc.converged);
  CHECK_THAT(fu.tau_hat, WithinRel(3000.0, 0.06));
  CHECK_THAT(fc.tau_hat, WithinRel(3000.0, 0.06));
  CHECK_THAT(fu.sigma_hat, WithinAbs(1.0, 0.2));
  for (int i = 0; i < 6; ++i) {
    CHECK_THAT(fu.alpha_hat[i], WithinAbs(alpha[static_cast<std::size_t>(i)], 0.15));
  }
  // The conditional and unconditional maximizers coincide up to the O(1) tau correction.
  CHECK_THAT(fc.tau_hat, WithinRel(fu.tau_hat, 0.01));
  CHECK(fu.tau_hat >= static_cast<double>(c.r2));
}

TEST_CASE("fit attains the best value of a dense grid") {
  const auto rule = lts::make_rule(15);
  const auto c = simulate_u2(3, 60, {-0.6, -0.6, -0.6}, 0.8, 5);
  const lts::FrameGeometry g(3, 30);
  const auto fu = lts::fit_unconditional(c, g, lts::Portion::U2, rule);
  const auto fc = lts::fit_conditional(c, g, lts::Portion::U2, rule);
  double best_u = -1e300;
  double best_c = -1e300;
  for (int a = 0; a <= 40; ++a) {
    for (int s = 0; s <= 40; ++s) {
      const double av = -3.0 + 5.0 * a / 40.0;
      const auto params = rasch({av, av, av}, 3.0 * s / 40.0, lts::Portion::U2);
      best_c = std::max(best_c, lts::loglik_conditional(c, g, params, rule));
      for (int t = 0; t <= 40; ++t) {
        const double tau = static_cast<double>(c.r2) * (1.0 + 2.0 * t / 40.0);
        best_u = std::max(best_u, lts::loglik_unconditional(c, g, tau, params, rule));
      }
    }
  }
  CHECK(fu.loglik >= best_u - 1e-3);
  CHECK(fc.loglik >= best_c - 1e-3);
  CHECK_THAT(fu.loglik, WithinAbs(lts::loglik_unconditional(c, g, fu.tau_hat, fu.params(), rule), 1e-9));
}

TEST_CASE("schemes and optimizers agree") {
  const auto rule = lts::make_rule(15);
  const auto c = simulate_u2(4, 400, {-1.0, -0.3, -1.4, -0.7}, 1.2, 23);
  const lts::FrameGeometry g(4, 40);
  const auto profile = lts::fit_unconditional(c, g, lts::Portion::U2, rule);

  lts::FitOptions alt;
  alt.scheme = lts::FitScheme::Alternating;
  alt.rel_tol = 1e-12;
  const auto alternating = lts::fit_unconditional(c, g, lts::Portion::U2, rule, alt);
  CHECK_THAT(alternating.tau_hat, WithinRel(profile.tau_hat, 1e-3));
  CHECK_THAT(alternating.loglik, WithinAbs(profile.loglik, 1e-5));
  REQUIRE(alternating.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < alternating.objective_trace.size(); ++i) {
    CHECK(alternating.objective_trace[i] >= alternating.objective_trace[i - 1] - 1e-9);
  }

  lts::FitOptions nm;
  nm.optimizer = lts::OptimizerKind::NelderMead;
  nm.max_evaluations = 50000;
  const auto simplex = lts::fit_unconditional(c, g, lts::Portion::U2, rule, nm);
  CHECK_THAT(simplex.loglik, WithinAbs(profile.loglik, 1e-4));
  CHECK_THAT(simplex.tau_hat, WithinRel(profile.tau_hat, 1e-3));
}

TEST_CASE("property: relabeling venues permutes alpha and keeps tau and sigma") {
  const auto rule = lts::make_rule(15);
  const auto c = simulate_u2(4, 500, {-1.0, -0.3, -1.4, -0.7}, 1.0, 31);
  const std::vector<int> perm{2, 0, 3, 1};  // new venue k is old venue perm[k]
  lts::ObservedCounts p = c;
  p.named2.clear();
  for (const auto& cell : c.named2) {
    std::vector<std::uint8_t> bits(4);
    for (int k = 0; k < 4; ++k) {
      bits[static_cast<std::size_t>(k)] = cell.pattern[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    }
    p.named2.push_back({lts::LinkPattern(bits), cell.count});
  }
  const lts::FrameGeometry g(4, 40);
  const auto f1 = lts::fit_unconditional(c, g, lts::Portion::U2, rule);
  const auto f2 = lts::fit_unconditional(p, g, lts::Portion::U2, rule);
  CHECK_THAT(f2.tau_hat, WithinRel(f1.tau_hat, 1e-5));
  CHECK_THAT(f2.sigma_hat, WithinAbs(f1.sigma_hat, 1e-4));
  for (int k = 0; k < 4; ++k) {
    CHECK_THAT(f2.alpha_hat[k], WithinAbs(f1.alpha_hat[perm[static_cast<std::size_t>(k)]], 1e-4));
  }
}

TEST_CASE("saturated patterns pin sigma and exhaust the population") {
  const auto rule = lts::make_rule(15);
  const auto c = u2_counts(3, 12, {{"111", 9}});
  const auto fit = lts::fit_unconditional(c, {3, 12}, lts::Portion::U2, rule);
  CHECK(fit.sigma_fixed);
  CHECK(fit.sigma_hat == 0.0);
  CHECK_THAT(fit.tau_hat, WithinAbs(9.0, 1e-3));
}

TEST_CASE("unidentifiable portions are reported") {
  const auto rule = lts::make_rule(15);
  CHECK_THROWS_AS(lts::fit_unconditional(u2_counts(3, 12, {}), {3, 12}, lts::Portion::U2, rule),
                  lts::NonIdentifiable);
  CHECK_THROWS_AS(lts::fit_conditional(u2_counts(1, 12, {{"1", 4}}), {1, 12}, lts::Portion::U2, rule),
                  lts::NonIdentifiable);
}

TEST_CASE("a capped tau raises Diverged with the partial fit") {
  const auto rule = lts::make_rule(15);
  const auto c = simulate_u2(3, 400, {-2.5, -2.5, -2.5}, 0.5, 3);
  lts::FitOptions opts;
  opts.tau_cap = static_cast<double>(c.r2) + 1.0;
  try {
    (void)lts::fit_unconditional(c, {3, 30}, lts::Portion::U2, rule, opts);
    FAIL("expected Diverged");
  } catch (const lts::Diverged& e) {
    CHECK(e.partial().alpha_hat.size() == 3);
    CHECK(e.portion() == lts::Portion::U2);
  }
}

TEST_CASE("frame portion fit") {
  const auto rule = lts::make_rule(15);
  lts::ObservedCounts c;
  c.n = 3;
  c.n_frame = 12;
  c.venue_sizes = {4, 3, 5};
  c.m = 12;
  c.named1 = {pc("100", 6), pc("010", 5), pc("001", 7), pc("110", 2), pc("011", 1), pc("111", 1)};
  c.r1 = 22;
  c.in_venue = {{pc("00", 3), pc("10", 1)}, {pc("00", 2), pc("01", 1)}, {pc("00", 4), pc("11", 1)}};
  const auto fu = lts::fit_unconditional(c, c.geometry(), lts::Portion::U1, rule);
  const auto fc = lts::fit_conditional(c, c.geometry(), lts::Portion::U1, rule);
  CHECK(fu.converged);
  CHECK(fc.converged);
  CHECK(fu.tau_hat >= 34.0);
  CHECK(fc.tau_hat >= 34.0);
  CHECK(fu.observed == 34);
  // tau = nu / (1 - kappa pi_0) holds at the conditional estimate by construction.
  CHECK_THAT(fc.tau_hat, WithinRel(lts::tau_update(c, c.geometry(), fc.params(), rule), 1e-12));
  // Portion mismatch in the counts is a dimension error.
  lts::ObservedCounts wrong = c;
  wrong.n = 4;
  CHECK_THROWS_AS(lts::fit_unconditional(wrong, c.geometry(), lts::Portion::U1, rule), std::invalid_argument);
}
