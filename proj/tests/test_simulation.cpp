#include "lts/simulation.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <sstream>

using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

lts::Population make_population(lts::PopulationKind kind, lts::ResponseKind response, std::uint64_t seed) {
  lts::Rng rng = lts::substream(seed, {lts::stream::kPopulation});
  return lts::synth_population(lts::PopulationSpec::standard(kind, response), rng);
}

double mean(const Eigen::VectorXd& v) { return v.sum() / static_cast<double>(v.size()); }

double pearson(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd da = a.array() - mean(a);
  const Eigen::ArrayXd db = b.array() - mean(b);
  return (da * db).sum() / std::sqrt((da * da).sum() * (db * db).sum());
}

lts::McConfig small_config() {
  lts::McConfig c;
  c.population = lts::PopulationSpec::standard(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous);
  c.population.n_frame = 40;
  c.population.tau2 = 100;
  c.n = 8;
  c.r = 6;
  c.fit.quadrature_nodes = 10;
  c.master_seed = 5;
  return c;
}

std::string records_text(const std::vector<lts::McRecord>& recs) {
  std::ostringstream out;
  lts::write_records_csv(out, recs);
  return out.str();
}

}  // namespace

TEST_CASE("PopulationSpec validation names the field") {
  auto s = lts::PopulationSpec::standard(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous);
  s.validate();
  s.size_var = 7.0;  // below the mean: not a negative binomial
  CHECK_THROWS_WITH(s.validate(), Catch::Matchers::ContainsSubstring("size_var"));
  s = lts::PopulationSpec::standard(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous);
  s.n_frame = 0;
  CHECK_THROWS_WITH(s.validate(), Catch::Matchers::ContainsSubstring("n_frame"));
  s = lts::PopulationSpec::standard(lts::PopulationKind::ExplicitFile, lts::ResponseKind::Continuous);
  CHECK_THROWS_WITH(s.validate(), Catch::Matchers::ContainsSubstring("path"));
}

TEST_CASE("truncated negative binomial moments") {
  // untruncated law: p = 1/3, size 4, P(0) = 1/81
  lts::Rng rng(17);
  const int draws = 40000;
  double s = 0.0;
  double ss = 0.0;
  int smallest = 1 << 30;
  for (int i = 0; i < draws; ++i) {
    const int m = lts::draw_truncated_negbin(8.0, 24.0, rng);
    smallest = std::min(smallest, m);
    s += m;
    ss += static_cast<double>(m) * m;
  }
  const double p0 = 1.0 / 81.0;
  const double mu = 8.0 / (1.0 - p0);
  const double var = (24.0 + 64.0) / (1.0 - p0) - mu * mu;
  const double m = s / draws;
  CHECK(smallest >= 1);
  CHECK_THAT(m, WithinAbs(mu, 4.0 * std::sqrt(var / draws)));
  CHECK_THAT(ss / draws - m * m, WithinRel(var, 0.05));
}

TEST_CASE("noncentral chi-square moments") {
  lts::Rng rng(99);
  for (double lambda : {0.0, 10.0, 92.0}) {
    const int draws = 40000;
    double s = 0.0;
    double ss = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double x = lts::draw_noncentral_chi2(2.0, lambda, rng);
      REQUIRE(x >= 0.0);
      s += x;
      ss += x * x;
    }
    const double var = 2.0 * (2.0 + 2.0 * lambda);
    const double m = s / draws;
    CHECK_THAT(m, WithinAbs(2.0 + lambda, 4.0 * std::sqrt(var / draws)));
    CHECK_THAT(ss / draws - m * m, WithinRel(var, 0.06));
  }
}

TEST_CASE("population I is built from the stated laws") {
  const auto pop = make_population(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous, 1);
  pop.validate();
  REQUIRE(pop.n_frame == 150);
  CHECK(pop.tau2() == 400);
  CHECK(pop.generator_name == "population-I");
  const auto& g1 = std::get<lts::LinkGenerator>(pop.links1);
  CHECK(g1.interacts.empty());
  CHECK(g1.beta.size() == pop.tau1());
  for (int i = 0; i < pop.n_frame; ++i) {
    const double w = 0.001 + std::pow(pop.venue_sizes[static_cast<std::size_t>(i)], 0.25);
    CHECK_THAT(g1.alpha(i) * w, WithinAbs(-5.45, 1e-12));
  }
  CHECK(std::abs(mean(g1.beta)) < 0.1);
}

TEST_CASE("population I targets") {
  for (std::uint64_t seed : {1u, 2u}) {
    const auto pop = make_population(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous, seed);
    CHECK(std::abs(pop.tau1() - 1208) <= 121);
    CHECK_THAT(mean(pop.y1), WithinAbs(50.0, 2.0));
    CHECK_THAT(mean(pop.y2), WithinAbs(40.0, 2.0));
    const auto rho = lts::correlation_check(pop, 15);
    CHECK(rho[0] >= 0.70);
    CHECK(rho[0] <= 0.88);
    CHECK(rho[1] > 0.5);

    const auto bin = make_population(lts::PopulationKind::PopulationI, lts::ResponseKind::Binary, seed);
    CHECK_THAT(mean(bin.y1), WithinAbs(0.30, 0.03));
    CHECK_THAT(mean(bin.y2), WithinAbs(0.20, 0.03));
    // same links whatever the response
    CHECK(bin.venue_sizes == pop.venue_sizes);
    CHECK(std::get<lts::LinkGenerator>(bin.links1).beta == std::get<lts::LinkGenerator>(pop.links1).beta);
  }
}

TEST_CASE("zero slope leaves the response unrelated to links") {
  auto spec = lts::PopulationSpec::standard(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous);
  spec.d = {0.0, 0.0};
  spec.tau2 = 4000;
  lts::Rng rng(4);
  const auto pop = lts::synth_population(spec, rng);
  // psi = 5 everywhere: mean 7, variance 24
  CHECK_THAT(mean(pop.y2), WithinAbs(7.0, 4.0 * std::sqrt(24.0 / 4000)));
  CHECK(std::abs(pearson(pop.y2, std::get<lts::LinkGenerator>(pop.links2).beta)) < 0.06);
}

TEST_CASE("constant response has no correlation") {
  auto pop = make_population(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous, 3);
  pop.y1.setConstant(2.0);
  const auto rho = lts::correlation_check(pop, 10, 0, 5);
  CHECK(lts::is_missing(rho[0]));
  CHECK(!lts::is_missing(rho[1]));
}

TEST_CASE("explicit links are rejected by the correlation check") {
  lts::Population p;
  p.n_frame = 2;
  p.venue_sizes = {1, 1};
  p.y1 = Eigen::VectorXd{{1.0, 2.0}};
  p.y2 = Eigen::VectorXd{{3.0}};
  p.links1 = lts::ExplicitLinks{lts::LinkMatrix::Zero(2, 2)};
  p.links2 = lts::ExplicitLinks{lts::LinkMatrix::Ones(2, 1)};
  CHECK_THROWS_AS(lts::correlation_check(p, 1), std::invalid_argument);
}

TEST_CASE("expected fraction agrees with simulated samples") {
  auto spec = lts::PopulationSpec::standard(lts::PopulationKind::PopulationI, lts::ResponseKind::Continuous);
  spec.n_frame = 60;
  spec.tau2 = 200;
  lts::Rng rng(21);
  const auto pop = lts::synth_population(spec, rng);
  const int n = 10;
  const double e1 = lts::expected_fraction(std::get<lts::LinkGenerator>(pop.links1), pop.venue_sizes, true, n);
  const double e2 = lts::expected_fraction(std::get<lts::LinkGenerator>(pop.links2), pop.venue_sizes, false, n);
  const int draws = 3000;
  double f1 = 0.0;
  double f2 = 0.0;
  lts::Rng srng(8);
  for (int d = 0; d < draws; ++d) {
    const auto s = lts::draw_sample(pop, n, srng);
    f1 += static_cast<double>(s.m_total() + s.r1()) / pop.tau1();
    f2 += static_cast<double>(s.r2()) / pop.tau2();
  }
  CHECK_THAT(f1 / draws, WithinAbs(e1, 0.004));
  CHECK_THAT(f2 / draws, WithinAbs(e2, 0.004));
  // a census of the frame reaches every frame person
  CHECK(lts::expected_fraction(std::get<lts::LinkGenerator>(pop.links1), pop.venue_sizes, true, 60) == 1.0);
}

TEST_CASE("population II calibration hits the fraction targets") {
  const auto pop = make_population(lts::PopulationKind::PopulationII, lts::ResponseKind::Continuous, 1);
  CHECK(pop.generator_name == "population-II");
  const auto& g1 = std::get<lts::LinkGenerator>(pop.links1);
  const auto& g2 = std::get<lts::LinkGenerator>(pop.links2);
  CHECK_THAT(lts::expected_fraction(g1, pop.venue_sizes, true, 15), WithinAbs(0.5, 1e-9));
  CHECK_THAT(lts::expected_fraction(g2, pop.venue_sizes, false, 15), WithinAbs(0.4, 1e-9));
  CHECK(g1.mu == 0.25);
  CHECK(g2.mu == 0.05);
  REQUIRE(g1.interaction.size() == pop.n_frame);
  for (Eigen::Index j = 0; j < g1.beta.size(); ++j) {
    CHECK(g1.beta(j) == (g1.interacts[static_cast<std::size_t>(j)] != 0 ? 1.5 : 0.0));
  }
  const double share = std::accumulate(g1.interacts.begin(), g1.interacts.end(), 0.0) / g1.beta.size();
  CHECK_THAT(share, WithinAbs(0.3, 0.05));
}

TEST_CASE("population II without calibration keeps the literal constants") {
  auto spec = lts::PopulationSpec::standard(lts::PopulationKind::PopulationII, lts::ResponseKind::Continuous);
  spec.fraction_targets.reset();
  lts::Rng rng(2);
  const auto pop = lts::synth_population(spec, rng);
  const auto& g1 = std::get<lts::LinkGenerator>(pop.links1);
  const double w = 0.001 + std::pow(pop.venue_sizes[0], 0.25);
  CHECK_THAT(g1.alpha(0) * w, WithinAbs(-12.0, 1e-12));
}

TEST_CASE("population II correlation is the class correlation") {
  // link probabilities depend on the person only through the latent class, so
  // for any venue sample the correlation of y with pi is that of y with the class
  for (auto response : {lts::ResponseKind::Continuous, lts::ResponseKind::Binary}) {
    const auto pop = make_population(lts::PopulationKind::PopulationII, response, 1);
    const auto rho = lts::correlation_check(pop, 15);
    for (int k = 0; k < 2; ++k) {
      const auto& g = std::get<lts::LinkGenerator>(k == 0 ? pop.links1 : pop.links2);
      Eigen::VectorXd cls(g.beta.size());
      for (Eigen::Index j = 0; j < cls.size(); ++j) cls(j) = g.interacts[static_cast<std::size_t>(j)];
      const double expected = pearson(k == 0 ? pop.y1 : pop.y2, cls);
      CHECK_THAT(std::abs(rho[static_cast<std::size_t>(k)]), WithinAbs(std::abs(expected), 1e-9));
    }
  }
}

TEST_CASE("true parameters") {
  lts::Population p;
  p.n_frame = 2;
  p.venue_sizes = {2, 1};
  p.y1 = Eigen::VectorXd{{1.0, 2.0, 6.0}};
  p.y2 = Eigen::VectorXd{{3.0}};
  p.links1 = lts::ExplicitLinks{lts::LinkMatrix::Zero(2, 3)};
  p.links2 = lts::ExplicitLinks{lts::LinkMatrix::Ones(2, 1)};
  const auto t = lts::true_parameters(p);
  CHECK(t == std::array<double, 9>{3, 1, 4, 9, 3, 12, 3, 3, 3});
}

TEST_CASE("monte carlo config validation") {
  auto c = small_config();
  c.validate();
  c.r = 0;
  CHECK_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("r:"));
  c = small_config();
  c.n = 41;
  CHECK_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("n:"));
  c = small_config();
  c.bootstrap = true;
  c.boot.replicates = 0;
  CHECK_THROWS_WITH(c.validate(), Catch::Matchers::ContainsSubstring("bootstrap"));
}

TEST_CASE("no methods gives an empty report") {
  auto c = small_config();
  c.r = 1;
  c.methods.clear();
  const auto run = lts::run_monte_carlo(c);
  CHECK(run.records.empty());
  CHECK(run.report.metrics.empty());
  CHECK(run.report.failures.empty());
}

TEST_CASE("an oracle estimator scores zero error and full coverage") {
  auto c = small_config();
  c.methods = {lts::FitMethod::Unconditional, lts::FitMethod::Conditional};
  lts::Rng prng = lts::substream(c.master_seed, {lts::stream::kPopulation});
  const auto truth = lts::true_parameters(lts::synth_population(c.population, prng));
  lts::McHooks hooks;
  hooks.estimator = [&](const lts::LtsSample&, lts::FitMethod, std::uint64_t) {
    lts::EstimateSet e;
    for (std::size_t t = 0; t < lts::kEstimators.size(); ++t) {
      const double v = truth[static_cast<std::size_t>(lts::kEstimators[t].target)];
      e.values[t].value = v;
      e.values[t].sd = 1.0;
      e.values[t].ci = lts::CiRecord{0.9 * v, 1.1 * v, lts::CiKind::WaldNormal, 1.0, false};
    }
    return e;
  };
  const auto run = lts::run_monte_carlo(c, hooks);
  CHECK(run.records.size() == static_cast<std::size_t>(c.r) * 2 * lts::kEstimators.size());
  REQUIRE(run.report.metrics.size() == 2 * lts::kEstimators.size());
  for (const auto& m : run.report.metrics) {
    CHECK(m.ok == c.r);
    CHECK(m.failed == 0);
    CHECK(m.r_bias == 0.0);
    CHECK(m.sqrt_r_mse == 0.0);
    CHECK(m.mdare == 0.0);
    CHECK(m.cp == 1.0);
    CHECK_THAT(m.mrl, WithinAbs(0.2, 1e-12));
    CHECK(lts::is_missing(m.sd_r_bias));  // zero Monte Carlo spread
  }
  for (const auto& f : run.report.failures) {
    CHECK(f.samples == c.r);
    CHECK(f.fit1_failures == 0);
    CHECK(f.mean_f1 > 0.0);
    CHECK(f.mean_f1 <= 1.0);
  }
}

TEST_CASE("metrics from hand-made records") {
  std::vector<lts::McRecord> recs;
  const double values[] = {90.0, 100.0, 130.0, lts::kMissing};
  for (int r = 0; r < 4; ++r) {
    lts::McRecord rec;
    rec.replicate = r;
    rec.truth = 100.0;
    rec.value = values[r];
    rec.nu1 = 50;
    rec.fit1 = r == 3 ? lts::FitStatus::NonIdentifiable : lts::FitStatus::Ok;
    if (r < 2) {
      rec.ci_kind = "wald";
      rec.ci_lower = 95.0 + 10.0 * r;
      rec.ci_upper = 105.0 + 20.0 * r;
    }
    recs.push_back(rec);
  }
  const auto rep = lts::aggregate(recs);
  REQUIRE(rep.metrics.size() == 1);
  const auto& m = rep.metrics[0];
  CHECK(m.ok == 3);
  CHECK(m.failed == 1);
  CHECK_THAT(m.r_bias, WithinAbs(20.0 / 300.0, 1e-15));
  CHECK_THAT(m.sqrt_r_mse, WithinAbs(std::sqrt(1000.0 / 30000.0), 1e-15));
  CHECK_THAT(m.mdre, WithinAbs(0.0, 1e-15));
  CHECK_THAT(m.mdare, WithinAbs(0.1, 1e-15));
  CHECK(m.ci_count == 2);
  CHECK(m.cp == 0.5);
  CHECK_THAT(m.mrl, WithinAbs(0.15, 1e-15));
  REQUIRE(rep.failures.size() == 1);
  CHECK(rep.failures[0].samples == 4);
  CHECK(rep.failures[0].fit1_failures == 1);
  CHECK_THAT(rep.failures[0].mean_f1, WithinAbs(0.5, 1e-15));
}

TEST_CASE("records round trip through csv and reproduce the report") {
  auto c = small_config();
  c.methods = {lts::FitMethod::Unconditional, lts::FitMethod::Conditional};
  const auto run = lts::run_monte_carlo(c);
  const std::string text = records_text(run.records);
  std::istringstream in(text);
  const auto back = lts::read_records_csv(in);
  CHECK(records_text(back) == text);
  std::ostringstream a, b;
  lts::write_report_csv(a, run.report);
  lts::write_report_csv(b, lts::aggregate(back));
  CHECK(a.str() == b.str());
  std::ostringstream table;
  lts::write_report_table(table, run.report);
  CHECK(table.str().find("tau1") != std::string::npos);
}

TEST_CASE("malformed record csv names the line") {
  std::istringstream in(
      "replicate,method,family,target,truth,value,sd,ci_lower,ci_upper,ci_kind,ci_degenerate,fit1,fit2,nu1,nu2,"
      "boot_failures,variance_unreliable,boot_seed\n"
      "0,U,MLE,tau1,10,11,,,,,0,ok,ok,5,2,0,0,7\n"
      "1,U,MLE,tau1,10,11\n");
  try {
    lts::read_records_csv(in);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK_THAT(std::string(e.what()), Catch::Matchers::ContainsSubstring("line 3"));
  }
}

TEST_CASE("thread count does not change the records") {
  auto c = small_config();
  c.r = 5;
  c.bootstrap = true;
  c.boot.replicates = 4;
  c.threads = 1;
  const auto one = lts::run_monte_carlo(c);
  c.threads = 3;
  const auto three = lts::run_monte_carlo(c);
  CHECK(records_text(one.records) == records_text(three.records));
  for (const auto& rec : one.records) {
    CHECK(rec.boot_seed == lts::boot_seed_for(c.master_seed, rec.replicate, rec.method));
  }
}

TEST_CASE("samples are kept on request and match their seeds") {
  auto c = small_config();
  c.r = 3;
  lts::McHooks hooks;
  hooks.keep_samples = true;
  int calls = 0;
  hooks.progress = [&](int, int total) {
    ++calls;
    CHECK(total == 3);
  };
  const auto run = lts::run_monte_carlo(c, hooks);
  REQUIRE(run.samples.size() == 3);
  CHECK(calls == 3);
  lts::Rng rng = lts::substream(c.master_seed, {lts::stream::kSample, 2});
  const auto again = lts::draw_sample(run.population, c.n, rng);
  CHECK(again.selected_venues == run.samples[2].selected_venues);
  CHECK(again.persons.size() == run.samples[2].persons.size());
}
