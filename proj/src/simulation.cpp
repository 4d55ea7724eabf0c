#include "lts/simulation.hpp"

#include "lts/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>
#include <tuple>

namespace lts {

const char* to_string(PopulationKind k) {
  switch (k) {
    case PopulationKind::PopulationI:
      return "I";
    case PopulationKind::PopulationII:
      return "II";
    case PopulationKind::ExplicitFile:
      return "file";
  }
  return "?";
}

const char* to_string(ResponseKind k) { return k == ResponseKind::Continuous ? "continuous" : "binary"; }

PopulationSpec PopulationSpec::standard(PopulationKind kind, ResponseKind response) {
  PopulationSpec s;
  s.kind = kind;
  s.response = response;
  if (kind == PopulationKind::PopulationII) {
    s.c = {-12.0, -12.0};
    s.mu = {0.25, 0.05};
    s.d = {65.05, 50.05};
    s.g = {0.46, 0.33};
    s.fraction_targets = std::array<double, 2>{0.5, 0.4};
  }
  return s;
}

void PopulationSpec::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("population." + field + ": " + why);
  };
  if (kind == PopulationKind::ExplicitFile) {
    if (path.empty()) {
      fail("path", "required for a file population");
    }
    return;
  }
  if (n_frame < 1) {
    fail("n_frame", "must be positive");
  }
  if (!(size_mean > 0.0)) {
    fail("size_mean", "must be positive");
  }
  if (!(size_var > size_mean)) {
    fail("size_var", "must exceed size_mean for a negative binomial");
  }
  if (tau2 < 0) {
    fail("tau2", "must be non-negative");
  }
  if (!(class1_prob > 0.0 && class1_prob < 1.0)) {
    fail("class1_prob", "must lie in (0, 1)");
  }
  if (fraction_targets) {
    for (int k = 0; k < 2; ++k) {
      const double f = (*fraction_targets)[static_cast<std::size_t>(k)];
      if (!(f > 0.0 && f < 1.0)) {
        fail("fraction_targets[" + std::to_string(k) + "]", "must lie in (0, 1)");
      }
    }
    if (calibration_n < 1 || calibration_n >= n_frame) {
      fail("calibration_n", "must lie in [1, n_frame)");
    }
  }
  if (!(interaction_sd >= 0.0)) {
    fail("interaction_sd", "must be non-negative");
  }
  for (int k = 0; k < 2; ++k) {
    const std::string idx = "[" + std::to_string(k) + "]";
    if (!(d[k] >= 0.0)) {
      fail("d" + idx, "must be non-negative");
    }
    if (!(g[k] >= 0.0 && g[k] <= 1.0)) {
      fail("g" + idx, "must lie in [0, 1]");
    }
    if (!std::isfinite(c[k]) || !std::isfinite(mu[k])) {
      fail("c/mu" + idx, "must be finite");
    }
  }
}

int draw_truncated_negbin(double mean, double var, Rng& rng) {
  if (!(mean > 0.0) || !(var > mean)) {
    throw std::invalid_argument("negative binomial needs 0 < mean < var");
  }
  // gamma-Poisson mixture, so the size need not be an integer
  const double p = mean / var;
  const double size = mean * p / (1.0 - p);
  std::gamma_distribution<double> gamma(size, (1.0 - p) / p);
  for (;;) {
    std::poisson_distribution<int> poisson(gamma(rng));
    const int m = poisson(rng);
    if (m > 0) {
      return m;
    }
  }
}

double draw_noncentral_chi2(double df, double lambda, Rng& rng) {
  int k = 0;
  if (lambda > 0.0) {
    std::poisson_distribution<int> poisson(lambda / 2.0);
    k = poisson(rng);
  }
  std::gamma_distribution<double> chi2(df / 2.0 + k, 2.0);
  return chi2(rng);
}

double expected_fraction(const LinkGenerator& gen, const std::vector<int>& venue_sizes, bool frame, int n) {
  const int N = static_cast<int>(venue_sizes.size());
  if (n < 1 || n > N || (frame && n >= N)) {
    return 1.0;
  }
  // E[prod_{i in A} q_i] over n-subsets A of a set of size M is e_n(q) / C(M, n);
  // the recursion below keeps those ratios directly.
  auto subset_mean = [n](const std::vector<double>& q) {
    const int M = static_cast<int>(q.size());
    std::vector<double> e(static_cast<std::size_t>(n) + 1, 0.0);
    e[0] = 1.0;
    for (int m = 1; m <= M; ++m) {
      for (int k = std::min(m, n); k >= 1; --k) {
        // mean over k-subsets of the first m elements
        const double with = e[static_cast<std::size_t>(k) - 1] * q[static_cast<std::size_t>(m) - 1];
        const double w = static_cast<double>(k) / m;
        e[static_cast<std::size_t>(k)] = k == m ? with : (1.0 - w) * e[static_cast<std::size_t>(k)] + w * with;
      }
    }
    return e[static_cast<std::size_t>(n)];
  };
  std::vector<int> owner;
  if (frame) {
    for (int v = 0; v < N; ++v) {
      owner.insert(owner.end(), static_cast<std::size_t>(venue_sizes[static_cast<std::size_t>(v)]), v);
    }
  }
  const auto tau = static_cast<int>(gen.beta.size());
  if (tau == 0) {
    return 0.0;
  }
  // persons sharing (beta, class, own venue) share their probability
  std::map<std::tuple<double, int, int>, double> cache;
  double total = 0.0;
  std::vector<double> q;
  for (int j = 0; j < tau; ++j) {
    const int cls = gen.interacts.empty() ? 0 : gen.interacts[static_cast<std::size_t>(j)];
    const int own = frame ? owner[static_cast<std::size_t>(j)] : -1;
    const auto key = std::make_tuple(gen.beta(j), cls, own);
    auto it = cache.find(key);
    if (it == cache.end()) {
      q.clear();
      for (int i = 0; i < N; ++i) {
        if (i != own) {
          q.push_back(1.0 - gen.prob(i, j));
        }
      }
      const double miss = subset_mean(q);
      const double f = frame ? static_cast<double>(n) / N + (1.0 - static_cast<double>(n) / N) * (1.0 - miss)
                             : 1.0 - miss;
      it = cache.emplace(key, f).first;
    }
    total += it->second;
  }
  return total / tau;
}

namespace {

// c such that expected_fraction hits `target`; alpha_i = c * weight_i.
double calibrate_c(LinkGenerator& gen, const Eigen::VectorXd& weight, const std::vector<int>& sizes, bool frame,
                   int n, double target) {
  auto at = [&](double c) {
    gen.alpha = c * weight;
    return expected_fraction(gen, sizes, frame, n);
  };
  double lo = -100.0;
  double hi = 20.0;
  if (!(at(lo) < target && target < at(hi))) {
    throw std::invalid_argument("population.fraction_targets: target " + std::to_string(target) +
                                " cannot be reached");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    (at(mid) < target ? lo : hi) = mid;
  }
  const double c = 0.5 * (lo + hi);
  gen.alpha = c * weight;
  return c;
}

}  // namespace

Population synth_population(const PopulationSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.kind == PopulationKind::ExplicitFile) {
    return load_population(spec.path);
  }
  const int N = spec.n_frame;
  Population pop;
  pop.n_frame = N;
  pop.generator_name = spec.kind == PopulationKind::PopulationI ? "population-I" : "population-II";
  for (int i = 0; i < N; ++i) {
    pop.venue_sizes.push_back(draw_truncated_negbin(spec.size_mean, spec.size_var, rng));
  }
  const int tau1 = std::accumulate(pop.venue_sizes.begin(), pop.venue_sizes.end(), 0);
  const std::array<int, 2> tau{tau1, spec.tau2};

  std::normal_distribution<double> z(0.0, 1.0);
  std::array<LinkGenerator, 2> gen;
  for (int k = 0; k < 2; ++k) {
    auto& g = gen[static_cast<std::size_t>(k)];
    g.alpha.resize(N);
    for (int i = 0; i < N; ++i) {
      g.alpha(i) = spec.c[static_cast<std::size_t>(k)] / (0.001 + std::pow(pop.venue_sizes[static_cast<std::size_t>(i)], 0.25));
    }
  }
  for (int k = 0; k < 2; ++k) {
    auto& g = gen[static_cast<std::size_t>(k)];
    const int t = tau[static_cast<std::size_t>(k)];
    g.beta.resize(t);
    if (spec.kind == PopulationKind::PopulationI) {
      for (int j = 0; j < t; ++j) {
        g.beta(j) = z(rng);
      }
    } else {
      g.mu = spec.mu[static_cast<std::size_t>(k)];
      g.interacts.resize(static_cast<std::size_t>(t));
      for (int j = 0; j < t; ++j) {
        const bool first = bernoulli(rng, spec.class1_prob);
        g.interacts[static_cast<std::size_t>(j)] = first ? 1 : 0;
        g.beta(j) = first ? spec.class_effect : 0.0;
      }
      g.interaction.resize(N);
      for (int i = 0; i < N; ++i) {
        g.interaction(i) = spec.interaction_sd * z(rng);
      }
    }
  }
  if (spec.fraction_targets) {
    Eigen::VectorXd weight(N);
    for (int i = 0; i < N; ++i) {
      weight(i) = 1.0 / (0.001 + std::pow(pop.venue_sizes[static_cast<std::size_t>(i)], 0.25));
    }
    for (int k = 0; k < 2; ++k) {
      calibrate_c(gen[static_cast<std::size_t>(k)], weight, pop.venue_sizes, k == 0, spec.calibration_n,
                  (*spec.fraction_targets)[static_cast<std::size_t>(k)]);
    }
  }
  // responses last, so both response kinds share the link structure
  std::array<Eigen::VectorXd, 2> y;
  for (int k = 0; k < 2; ++k) {
    const auto& g = gen[static_cast<std::size_t>(k)];
    const auto ks = static_cast<std::size_t>(k);
    auto& yk = y[ks];
    yk.resize(g.beta.size());
    for (Eigen::Index j = 0; j < g.beta.size(); ++j) {
      const double s = sigmoid(g.mu + g.beta(j));
      yk(j) = spec.response == ResponseKind::Continuous ? draw_noncentral_chi2(2.0, 5.0 + spec.d[ks] * s, rng)
                                                         : (bernoulli(rng, spec.g[ks] * s) ? 1.0 : 0.0);
    }
  }
  pop.y1 = y[0];
  pop.y2 = y[1];
  pop.links1 = gen[0];
  pop.links2 = gen[1];
  pop.validate();
  return pop;
}

std::array<double, 9> true_parameters(const Population& pop) {
  std::array<double, 9> t{};
  t[0] = pop.tau1();
  t[1] = pop.tau2();
  t[2] = t[0] + t[1];
  t[3] = pop.y1.sum();
  t[4] = pop.y2.sum();
  t[5] = t[3] + t[4];
  t[6] = t[0] > 0 ? t[3] / t[0] : kMissing;
  t[7] = t[1] > 0 ? t[4] / t[1] : kMissing;
  t[8] = t[2] > 0 ? t[5] / t[2] : kMissing;
  return t;
}

namespace {

double pearson(const Eigen::VectorXd& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(b.size());
  if (b.size() < 2) {
    return kMissing;
  }
  const double ma = a.sum() / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0;
  double saa = 0.0;
  double sbb = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    const double da = a(static_cast<Eigen::Index>(j)) - ma;
    const double db = b[j] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) {
    return kMissing;
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

std::array<double, 2> correlation_check(const Population& pop, int n, std::uint64_t seed, int draws) {
  if (std::holds_alternative<ExplicitLinks>(pop.links1) || std::holds_alternative<ExplicitLinks>(pop.links2)) {
    throw std::invalid_argument("correlation_check: explicit link matrices carry no link probabilities");
  }
  if (n < 1 || n > pop.n_frame) {
    throw std::invalid_argument("correlation_check: need 1 <= n <= N");
  }
  Rng rng = substream(seed, {stream::kCorrelation});
  std::array<double, 2> sum{0.0, 0.0};
  std::array<int, 2> used{0, 0};
  for (int d = 0; d < draws; ++d) {
    const auto venues = srswor(pop.n_frame, n, rng);
    for (int k = 0; k < 2; ++k) {
      const Portion portion = k == 0 ? Portion::U1 : Portion::U2;
      const int tau = k == 0 ? pop.tau1() : pop.tau2();
      std::vector<double> pi(static_cast<std::size_t>(tau));
      for (int j = 0; j < tau; ++j) {
        double log_miss = k == 0 ? std::log1p(-static_cast<double>(n) / pop.n_frame) : 0.0;
        for (int v : venues) {
          log_miss += std::log1p(-pop.link_probability(portion, v, j));
        }
        pi[static_cast<std::size_t>(j)] = -std::expm1(log_miss);
      }
      const double rho = pearson(k == 0 ? pop.y1 : pop.y2, pi);
      if (!is_missing(rho)) {
        sum[static_cast<std::size_t>(k)] += rho;
        ++used[static_cast<std::size_t>(k)];
      }
    }
  }
  return {used[0] > 0 ? sum[0] / used[0] : kMissing, used[1] > 0 ? sum[1] / used[1] : kMissing};
}

void McConfig::validate() const {
  population.validate();
  if (n < 1) {
    throw std::invalid_argument("n: must be at least 1");
  }
  if (population.kind != PopulationKind::ExplicitFile && n > population.n_frame) {
    throw std::invalid_argument("n: exceeds population.n_frame");
  }
  if (r < 1) {
    throw std::invalid_argument("r: must be at least 1");
  }
  if (threads < 1) {
    throw std::invalid_argument("threads: must be at least 1");
  }
  if (fit.quadrature_nodes < 2) {
    throw std::invalid_argument("fit.quadrature_nodes: must be at least 2");
  }
  try {
    boot.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("bootstrap: ") + e.what());
  }
}

std::uint64_t boot_seed_for(std::uint64_t master_seed, int replicate, FitMethod method) {
  Rng rng = substream(master_seed, {stream::kBootstrap, static_cast<std::uint64_t>(replicate),
                                    static_cast<std::uint64_t>(method)});
  return rng();
}

const McMetric* McReport::find(FitMethod m, EstimatorId id) const {
  for (const auto& x : metrics) {
    if (x.method == m && x.id == id) {
      return &x;
    }
  }
  return nullptr;
}

const McFailures* McReport::find(FitMethod m) const {
  for (const auto& x : failures) {
    if (x.method == m) {
      return &x;
    }
  }
  return nullptr;
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) {
    return kMissing;
  }
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 == 1 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct RelativeErrors {
  double r_bias = kMissing;
  double sqrt_r_mse = kMissing;
  double mdre = kMissing;
  double mdare = kMissing;
};

RelativeErrors relative_errors(const std::vector<double>& est, double truth) {
  RelativeErrors out;
  if (est.empty() || is_missing(truth) || truth == 0.0) {
    return out;
  }
  const auto r = static_cast<double>(est.size());
  double bias = 0.0;
  double sq = 0.0;
  std::vector<double> rel;
  std::vector<double> abs_rel;
  for (double v : est) {
    bias += v - truth;
    sq += (v - truth) * (v - truth);
    rel.push_back((v - truth) / truth);
    abs_rel.push_back(std::abs((v - truth) / truth));
  }
  out.r_bias = bias / (r * truth);
  out.sqrt_r_mse = std::sqrt(sq / (r * truth * truth));
  out.mdre = median(rel);
  out.mdare = median(abs_rel);
  return out;
}

McRecord to_record(int replicate, const EstimateSet& e, std::size_t t, const std::array<double, 9>& truth,
                   long nu1, long nu2, std::uint64_t boot_seed) {
  McRecord rec;
  rec.replicate = replicate;
  rec.method = e.method;
  rec.id = kEstimators[t];
  rec.truth = truth[static_cast<std::size_t>(rec.id.target)];
  const Estimate& est = e.values[t];
  rec.value = est.value;
  rec.sd = est.sd;
  if (est.ci) {
    rec.ci_lower = est.ci->lower;
    rec.ci_upper = est.ci->upper;
    rec.ci_kind = to_string(est.ci->kind);
    rec.ci_degenerate = est.ci->degenerate;
  }
  rec.fit1 = e.fit1_status;
  rec.fit2 = e.fit2_status;
  rec.nu1 = nu1;
  rec.nu2 = nu2;
  rec.boot_failures = e.boot_failures;
  rec.variance_unreliable = e.variance_unreliable;
  rec.boot_seed = boot_seed;
  return rec;
}

}  // namespace

std::vector<McRecord> make_records(int replicate, const EstimateSet& e, const std::array<double, 9>& truth,
                                   long nu1, long nu2, std::uint64_t boot_seed) {
  std::vector<McRecord> out;
  for (std::size_t t = 0; t < kEstimators.size(); ++t) {
    out.push_back(to_record(replicate, e, t, truth, nu1, nu2, boot_seed));
  }
  return out;
}

McReport aggregate(const std::vector<McRecord>& records) {
  // group by (method, estimator), replicates ascending
  std::map<std::pair<int, std::size_t>, std::vector<const McRecord*>> groups;
  std::map<int, std::map<int, const McRecord*>> per_replicate;
  for (const auto& rec : records) {
    groups[{static_cast<int>(rec.method), estimator_index(rec.id)}].push_back(&rec);
    auto& slot = per_replicate[static_cast<int>(rec.method)][rec.replicate];
    if (slot == nullptr || estimator_index(rec.id) < estimator_index(slot->id)) {
      slot = &rec;
    }
  }
  McReport report;
  for (auto& [key, recs] : groups) {
    std::stable_sort(recs.begin(), recs.end(),
                     [](const McRecord* a, const McRecord* b) { return a->replicate < b->replicate; });
    McMetric m;
    m.method = static_cast<FitMethod>(key.first);
    m.id = kEstimators[key.second];
    m.truth = recs.front()->truth;
    std::vector<double> values;
    std::vector<double> sds;
    std::vector<double> lengths;
    int covered = 0;
    for (const auto* rec : recs) {
      if (is_missing(rec->value)) {
        ++m.failed;
        continue;
      }
      values.push_back(rec->value);
      if (!is_missing(rec->sd)) {
        sds.push_back(rec->sd);
      }
      if (!rec->ci_kind.empty()) {
        covered += (rec->ci_lower <= m.truth && m.truth <= rec->ci_upper) ? 1 : 0;
        lengths.push_back((rec->ci_upper - rec->ci_lower) / m.truth);
      }
    }
    m.ok = static_cast<int>(values.size());
    const auto e = relative_errors(values, m.truth);
    m.r_bias = e.r_bias;
    m.sqrt_r_mse = e.sqrt_r_mse;
    m.mdre = e.mdre;
    m.mdare = e.mdare;
    if (!sds.empty() && values.size() >= 2) {
      const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      double ss = 0.0;
      for (double v : values) {
        ss += (v - mean) * (v - mean);
      }
      const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
      // equal values can leave a rounding-level spread around the computed mean
      const double mc_sd = *lo == *hi ? 0.0 : std::sqrt(ss / static_cast<double>(values.size() - 1));
      const auto es = relative_errors(sds, mc_sd);
      m.sd_count = static_cast<int>(sds.size());
      m.sd_r_bias = es.r_bias;
      m.sd_sqrt_r_mse = es.sqrt_r_mse;
      m.sd_mdre = es.mdre;
      m.sd_mdare = es.mdare;
    }
    if (!lengths.empty()) {
      m.ci_count = static_cast<int>(lengths.size());
      m.cp = static_cast<double>(covered) / static_cast<double>(lengths.size());
      m.mrl = std::accumulate(lengths.begin(), lengths.end(), 0.0) / static_cast<double>(lengths.size());
      m.mdrl = median(lengths);
    }
    report.metrics.push_back(m);
  }
  for (const auto& [method, reps] : per_replicate) {
    McFailures f;
    f.method = static_cast<FitMethod>(method);
    double s1 = 0.0;
    double s2 = 0.0;
    double t1 = kMissing;
    double t2 = kMissing;
    for (const auto& rec : records) {
      if (static_cast<int>(rec.method) == method && rec.id.family == Family::Mle) {
        if (rec.id.target == Target::Tau1) {
          t1 = rec.truth;
        } else if (rec.id.target == Target::Tau2) {
          t2 = rec.truth;
        }
      }
    }
    for (const auto& [r, rec] : reps) {
      ++f.samples;
      f.fit1_failures += rec->fit1 != FitStatus::Ok ? 1 : 0;
      f.fit2_failures += rec->fit2 != FitStatus::Ok ? 1 : 0;
      s1 += static_cast<double>(rec->nu1);
      s2 += static_cast<double>(rec->nu2);
    }
    f.mean_f1 = s1 / f.samples / t1;
    f.mean_f2 = s2 / f.samples / t2;
    report.failures.push_back(f);
  }
  return report;
}

McRun run_monte_carlo(const McConfig& config, const McHooks& hooks) {
  config.validate();
  McRun run;
  {
    Rng prng = substream(config.master_seed, {stream::kPopulation});
    run.population = synth_population(config.population, prng);
  }
  if (config.n > run.population.n_frame) {
    throw std::invalid_argument("n: exceeds the population's number of venues");
  }
  run.truth = true_parameters(run.population);
  const QuadratureRule rule = make_rule(config.fit.quadrature_nodes);

  struct Slot {
    std::vector<McRecord> records;
    std::optional<LtsSample> sample;
  };
  std::vector<Slot> slots(static_cast<std::size_t>(config.r));
  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex lock;
  std::exception_ptr failure;

  auto work = [&] {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= config.r) {
        return;
      }
      try {
        Rng rng = substream(config.master_seed, {stream::kSample, static_cast<std::uint64_t>(rep)});
        LtsSample sample = draw_sample(run.population, config.n, rng);
        const long nu1 = sample.m_total() + sample.r1();
        const long nu2 = sample.r2();
        Slot& slot = slots[static_cast<std::size_t>(rep)];
        std::optional<ObservedCounts> counts;
        for (FitMethod method : config.methods) {
          const std::uint64_t bseed = boot_seed_for(config.master_seed, rep, method);
          EstimateSet e;
          if (hooks.estimator) {
            e = hooks.estimator(sample, method, bseed);
          } else {
            if (!counts) {
              counts = observed_counts(sample);
            }
            const PortionFits fits = fit_portions(*counts, method, rule, config.fit);
            e = compute_estimates(sample, fits, method, rule);
            if (config.bootstrap) {
              e = bootstrap_estimates(sample, fits, e, rule, config.boot, config.fit, bseed);
            }
          }
          e.method = method;
          const auto recs = make_records(rep, e, run.truth, nu1, nu2, bseed);
          slot.records.insert(slot.records.end(), recs.begin(), recs.end());
        }
        if (hooks.keep_samples) {
          slot.sample = std::move(sample);
        }
      } catch (...) {
        std::lock_guard<std::mutex> g(lock);
        if (!failure) {
          failure = std::current_exception();
        }
        next.store(config.r);
        return;
      }
      const int d = done.fetch_add(1) + 1;
      if (hooks.progress) {
        std::lock_guard<std::mutex> g(lock);
        hooks.progress(d, config.r);
      }
    }
  };

  const int nthreads = std::min(config.threads, config.r);
  if (nthreads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) {
      pool.emplace_back(work);
    }
    for (auto& t : pool) {
      t.join();
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  for (auto& slot : slots) {
    run.records.insert(run.records.end(), slot.records.begin(), slot.records.end());
    if (slot.sample) {
      run.samples.push_back(std::move(*slot.sample));
    }
  }
  run.report = aggregate(run.records);
  return run;
}

namespace {

constexpr const char* kRecordHeader =
    "replicate,method,family,target,truth,value,sd,ci_lower,ci_upper,ci_kind,ci_degenerate,fit1,fit2,nu1,nu2,"
    "boot_failures,variance_unreliable,boot_seed";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

FitMethod parse_method(const std::string& s) {
  if (s == "U") {
    return FitMethod::Unconditional;
  }
  if (s == "C") {
    return FitMethod::Conditional;
  }
  throw std::invalid_argument("unknown method '" + s + "'");
}

EstimatorId parse_id(const std::string& family, const std::string& target) {
  for (const auto& id : kEstimators) {
    if (family == to_string(id.family) && target == to_string(id.target)) {
      return id;
    }
  }
  throw std::invalid_argument("unknown estimator " + family + " " + target);
}

}  // namespace

void write_records_csv(std::ostream& out, const std::vector<McRecord>& records) {
  out << kRecordHeader << '\n';
  for (const auto& r : records) {
    out << r.replicate << ',' << method_tag(r.method) << ',' << to_string(r.id.family) << ','
        << to_string(r.id.target) << ',' << format_csv_double(r.truth) << ',' << format_csv_double(r.value) << ','
        << format_csv_double(r.sd) << ',' << format_csv_double(r.ci_lower) << ','
        << format_csv_double(r.ci_upper) << ',' << r.ci_kind << ',' << (r.ci_degenerate ? 1 : 0) << ','
        << to_string(r.fit1) << ',' << to_string(r.fit2) << ',' << r.nu1 << ',' << r.nu2 << ','
        << r.boot_failures << ',' << (r.variance_unreliable ? 1 : 0) << ',' << r.boot_seed << '\n';
  }
}

std::vector<McRecord> read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || split_csv(line) != split_csv(kRecordHeader)) {
    throw ParseError("records: unexpected header", 1);
  }
  std::vector<McRecord> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") {
      continue;
    }
    const auto f = split_csv(line);
    if (f.size() != 18) {
      throw ParseError("records: expected 18 fields", lineno);
    }
    try {
      McRecord r;
      r.replicate = std::stoi(f[0]);
      r.method = parse_method(f[1]);
      r.id = parse_id(f[2], f[3]);
      r.truth = parse_csv_double(f[4]);
      r.value = parse_csv_double(f[5]);
      r.sd = parse_csv_double(f[6]);
      r.ci_lower = parse_csv_double(f[7]);
      r.ci_upper = parse_csv_double(f[8]);
      r.ci_kind = f[9];
      r.ci_degenerate = f[10] == "1";
      r.fit1 = parse_fit_status(f[11]);
      r.fit2 = parse_fit_status(f[12]);
      r.nu1 = std::stol(f[13]);
      r.nu2 = std::stol(f[14]);
      r.boot_failures = std::stoi(f[15]);
      r.variance_unreliable = f[16] == "1";
      r.boot_seed = std::stoull(f[17]);
      out.push_back(r);
    } catch (const std::exception& e) {
      throw ParseError(std::string("records: ") + e.what(), lineno);
    }
  }
  return out;
}

void write_report_csv(std::ostream& out, const McReport& report) {
  out << "method,family,target,truth,ok,failed,r_bias,sqrt_r_mse,mdre,mdare,sd_count,sd_r_bias,sd_sqrt_r_mse,"
         "sd_mdre,sd_mdare,ci_count,cp,mrl,mdrl\n";
  for (const auto& m : report.metrics) {
    out << method_tag(m.method) << ',' << to_string(m.id.family) << ',' << to_string(m.id.target) << ','
        << format_csv_double(m.truth) << ',' << m.ok << ',' << m.failed << ',' << format_csv_double(m.r_bias) << ','
        << format_csv_double(m.sqrt_r_mse) << ',' << format_csv_double(m.mdre) << ','
        << format_csv_double(m.mdare) << ',' << m.sd_count << ',' << format_csv_double(m.sd_r_bias) << ','
        << format_csv_double(m.sd_sqrt_r_mse) << ',' << format_csv_double(m.sd_mdre) << ','
        << format_csv_double(m.sd_mdare) << ',' << m.ci_count << ',' << format_csv_double(m.cp) << ','
        << format_csv_double(m.mrl) << ',' << format_csv_double(m.mdrl) << '\n';
  }
}

namespace {

std::string cell(double v, int precision = 3) {
  if (is_missing(v)) {
    return "-";
  }
  std::ostringstream s;
  s.imbue(std::locale::classic());
  s << std::fixed << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace

void write_report_table(std::ostream& out, const McReport& report) {
  auto label = [](const McMetric& m) {
    return std::string(to_string(m.id.family)) + " " + to_string(m.id.target) + " (" + method_tag(m.method) + ")";
  };
  out << "Point estimators\n";
  out << std::left << std::setw(20) << "estimator" << std::right << std::setw(8) << "r-bias" << std::setw(8)
      << "rmse" << std::setw(8) << "mdre" << std::setw(8) << "mdare" << std::setw(7) << "ok" << std::setw(7)
      << "fail" << '\n';
  for (const auto& m : report.metrics) {
    out << std::left << std::setw(20) << label(m) << std::right << std::setw(8) << cell(m.r_bias) << std::setw(8)
        << cell(m.sqrt_r_mse) << std::setw(8) << cell(m.mdre) << std::setw(8) << cell(m.mdare) << std::setw(7)
        << m.ok << std::setw(7) << m.failed << '\n';
  }
  const bool any_sd = std::any_of(report.metrics.begin(), report.metrics.end(),
                                  [](const McMetric& m) { return m.sd_count > 0; });
  if (any_sd) {
    out << "\nStandard deviation estimators\n";
    out << std::left << std::setw(20) << "estimator" << std::right << std::setw(8) << "r-bias" << std::setw(8)
        << "rmse" << std::setw(8) << "mdre" << std::setw(8) << "mdare" << std::setw(7) << "n" << '\n';
    for (const auto& m : report.metrics) {
      if (m.sd_count > 0) {
        out << std::left << std::setw(20) << label(m) << std::right << std::setw(8) << cell(m.sd_r_bias)
            << std::setw(8) << cell(m.sd_sqrt_r_mse) << std::setw(8) << cell(m.sd_mdre) << std::setw(8)
            << cell(m.sd_mdare) << std::setw(7) << m.sd_count << '\n';
      }
    }
    out << "\nConfidence intervals\n";
    out << std::left << std::setw(20) << "estimator" << std::right << std::setw(8) << "cp" << std::setw(8) << "mrl"
        << std::setw(8) << "mdrl" << std::setw(7) << "n" << '\n';
    for (const auto& m : report.metrics) {
      if (m.ci_count > 0) {
        out << std::left << std::setw(20) << label(m) << std::right << std::setw(8) << cell(m.cp, 2)
            << std::setw(8) << cell(m.mrl, 2) << std::setw(8) << cell(m.mdrl, 2) << std::setw(7) << m.ci_count
            << '\n';
      }
    }
  }
  out << "\nFit failures\n";
  for (const auto& f : report.failures) {
    out << method_tag(f.method) << ": samples " << f.samples << ", portion 1 failures " << f.fit1_failures
        << " (" << cell(100.0 * f.fit1_failures / std::max(f.samples, 1), 1) << "%), portion 2 failures "
        << f.fit2_failures << " (" << cell(100.0 * f.fit2_failures / std::max(f.samples, 1), 1)
        << "%), mean f1 " << cell(f.mean_f1, 2) << ", mean f2 " << cell(f.mean_f2, 2) << '\n';
  }
}

}  // namespace lts
