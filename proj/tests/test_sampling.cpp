#include "lts/sampling.hpp"

#include <catch_amalgamated.hpp>

#include <map>

namespace {

// Four venues of sizes 2, 1, 3, 2 (8 frame persons) and 3 persons outside.
lts::Population small_explicit() {
  lts::Population pop;
  pop.n_frame = 4;
  pop.venue_sizes = {2, 1, 3, 2};
  pop.y1 = Eigen::VectorXd::LinSpaced(8, 1.0, 8.0);
  pop.y2 = Eigen::VectorXd::LinSpaced(3, 10.0, 12.0);
  lts::LinkMatrix x1 = lts::LinkMatrix::Zero(4, 8);
  // person 0 (venue 0) named at venues 1 and 2; person 3 (venue 2) at venue 0
  x1(1, 0) = 1;
  x1(2, 0) = 1;
  x1(0, 3) = 1;
  x1(1, 6) = 1;
  lts::LinkMatrix x2 = lts::LinkMatrix::Zero(4, 3);
  x2(0, 0) = 1;
  x2(2, 0) = 1;
  x2(3, 2) = 1;
  pop.links1 = lts::ExplicitLinks{x1};
  pop.links2 = lts::ExplicitLinks{x2};
  return pop;
}

lts::Population generator_population(double alpha_value, int N = 10, int size = 4, int tau2 = 30) {
  lts::Population pop;
  pop.n_frame = N;
  pop.venue_sizes.assign(static_cast<std::size_t>(N), size);
  pop.y1 = Eigen::VectorXd::Ones(N * size);
  pop.y2 = Eigen::VectorXd::Zero(tau2);
  lts::LinkGenerator g1;
  g1.alpha = Eigen::VectorXd::Constant(N, alpha_value);
  g1.beta = Eigen::VectorXd::LinSpaced(N * size, -1.0, 1.0);
  lts::LinkGenerator g2;
  g2.alpha = Eigen::VectorXd::Constant(N, alpha_value);
  g2.beta = Eigen::VectorXd::Zero(tau2);
  pop.links1 = g1;
  pop.links2 = g2;
  pop.generator_name = "test";
  return pop;
}

}  // namespace

TEST_CASE("population validation") {
  auto pop = small_explicit();
  REQUIRE_NOTHROW(pop.validate());
  CHECK(pop.tau1() == 8);
  CHECK(pop.offsets() == std::vector<int>{0, 2, 3, 6, 8});

  auto self_linked = pop;
  std::get<lts::ExplicitLinks>(self_linked.links1).x(0, 1) = 1;  // person 1 lives in venue 0
  CHECK_THROWS_AS(self_linked.validate(), std::invalid_argument);

  auto bad_sizes = pop;
  bad_sizes.venue_sizes = {2, 1, 3};
  CHECK_THROWS_AS(bad_sizes.validate(), std::invalid_argument);

  auto bad_y = pop;
  bad_y.y1 = Eigen::VectorXd::Zero(7);
  CHECK_THROWS_AS(bad_y.validate(), std::invalid_argument);
}

TEST_CASE("sampling every venue observes the whole frame") {
  const auto pop = small_explicit();
  lts::Rng rng(1);
  const auto s = lts::draw_sample(pop, 4, rng);
  CHECK(s.m_total() == 8);
  CHECK(s.r1() == 0);
  CHECK(s.r2() == 2);
  REQUIRE_NOTHROW(s.validate());
  const auto first = lts::observed_counts(s);
  for (int rep = 0; rep < 5; ++rep) {
    const auto again = lts::observed_counts(lts::draw_sample(pop, 4, rng));
    CHECK(again.in_venue.size() == first.in_venue.size());
    for (std::size_t i = 0; i < first.in_venue.size(); ++i) {
      REQUIRE(again.in_venue[i].size() == first.in_venue[i].size());
      for (std::size_t k = 0; k < first.in_venue[i].size(); ++k) {
        CHECK(again.in_venue[i][k].pattern == first.in_venue[i][k].pattern);
        CHECK(again.in_venue[i][k].count == first.in_venue[i][k].count);
      }
    }
    CHECK(again.r2 == first.r2);
  }
}

TEST_CASE("one outside person linked to the first and last venue") {
  lts::Population pop;
  pop.n_frame = 3;
  pop.venue_sizes = {1, 1, 1};
  pop.y1 = Eigen::VectorXd::Zero(3);
  pop.y2 = Eigen::VectorXd::Constant(1, 2.5);
  pop.links1 = lts::ExplicitLinks{lts::LinkMatrix::Zero(3, 3)};
  lts::LinkMatrix x2 = lts::LinkMatrix::Zero(3, 1);
  x2(0, 0) = 1;
  x2(2, 0) = 1;
  pop.links2 = lts::ExplicitLinks{x2};
  lts::Rng rng(3);
  const auto c = lts::observed_counts(lts::draw_sample(pop, 3, rng));
  REQUIRE(c.named2.size() == 1);
  CHECK(c.named2[0].pattern.to_string() == "101");
  CHECK(c.named2[0].count == 1);
  CHECK(c.r2 == 1);
  CHECK(c.named1.empty());
}

TEST_CASE("no links: only venue members with empty patterns") {
  const auto pop = generator_population(-1000.0);
  lts::Rng rng(8);
  const auto s = lts::draw_sample(pop, 3, rng);
  CHECK(s.r1() == 0);
  CHECK(s.r2() == 0);
  CHECK(static_cast<long>(s.persons.size()) == s.m_total());
  for (const auto& p : s.persons) {
    CHECK(p.stratum == lts::Stratum::InVenue);
    CHECK(p.pattern.size() == 2);
    CHECK(p.pattern.count_ones() == 0);
  }
  const auto c = lts::observed_counts(s);
  CHECK(c.named1.empty());
  CHECK(c.named2.empty());
  CHECK(c.m == 12);
}

TEST_CASE("sample structure invariants and recount oracle") {
  const auto pop = generator_population(-0.8, 12, 5, 40);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto rng = lts::substream(seed, {lts::stream::kSample, 0});
    const auto s = lts::draw_sample(pop, 4, rng);
    REQUIRE_NOTHROW(s.validate());
    CHECK(s.venue_sizes.size() == 4);
    for (std::size_t i = 1; i < s.selected_venues.size(); ++i) {
      CHECK(s.selected_venues[i - 1] < s.selected_venues[i]);
    }
    std::map<std::string, long> named1;
    std::map<std::string, long> named2;
    std::vector<std::map<std::string, long>> members(4);
    for (const auto& p : s.persons) {
      switch (p.stratum) {
        case lts::Stratum::InVenue:
          CHECK(p.pattern.size() == 3);
          ++members[static_cast<std::size_t>(p.venue)][p.pattern.to_string()];
          break;
        case lts::Stratum::BeyondFrameSample:
          CHECK(p.pattern.count_ones() >= 1);
          ++named1[p.pattern.to_string()];
          break;
        case lts::Stratum::OutsideFrame:
          CHECK(p.pattern.count_ones() >= 1);
          ++named2[p.pattern.to_string()];
          break;
      }
    }
    const auto c = lts::observed_counts(s);
    auto as_map = [](const std::vector<lts::PatternCount>& v) {
      std::map<std::string, long> m;
      for (const auto& pc : v) {
        m[pc.pattern.to_string()] += pc.count;
      }
      return m;
    };
    CHECK(as_map(c.named1) == named1);
    CHECK(as_map(c.named2) == named2);
    long total_members = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(as_map(c.in_venue[i]) == members[i]);
      for (const auto& [k, v] : members[i]) {
        total_members += v;
      }
    }
    CHECK(total_members == c.m);
    CHECK(c.r1 == s.r1());
    CHECK(c.r2 == s.r2());
  }
}

TEST_CASE("same seed gives the same sample") {
  const auto pop = generator_population(-0.5, 12, 5, 40);
  lts::Rng a(77);
  lts::Rng b(77);
  const auto s1 = lts::draw_sample(pop, 5, a);
  const auto s2 = lts::draw_sample(pop, 5, b);
  REQUIRE(s1.persons.size() == s2.persons.size());
  CHECK(s1.selected_venues == s2.selected_venues);
  for (std::size_t i = 0; i < s1.persons.size(); ++i) {
    CHECK(s1.persons[i].pattern == s2.persons[i].pattern);
    CHECK(s1.persons[i].person_id == s2.persons[i].person_id);
  }
}

TEST_CASE("sample size beyond the frame is rejected") {
  const auto pop = small_explicit();
  lts::Rng rng(1);
  CHECK_THROWS_AS(lts::draw_sample(pop, 5, rng), std::invalid_argument);
  CHECK_THROWS_AS(lts::draw_sample(pop, 0, rng), std::invalid_argument);
}
