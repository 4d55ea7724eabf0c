#include "lts/sampling.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lts {

double LinkGenerator::logit(int venue, int person) const {
  double v = mu + alpha[venue] + beta[person];
  if (!interacts.empty() && interacts[static_cast<std::size_t>(person)] != 0) {
    v += interaction[venue];
  }
  return v;
}

std::vector<int> Population::offsets() const {
  std::vector<int> off(venue_sizes.size() + 1, 0);
  std::partial_sum(venue_sizes.begin(), venue_sizes.end(), off.begin() + 1);
  return off;
}

double Population::link_probability(Portion k, int venue, int person) const {
  const LinkSource& src = k == Portion::U1 ? links1 : links2;
  if (const auto* e = std::get_if<ExplicitLinks>(&src)) {
    return static_cast<double>(e->x(venue, person));
  }
  return std::get<LinkGenerator>(src).prob(venue, person);
}

namespace {

void validate_links(const LinkSource& src, int N, int tau, const char* name) {
  const std::string who = std::string("Population: ") + name;
  if (const auto* e = std::get_if<ExplicitLinks>(&src)) {
    if (e->x.rows() != N || e->x.cols() != tau) {
      throw std::invalid_argument(who + " link matrix must be N x tau");
    }
    if ((e->x.array() > 1).any()) {
      throw std::invalid_argument(who + " link matrix must contain only 0/1");
    }
    return;
  }
  const auto& g = std::get<LinkGenerator>(src);
  if (g.alpha.size() != N || g.beta.size() != tau) {
    throw std::invalid_argument(who + " generator needs N venue effects and tau person effects");
  }
  if (!g.interacts.empty() &&
      (static_cast<int>(g.interacts.size()) != tau || g.interaction.size() != N)) {
    throw std::invalid_argument(who + " generator interaction sizes are inconsistent");
  }
}

}  // namespace

void Population::validate() const {
  if (n_frame < 1 || static_cast<int>(venue_sizes.size()) != n_frame) {
    throw std::invalid_argument("Population: venue_sizes must have n_frame entries");
  }
  if (std::any_of(venue_sizes.begin(), venue_sizes.end(), [](int m) { return m < 1; })) {
    throw std::invalid_argument("Population: venue sizes must be positive");
  }
  const long total = std::accumulate(venue_sizes.begin(), venue_sizes.end(), 0L);
  if (total != tau1()) {
    throw std::invalid_argument("Population: y1 length " + std::to_string(tau1()) +
                                " differs from sum of venue sizes " + std::to_string(total));
  }
  validate_links(links1, n_frame, tau1(), "x1");
  validate_links(links2, n_frame, tau2(), "x2");
  if (const auto* e = std::get_if<ExplicitLinks>(&links1)) {
    const auto off = offsets();
    for (int v = 0; v < n_frame; ++v) {
      for (int j = off[v]; j < off[v + 1]; ++j) {
        if (e->x(v, j) != 0) {
          throw std::invalid_argument("Population: x1 links person " + std::to_string(j) +
                                      " to own venue " + std::to_string(v));
        }
      }
    }
  }
}

const char* to_string(Stratum s) {
  switch (s) {
    case Stratum::InVenue:
      return "InVenue";
    case Stratum::BeyondFrameSample:
      return "BeyondFrameSample";
    case Stratum::OutsideFrame:
      return "OutsideFrame";
  }
  return "?";
}

long LtsSample::m_total() const {
  return std::accumulate(venue_sizes.begin(), venue_sizes.end(), 0L);
}

long LtsSample::r1() const {
  return std::count_if(persons.begin(), persons.end(),
                       [](const PersonRecord& p) { return p.stratum == Stratum::BeyondFrameSample; });
}

long LtsSample::r2() const {
  return std::count_if(persons.begin(), persons.end(),
                       [](const PersonRecord& p) { return p.stratum == Stratum::OutsideFrame; });
}

void LtsSample::validate() const {
  const int nv = n();
  if (nv < 1 || nv > n_frame) {
    throw std::invalid_argument("LtsSample: need 1 <= n <= N");
  }
  if (static_cast<int>(venue_sizes.size()) != nv) {
    throw std::invalid_argument("LtsSample: one size per selected venue required");
  }
  std::vector<int> members(static_cast<std::size_t>(nv), 0);
  for (std::size_t k = 0; k < persons.size(); ++k) {
    const auto& p = persons[k];
    const std::string where = "LtsSample: person " + std::to_string(k) + ": ";
    if (p.stratum == Stratum::InVenue) {
      if (p.venue < 0 || p.venue >= nv) {
        throw std::invalid_argument(where + "venue position out of range");
      }
      if (p.pattern.size() != static_cast<std::size_t>(nv - 1)) {
        throw std::invalid_argument(where + "venue member pattern must have length n - 1");
      }
      ++members[static_cast<std::size_t>(p.venue)];
    } else {
      if (p.pattern.size() != static_cast<std::size_t>(nv)) {
        throw std::invalid_argument(where + "named person pattern must have length n");
      }
      if (p.pattern.count_ones() < 1) {
        throw std::invalid_argument(where + "named person must be linked to some venue");
      }
    }
  }
  for (int i = 0; i < nv; ++i) {
    if (members[static_cast<std::size_t>(i)] != venue_sizes[static_cast<std::size_t>(i)]) {
      throw std::invalid_argument("LtsSample: venue " + std::to_string(i) + " lists " +
                                  std::to_string(members[static_cast<std::size_t>(i)]) +
                                  " members but has size " +
                                  std::to_string(venue_sizes[static_cast<std::size_t>(i)]));
    }
  }
}

namespace {

// Link draw for one (sampled venue, person) pair, consuming randomness only
// for generator populations.
bool linked(const LinkSource& src, int venue, int person, Rng& rng) {
  if (const auto* e = std::get_if<ExplicitLinks>(&src)) {
    return e->x(venue, person) != 0;
  }
  return bernoulli(rng, std::get<LinkGenerator>(src).prob(venue, person));
}

}  // namespace

LtsSample draw_sample(const Population& pop, int n, Rng& rng) {
  if (n < 1 || n > pop.n_frame) {
    throw std::invalid_argument("draw_sample: need 1 <= n <= N, got n = " + std::to_string(n) +
                                ", N = " + std::to_string(pop.n_frame));
  }
  LtsSample s;
  s.n_frame = pop.n_frame;
  s.selected_venues = srswor(pop.n_frame, n, rng);
  const auto off = pop.offsets();

  std::vector<int> position(static_cast<std::size_t>(pop.n_frame), -1);
  for (int i = 0; i < n; ++i) {
    const int v = s.selected_venues[static_cast<std::size_t>(i)];
    position[static_cast<std::size_t>(v)] = i;
    s.venue_sizes.push_back(pop.venue_sizes[static_cast<std::size_t>(v)]);
  }

  std::vector<std::uint8_t> bits;
  // Venue members, grouped by sampled venue.
  for (int i = 0; i < n; ++i) {
    const int v = s.selected_venues[static_cast<std::size_t>(i)];
    for (int j = off[v]; j < off[v + 1]; ++j) {
      bits.clear();
      for (int i2 = 0; i2 < n; ++i2) {
        if (i2 != i) {
          bits.push_back(linked(pop.links1, s.selected_venues[static_cast<std::size_t>(i2)], j, rng));
        }
      }
      s.persons.push_back({Stratum::InVenue, i, LinkPattern(bits), pop.y1[j], j});
    }
  }
  // U1 - S0.
  for (int v = 0; v < pop.n_frame; ++v) {
    if (position[static_cast<std::size_t>(v)] >= 0) {
      continue;
    }
    for (int j = off[v]; j < off[v + 1]; ++j) {
      bits.clear();
      bool any = false;
      for (int i = 0; i < n; ++i) {
        const bool l = linked(pop.links1, s.selected_venues[static_cast<std::size_t>(i)], j, rng);
        any = any || l;
        bits.push_back(l);
      }
      if (any) {
        s.persons.push_back({Stratum::BeyondFrameSample, -1, LinkPattern(bits), pop.y1[j], j});
      }
    }
  }
  // U2.
  for (int j = 0; j < pop.tau2(); ++j) {
    bits.clear();
    bool any = false;
    for (int i = 0; i < n; ++i) {
      const bool l = linked(pop.links2, s.selected_venues[static_cast<std::size_t>(i)], j, rng);
      any = any || l;
      bits.push_back(l);
    }
    if (any) {
      s.persons.push_back({Stratum::OutsideFrame, -1, LinkPattern(bits), pop.y2[j], j});
    }
  }
  return s;
}

namespace {

std::vector<PatternCount> flatten(const std::map<LinkPattern, long>& h) {
  std::vector<PatternCount> out;
  out.reserve(h.size());
  for (const auto& [p, c] : h) {
    out.push_back({p, c});
  }
  return out;
}

}  // namespace

ObservedCounts observed_counts(const LtsSample& sample) {
  ObservedCounts c;
  c.n = sample.n();
  c.n_frame = sample.n_frame;
  c.venue_sizes = sample.venue_sizes;
  c.m = sample.m_total();
  std::map<LinkPattern, long> h1;
  std::map<LinkPattern, long> h2;
  std::vector<std::map<LinkPattern, long>> hv(static_cast<std::size_t>(c.n));
  for (const auto& p : sample.persons) {
    switch (p.stratum) {
      case Stratum::InVenue:
        ++hv[static_cast<std::size_t>(p.venue)][p.pattern];
        break;
      case Stratum::BeyondFrameSample:
        ++h1[p.pattern];
        ++c.r1;
        break;
      case Stratum::OutsideFrame:
        ++h2[p.pattern];
        ++c.r2;
        break;
    }
  }
  c.named1 = flatten(h1);
  c.named2 = flatten(h2);
  for (const auto& h : hv) {
    c.in_venue.push_back(flatten(h));
  }
  return c;
}

}  // namespace lts
