#pragma once

#include "lts/model.hpp"
#include "lts/quadrature.hpp"
#include "lts/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lts {

using LinkMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// Explicit N x tau_k 0/1 link matrix: entry (i, j) says whether person j is
/// named by someone assigned to venue i.
struct ExplicitLinks {
  LinkMatrix x;
};

/// Logit-linear link generator covering both simulated population families:
///   p_ij = sigmoid(mu + alpha[i] + beta[j] + (interacts[j] ? interaction[i] : 0)).
/// With mu = 0 and no interaction this is the Rasch model with per-person beta;
/// with a two-valued beta and a venue-by-class interaction it is a latent-class model.
struct LinkGenerator {
  double mu = 0.0;
  Eigen::VectorXd alpha;              // N
  Eigen::VectorXd beta;               // tau_k
  std::vector<std::uint8_t> interacts;  // tau_k, or empty
  Eigen::VectorXd interaction;        // N, or empty

  double logit(int venue, int person) const;
  double prob(int venue, int person) const { return sigmoid(logit(venue, person)); }
};

using LinkSource = std::variant<ExplicitLinks, LinkGenerator>;

/// A hidden population: frame-covered portion U1 split into N venues (person j
/// of U1 belongs to venue v when it falls inside v's block of the cumulative
/// sizes) plus the uncovered portion U2.
struct Population {
  int n_frame = 0;
  std::vector<int> venue_sizes;
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;
  LinkSource links1;
  LinkSource links2;
  std::string generator_name;  // empty for explicit-matrix populations

  int tau1() const { return static_cast<int>(y1.size()); }
  int tau2() const { return static_cast<int>(y2.size()); }
  /// Cumulative sizes: venue v owns persons [offsets[v], offsets[v + 1]).
  std::vector<int> offsets() const;
  /// Link probability of person j (of portion k) to venue i; 0/1 for explicit links.
  double link_probability(Portion k, int venue, int person) const;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

enum class Stratum { InVenue, BeyondFrameSample, OutsideFrame };

const char* to_string(Stratum s);

struct PersonRecord {
  Stratum stratum = Stratum::InVenue;
  int venue = -1;  // position within the sampled venues for InVenue, else -1
  LinkPattern pattern;
  double y = 0.0;
  int person_id = -1;  // index within its portion when known (simulation only)
};

/// One realized sample. Persons are stored venue members first (grouped by
/// sampled venue, in venue order), then named U1 persons, then U2 persons.
struct LtsSample {
  int n_frame = 0;
  std::vector<int> selected_venues;  // frame indices, ascending
  std::vector<int> venue_sizes;      // m_i of the selected venues
  std::vector<PersonRecord> persons;

  int n() const { return static_cast<int>(selected_venues.size()); }
  FrameGeometry geometry() const { return {n(), n_frame}; }
  long m_total() const;
  long r1() const;
  long r2() const;

  void validate() const;
};

/// Draws the two-stage sample: SRSWOR of n venues, all their members, plus
/// every person outside them linked to at least one sampled venue.
LtsSample draw_sample(const Population& pop, int n, Rng& rng);

struct PatternCount {
  LinkPattern pattern;
  long count = 0;
};

/// Sufficient statistics consumed by the likelihood.
struct ObservedCounts {
  int n = 0;
  int n_frame = 0;
  std::vector<int> venue_sizes;
  long m = 0;
  long r1 = 0;
  long r2 = 0;
  std::vector<PatternCount> named1;                 // R_x^(1), x != 0, length n
  std::vector<PatternCount> named2;                 // R_x^(2)
  std::vector<std::vector<PatternCount>> in_venue;  // R_x^(A_i), length n - 1

  FrameGeometry geometry() const { return {n, n_frame}; }
};

ObservedCounts observed_counts(const LtsSample& sample);

}  // namespace lts
