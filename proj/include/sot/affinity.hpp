#pragma once

// Teammate-preference encoding, affinity graph construction and team
// partitioning. Everything here is a pure function of its arguments.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "sot/ids.hpp"
#include "sot/rational.hpp"

namespace sot::affinity {

/// Directed preference weights a ballot can produce.
enum Weight : int {
  kLeavePrevious = 0,
  kNotChosen = 1,
  kChosen = 2,
  kStayWithPrevious = 3,
};

/// Upper bound on the roster accepted by brute_force_assign.
inline constexpr std::size_t kBruteForceMaxRoster = 12;

struct PreferenceBallot {
  UserId voter;
  std::optional<UserId> previous_teammate;
  std::optional<bool> stay_with_previous;  // present iff previous_teammate is
  std::vector<UserId> chosen;              // at most two, never voter or previous

  /// Throws Error(ballot_rejected) when a structural invariant is broken.
  void validate() const;

  friend bool operator==(const PreferenceBallot&, const PreferenceBallot&) = default;
};

/// Status-quo ballot used when a participant does not answer in time.
PreferenceBallot default_ballot(const UserId& voter, const std::optional<UserId>& previous_teammate);

struct DirectedWeightVector {
  UserId voter;
  std::map<UserId, int> weights;

  friend bool operator==(const DirectedWeightVector&, const DirectedWeightVector&) = default;
};

/// Complete undirected graph; edge weights are stored as integer half-units
/// (0..6), i.e. w(u->v) + w(v->u).
class AffinityGraph {
 public:
  AffinityGraph() = default;
  explicit AffinityGraph(std::vector<UserId> nodes);

  const std::vector<UserId>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  std::size_t index_of(const UserId& id) const;
  bool contains(const UserId& id) const { return index_.contains(id); }

  int halves(std::size_t i, std::size_t j) const { return halves_[i * nodes_.size() + j]; }
  void set_halves(std::size_t i, std::size_t j, int value);

  Rational edge_weight(std::size_t i, std::size_t j) const { return Rational(halves(i, j), 2); }
  Rational edge_weight(const UserId& u, const UserId& v) const { return edge_weight(index_of(u), index_of(v)); }

  friend bool operator==(const AffinityGraph& a, const AffinityGraph& b) {
    return a.nodes_ == b.nodes_ && a.halves_ == b.halves_;
  }

 private:
  std::vector<UserId> nodes_;
  std::map<UserId, std::size_t> index_;
  std::vector<int> halves_;
};

struct CandidateTeam {
  std::vector<UserId> members;
  Rational score;  // mean pairwise edge weight
};

/// How a user left over by the partition was placed.
struct ResidualPlacement {
  UserId user;
  TeamIndex team = 0;
  Rational mean_weight;  // mean edge weight from the user to the team it joined

  friend bool operator==(const ResidualPlacement&, const ResidualPlacement&) = default;
};

struct TeamAssignment {
  std::vector<std::vector<UserId>> teams;
  std::vector<ResidualPlacement> residual;

  std::optional<TeamIndex> team_of(const UserId& user) const;
  std::size_t member_count() const;

  friend bool operator==(const TeamAssignment&, const TeamAssignment&) = default;
};

DirectedWeightVector encode_ballot(const PreferenceBallot& ballot, std::span<const UserId> roster);

AffinityGraph build_affinity_graph(std::span<const DirectedWeightVector> vectors, std::span<const UserId> roster);

/// Mean pairwise edge weight of a member set (k >= 2).
Rational team_score(const AffinityGraph& graph, std::span<const std::size_t> members);
Rational team_score(const AffinityGraph& graph, std::span<const UserId> members);

/// Sum of team scores, the objective both assigners maximize.
Rational assignment_score(const AffinityGraph& graph, const TeamAssignment& assignment);

/// All C(n, k) member sets, best first. Equal scores keep lexicographic
/// order unless a tie seed is given, in which case they follow a seeded
/// permutation.
std::vector<CandidateTeam> enumerate_candidate_teams(const AffinityGraph& graph, int k,
                                                     std::optional<std::uint64_t> tie_seed = std::nullopt);

/// Repeatedly takes the best remaining candidate team and discards every
/// candidate that shares a member with it. Users left over when the roster
/// is not a multiple of k each join the formed team they have the highest
/// mean affinity to (recorded in TeamAssignment::residual).
TeamAssignment greedy_assign(const AffinityGraph& graph, int k, std::uint64_t seed);

/// Exact optimum of assignment_score over all partitions into size-k teams.
/// Among optimal partitions the lexicographically smallest one is returned.
TeamAssignment brute_force_assign(const AffinityGraph& graph, int k);

void to_json(nlohmann::json& j, const PreferenceBallot& ballot);
void from_json(const nlohmann::json& j, PreferenceBallot& ballot);
void to_json(nlohmann::json& j, const DirectedWeightVector& vector);
void from_json(const nlohmann::json& j, DirectedWeightVector& vector);
void to_json(nlohmann::json& j, const AffinityGraph& graph);
void from_json(const nlohmann::json& j, AffinityGraph& graph);
void to_json(nlohmann::json& j, const TeamAssignment& assignment);
void from_json(const nlohmann::json& j, TeamAssignment& assignment);
void to_json(nlohmann::json& j, const CandidateTeam& team);

}  // namespace sot::affinity
