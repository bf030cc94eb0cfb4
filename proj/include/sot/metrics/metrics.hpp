#pragma once

// Offline analysis of session event logs.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sot/affinity.hpp"
#include "sot/rational.hpp"
#include "sot/session/engine.hpp"

namespace sot::metrics {

using session::Millis;

// ---------------------------------------------------------------------------
// Log access

/// Facts about one session pulled out of its records.
struct SessionLog {
  std::string id;
  session::SessionConfig config;
  std::vector<session::LogRecord> records;
  bool finalized = false;
  bool aborted = false;

  struct Round {
    int index = 0;
    std::vector<UserId> roster;
    affinity::TeamAssignment teams;
    std::map<UserId, affinity::PreferenceBallot> ballots;  // effective (last submitted or defaulted)
    std::vector<std::vector<session::EditOperation>> ops;  // per team, in server order
    std::vector<std::size_t> chat_chars;                   // per team
    std::optional<TeamIndex> winner;
  };
  std::vector<Round> rounds;
};

/// Groups records by session (in first-appearance order) and extracts the
/// per-round facts. Throws Error(malformed) if a session lacks
/// session_created.
std::vector<SessionLog> load_sessions(std::span<const session::LogRecord> records);

// ---------------------------------------------------------------------------
// Turn taking

struct AuthorSequence {
  std::vector<UserId> sequence;
};

/// Maximal runs of consecutive operations by one author. With a gap
/// threshold, a pause longer than it also starts a new segment.
AuthorSequence author_sequence(std::span<const session::EditOperation> ops,
                               std::optional<Millis> gap_threshold = std::nullopt);

struct TurnTakingScore {
  std::vector<std::int64_t> encoding;  // A negative, B positive
  std::int64_t raw_sum = 0;
  std::size_t length = 0;
  Rational normalized;  // 2 * raw / (n (n + 1)), in [-1, 1]
  Rational per_length;  // raw / n
  std::optional<UserId> a_label;
};

/// The k-th segment of an author is encoded with magnitude k, negative for
/// A and positive for B. A is `a_label` if given, else the first author.
/// Throws Error(unsupported_arity) for three or more authors.
TurnTakingScore turn_taking_score(const AuthorSequence& seq, const std::optional<UserId>& a_label = std::nullopt);

// ---------------------------------------------------------------------------
// Affinity networks and clusters

struct AffinityOptions {
  bool directed = false;     // keep w(u->v) and w(v->u) apart
  bool allow_mixed = false;  // silence the mixed-condition warning
  std::optional<int> up_to_round;
};

struct RoundGraph {
  std::string session;
  int round = 0;
  affinity::AffinityGraph graph;
  std::vector<affinity::DirectedWeightVector> vectors;
};

struct CumulativeAffinityNetwork {
  bool directed = false;
  std::vector<std::string> nodes;  // "<session>/<user>" when several sessions, else the user id
  /// Undirected: key (i, j) with i < j holds the summed edge weight.
  /// Directed: key (i, j) holds the summed w(i->j).
  std::map<std::pair<std::size_t, std::size_t>, Rational> edges;
  std::vector<RoundGraph> rounds;
  std::vector<std::string> warnings;

  std::size_t index_of(const std::string& node) const;
  /// Summed symmetric weight between two nodes (for directed networks the
  /// in- and out-weights are added).
  Rational weight(std::size_t i, std::size_t j) const;
  Rational weight(const std::string& a, const std::string& b) const { return weight(index_of(a), index_of(b)); }
};

CumulativeAffinityNetwork cumulative_affinity(std::span<const SessionLog> logs, const AffinityOptions& options = {});

struct Clustering {
  std::vector<int> labels;  // per node, 0-based, numbered by first node of each cluster
  int count = 0;
  Rational threshold;  // mean edge weight used for pruning
};

/// Seeded asynchronous label propagation after dropping edges lighter than
/// the mean edge weight over all node pairs that shared a session.
Clustering detect_clusters(const CumulativeAffinityNetwork& net, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Stability and vote concentration

struct CohortRow {
  int rounds_together = 0;
  int teams = 0;
  int wins = 0;
};

struct VoteRow {
  std::string session;
  int round = 0;
  int prior_winners = 0;
  int non_winners = 0;
  int winner_vote_sum = 0;
  int non_winner_vote_sum = 0;
  Rational winner_votes;      // mean selection votes received
  Rational non_winner_votes;
  Rational winner_weight;     // mean encoded weight received
  Rational non_winner_weight;
};

struct StabilityWinTable {
  std::vector<CohortRow> cohorts;  // index 0 = together 1 round
  int teams = 0;
  int rounds = 0;  // rounds with a winner
  std::vector<VoteRow> votes;
  bool partial = false;
  std::vector<std::string> notes;

  /// Pooled means over the listed rows.
  static std::pair<Rational, Rational> pooled_votes(std::span<const VoteRow> rows);
};

StabilityWinTable stability_win_table(std::span<const SessionLog> logs);

// ---------------------------------------------------------------------------
// Reports

struct ReportOptions {
  std::uint64_t cluster_seed = 1;
  std::optional<Millis> gap_threshold;
  bool directed = false;
};

nlohmann::json build_report(std::span<const SessionLog> logs, const ReportOptions& options = {});

/// Plot-ready tables keyed by file stem (turn_taking, stability, votes, clusters).
std::map<std::string, std::string> csv_tables(const nlohmann::json& report);

/// Plain-text tables for terminals: turn taking per team and round,
/// stability/win cohorts, vote concentration and cluster counts.
std::string text_report(const nlohmann::json& report);

}  // namespace sot::metrics
