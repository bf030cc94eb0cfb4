#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sot/affinity.hpp"
#include "sot/ids.hpp"
#include "sot/rational.hpp"
#include "sot/session/shared_text.hpp"

namespace sot::session {

using Millis = std::chrono::milliseconds;

enum class Condition { sot, placebo, no_agency };

std::string_view to_string(Condition condition);
Condition condition_from_string(std::string_view text);

enum class Phase {
  lobby,
  instructions,
  demographics,
  writing_sample,
  teammate_selection,
  collaboration,
  peer_rating,
  story_voting,
  winner_display,
  final_questionnaire,
  leaderboard,
  aborted,
};

std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view text);

struct PhaseSchedule {
  Millis instructions{75'000};
  Millis demographics{60'000};
  Millis writing_sample{180'000};
  Millis teammate_selection{120'000};
  Millis collaboration{240'000};
  Millis wrapup_reminder_offset{30'000};
  Millis peer_rating{30'000};
  Millis story_voting{90'000};
  Millis winner_display{30'000};
  Millis final_questionnaire{120'000};

  /// Duration of a timed phase; zero for lobby/leaderboard/aborted.
  Millis duration(Phase phase) const;
  void validate() const;

  friend bool operator==(const PhaseSchedule&, const PhaseSchedule&) = default;
};

struct SessionConfig {
  Condition condition = Condition::sot;
  int batch_min = 6;
  int batch_max = 12;
  int rounds = 3;
  int team_size = 2;
  int base_reward = 5;
  int win_bonus = 5;
  PhaseSchedule schedule;
  std::uint64_t seed = 1;
  Millis max_wait{600'000};
  std::string seed_story =
      "The lighthouse keeper found a second set of footprints on the morning stairs, "
      "though nobody else had lived on the island for eleven years. She followed them up to the lamp room and";

  /// Throws Error(validation_error) describing the first violated constraint.
  void validate() const;

  friend bool operator==(const SessionConfig&, const SessionConfig&) = default;
};

// ---------------------------------------------------------------------------
// Batch gating

struct Registration {
  UserId user;
  std::string username;
  Millis at{0};

  friend bool operator==(const Registration&, const Registration&) = default;
};

struct GateDecision {
  enum class Status { waiting, admitted, aborted };
  Status status = Status::waiting;
  std::vector<UserId> admitted;
  std::vector<UserId> excluded;  // latest arrivals dropped to reach a multiple of the team size
  Millis decided_at{0};
};

/// Admits the batch once batch_max registrations exist, or at max_wait when
/// at least batch_min do; aborts at max_wait otherwise. `now` is measured
/// from session creation.
GateDecision gate_batch(std::span<const Registration> registrations, const SessionConfig& config, Millis now);

// ---------------------------------------------------------------------------
// Participants and ratings

enum class Competency { task_commitment, work_strategy, skill_similarity, personal_values };

std::string_view to_string(Competency competency);
Competency competency_from_string(std::string_view text);

struct PeerRating {
  UserId rater;
  UserId ratee;
  int round = 0;
  int skillfulness = 0;
  int collaboration = 0;
  int helpfulness = 0;
  int own_helpfulness = 0;
  std::set<Competency> shared_competencies;

  /// Mean of the three teammate axes.
  Rational axis_mean() const { return Rational(skillfulness + collaboration + helpfulness, 3); }

  friend bool operator==(const PeerRating&, const PeerRating&) = default;
};

struct ParticipantProfile {
  UserId user;
  std::string username;
  nlohmann::json demographics = nlohmann::json::object();
  std::string writing_sample;
  nlohmann::json final_answers = nlohmann::json::object();
  int wins = 0;
  int reward_balance = 0;

  friend bool operator==(const ParticipantProfile&, const ParticipantProfile&) = default;
};

struct ProfileView {
  UserId user;
  std::string username;
  nlohmann::json demographics;
  std::string writing_sample;
  bool ratings_shown = false;             // false in round 1
  std::optional<Rational> others_rating;  // mean over all axis values received
  std::optional<Rational> own_rating;     // viewer's latest rating of this user
};

// ---------------------------------------------------------------------------
// Rounds

struct ChatMessage {
  UserId from;
  std::string text;
  Millis at{0};
  std::uint64_t server_order = 0;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct TallyResult {
  TeamIndex winner = 0;
  std::vector<int> counts;  // votes per team
  bool tie = false;             // several teams shared the maximum
  bool abstention_tie = false;  // nobody voted
  std::uint64_t seed = 0;

  friend bool operator==(const TallyResult&, const TallyResult&) = default;
};

struct RoundState {
  int index = 0;  // 1-based
  std::vector<UserId> roster;  // active users when the teams were formed
  affinity::TeamAssignment teams;
  std::string formation_method;
  std::uint64_t formation_seed = 0;
  std::map<UserId, affinity::PreferenceBallot> ballots;
  std::set<UserId> defaulted_ballots;
  std::vector<SharedText> texts;
  std::vector<std::vector<ChatMessage>> chats;
  std::map<UserId, TeamIndex> story_votes;
  std::optional<TallyResult> tally;
  bool settled = false;

  friend bool operator==(const RoundState&, const RoundState&) = default;
};

struct LeaderboardEntry {
  UserId user;
  std::string username;
  int wins = 0;
  int reward_balance = 0;

  friend bool operator==(const LeaderboardEntry&, const LeaderboardEntry&) = default;
};

struct FinalReport {
  std::string session_id;
  std::string final_story;
  std::vector<LeaderboardEntry> leaderboard;
  std::uint64_t last_server_order = 0;

  friend bool operator==(const FinalReport&, const FinalReport&) = default;
};

struct SessionState {
  std::string session_id;
  SessionConfig config;
  Phase phase = Phase::lobby;
  int round = 0;
  Millis phase_started{0};
  Millis deadline{0};
  std::optional<Millis> reminder_at;
  bool reminder_sent = false;
  Millis clock{0};  // time of the latest processed input or timer

  std::vector<Registration> registrations;
  std::vector<UserId> roster;  // admitted, in arrival order
  std::vector<UserId> excluded;
  std::set<UserId> departed;
  std::set<UserId> phase_submissions;  // who answered in the current phase
  std::map<UserId, ParticipantProfile> profiles;
  std::vector<PeerRating> ratings;
  std::vector<RoundState> rounds;
  std::string main_story;
  std::optional<FinalReport> report;
  bool finalized = false;

  bool in_roster(const UserId& user) const;
  bool is_active(const UserId& user) const { return in_roster(user) && !departed.contains(user); }
  std::vector<UserId> active_roster() const;
  const RoundState* current_round() const;
  RoundState* current_round();
  std::optional<TeamIndex> team_of(const UserId& user) const;
  std::vector<PeerRating> ratings_received(const UserId& user) const;

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

void to_json(nlohmann::json& j, const PhaseSchedule& schedule);
void from_json(const nlohmann::json& j, PhaseSchedule& schedule);
void to_json(nlohmann::json& j, const SessionConfig& config);
void from_json(const nlohmann::json& j, SessionConfig& config);
void to_json(nlohmann::json& j, const PeerRating& rating);
void from_json(const nlohmann::json& j, PeerRating& rating);
void to_json(nlohmann::json& j, const ProfileView& view);
void to_json(nlohmann::json& j, const TallyResult& tally);
void to_json(nlohmann::json& j, const FinalReport& report);
void from_json(const nlohmann::json& j, FinalReport& report);
void to_json(nlohmann::json& j, const SessionState& state);

}  // namespace sot::session
