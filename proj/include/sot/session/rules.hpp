#pragma once

// Session rules as functions over SessionState. The engine sequences them
// and logs their effects; they are exposed separately so each rule can be
// exercised on hand-built states.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>

#include "sot/session/types.hpp"

namespace sot::session {

inline constexpr std::string_view kRoundSeparator = "\n\n";

/// The previous-round teammate whose slot a ballot for `round` refers to:
/// the first other still-active member of the user's team in round - 1.
std::optional<UserId> previous_teammate(const SessionState& state, const UserId& user, int round);

/// Seeded shuffle-and-chunk partition used by the Placebo and No-Agency
/// conditions. Leftovers (only possible when the roster is not a multiple
/// of k) join teams in order.
affinity::TeamAssignment random_teams(std::span<const UserId> roster, int k, std::uint64_t seed);

struct Formation {
  affinity::TeamAssignment teams;
  std::vector<UserId> roster;
  std::string method;  // "greedy" or "fixed_random"
  std::uint64_t seed = 0;
  bool ballots_ignored = false;
};

/// Teams for state.round. SOT runs the greedy matcher over the encoded
/// ballots (missing voters get the default ballot); Placebo and No-Agency
/// always return the seeded round-1 partition of the admitted roster.
Formation form_round_teams(const SessionState& state, std::span<const affinity::PreferenceBallot> ballots);

/// Profile as shown to `viewer` during `round` (default: the current round).
/// Rating fields appear from round 2 and only use ratings from earlier rounds.
ProfileView build_profile_view(const UserId& viewer, const UserId& target, const SessionState& state,
                               int round = 0);

/// Validates and stores a rating for the current round, replacing an
/// earlier one from the same rater for the same ratee.
void record_peer_rating(SessionState& state, PeerRating rating);

/// Winner = most votes; ties (including nobody voting) are broken by a
/// seeded uniform pick among the tied teams.
TallyResult tally_story_votes(const std::map<UserId, TeamIndex>& votes, std::size_t team_count, std::uint64_t seed);

/// Appends the winner's canonical text to the main story. Returns false when
/// the fragment was empty.
bool append_winning_story(SessionState& state, TeamIndex winner);

/// Pays the winning team of the current round. A second call for the same
/// round throws Error(idempotency_error).
void settle_rewards(SessionState& state, TeamIndex winner);

/// Wins descending, then username ascending.
std::vector<LeaderboardEntry> leaderboard(const SessionState& state);

/// Closes the session. Requires every round to be complete and the final
/// questionnaire closed; throws Error(lifecycle_error) otherwise or when
/// already finalized.
FinalReport finalize_session(SessionState& state, std::uint64_t last_server_order);

}  // namespace sot::session
