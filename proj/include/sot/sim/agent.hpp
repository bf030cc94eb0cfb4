#pragma once

// Scripted participant behaviour: ballots, story votes, ratings and text.
// Every decision is a pure function of its inputs and a seed.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sot/affinity.hpp"
#include "sot/ids.hpp"
#include "sot/rational.hpp"
#include "sot/rng.hpp"

namespace sot::sim {

enum class Strategy { play_to_win, profile_affinity, loyal, random };

inline constexpr Strategy kStrategies[] = {Strategy::play_to_win, Strategy::profile_affinity, Strategy::loyal,
                                           Strategy::random};

std::string_view to_string(Strategy strategy);
/// Accepts the snake_case names and the CamelCase spellings (PlayToWin, ...).
Strategy strategy_from_string(std::string_view text);

/// What an agent knows when the teammate-selection phase opens.
struct BallotContext {
  UserId self;
  int round = 1;
  std::vector<UserId> candidates;  // other active users, as listed in the profile views
  std::optional<UserId> previous_teammate;
  std::vector<UserId> last_winners;   // members of the latest winning team
  std::map<UserId, int> own_ratings;  // latest rating this agent gave each user
  std::vector<UserId> preferred;      // fixed targets of a ProfileAffinity agent
};

/// Always a ballot the engine accepts: at most two distinct candidates, never
/// self or the previous teammate, and a stay decision iff a previous teammate
/// exists.
affinity::PreferenceBallot agent_select_teammates(const BallotContext& context, Strategy strategy, std::uint64_t seed);

/// Seeded ranking of `candidates`; the first two become the fixed targets.
std::vector<UserId> pick_preferred(std::span<const UserId> candidates, std::uint64_t seed);

struct StoryCandidate {
  TeamIndex team = 0;
  std::size_t length = 0;  // code points
};

/// With probability `bias` the longest candidate (lowest team on ties),
/// otherwise a seeded uniform pick. Throws Error(input_error) when empty.
TeamIndex agent_vote_story(std::span<const StoryCandidate> candidates, double bias, std::uint64_t seed);

/// Axis value a non-loyal agent gives a teammate with the given share of the
/// team's inserted text: round(5 * share) clamped to 1..5.
int contribution_rating(const Rational& share);

/// Seeded word-list prose. `verbosity` is the mean number of words per call.
class TextGenerator {
 public:
  TextGenerator(std::uint64_t seed, int verbosity);
  std::string next();

 private:
  Rng rng_;
  int verbosity_;
  bool sentence_open_ = false;
};

}  // namespace sot::sim
