#include "sot/session/rules.hpp"

#include <algorithm>
#include <set>

#include "sot/error.hpp"
#include "sot/rng.hpp"

namespace sot::session {

std::optional<UserId> previous_teammate(const SessionState& state, const UserId& user, int round) {
  if (round < 2 || static_cast<std::size_t>(round - 1) > state.rounds.size()) return std::nullopt;
  const auto& prev = state.rounds[static_cast<std::size_t>(round - 2)].teams;
  const auto team = prev.team_of(user);
  if (!team) return std::nullopt;
  for (const auto& member : prev.teams[static_cast<std::size_t>(*team)]) {
    if (member != user && state.is_active(member)) return member;
  }
  return std::nullopt;
}

affinity::TeamAssignment random_teams(std::span<const UserId> roster, int k, std::uint64_t seed) {
  std::vector<UserId> order(roster.begin(), roster.end());
  Rng rng(seed);
  rng.shuffle(order);
  affinity::TeamAssignment out;
  const auto size = static_cast<std::size_t>(k);
  const std::size_t full = order.size() / size;
  for (std::size_t t = 0; t < full; ++t) {
    out.teams.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(t * size),
                           order.begin() + static_cast<std::ptrdiff_t>((t + 1) * size));
  }
  if (out.teams.empty() && !order.empty()) {
    out.teams.push_back(order);
    return out;
  }
  for (std::size_t i = full * size, t = 0; i < order.size(); ++i, ++t) {
    const auto team = t % out.teams.size();
    out.teams[team].push_back(order[i]);
    out.residual.push_back({order[i], static_cast<TeamIndex>(team), Rational(0)});
  }
  return out;
}

Formation form_round_teams(const SessionState& state, std::span<const affinity::PreferenceBallot> ballots) {
  const auto& config = state.config;
  Formation out;
  if (config.condition != Condition::sot) {
    out.seed = derive_seed(config.seed, "fixed_teams");
    out.roster = state.roster;
    out.teams = random_teams(state.roster, config.team_size, out.seed);
    out.method = "fixed_random";
    out.ballots_ignored = config.condition == Condition::placebo;
    return out;
  }

  out.method = "greedy";
  out.seed = derive_seed(config.seed, "greedy", static_cast<std::uint64_t>(state.round));
  out.roster = state.active_roster();
  const std::set<UserId> active(out.roster.begin(), out.roster.end());

  std::map<UserId, affinity::PreferenceBallot> by_voter;
  for (auto b : ballots) {
    if (!active.contains(b.voter)) {
      throw Error(ErrorCode::ballot_rejected, "ballot from non-roster user " + b.voter.str());
    }
    // Departures after submission drop out of the graph.
    if (b.previous_teammate && !active.contains(*b.previous_teammate)) {
      b.previous_teammate.reset();
      b.stay_with_previous.reset();
    }
    std::erase_if(b.chosen, [&](const UserId& c) { return !active.contains(c); });
    if (!by_voter.emplace(b.voter, b).second) {
      throw Error(ErrorCode::input_error, "duplicate ballot from " + b.voter.str());
    }
  }

  if (out.roster.size() < static_cast<std::size_t>(config.team_size)) {
    if (!out.roster.empty()) out.teams.teams.push_back(out.roster);
    return out;
  }

  std::vector<affinity::DirectedWeightVector> vectors;
  for (const auto& user : out.roster) {
    auto it = by_voter.find(user);
    const auto ballot = it != by_voter.end() ? it->second
                                             : affinity::default_ballot(user, previous_teammate(state, user, state.round));
    vectors.push_back(affinity::encode_ballot(ballot, out.roster));
  }
  const auto graph = affinity::build_affinity_graph(vectors, out.roster);
  out.teams = affinity::greedy_assign(graph, config.team_size, out.seed);
  return out;
}

ProfileView build_profile_view(const UserId& viewer, const UserId& target, const SessionState& state, int round) {
  if (round <= 0) round = state.round;
  if (!state.in_roster(viewer) || !state.in_roster(target)) {
    throw Error(ErrorCode::not_in_roster, "profile view between non-roster users");
  }
  if (viewer == target) throw Error(ErrorCode::self_view_error, "own profile is not a selection candidate");

  const auto& profile = state.profiles.at(target);
  ProfileView view{target, profile.username, profile.demographics, profile.writing_sample, false, {}, {}};
  if (round < 2) return view;

  view.ratings_shown = true;
  int axis_sum = 0;
  int count = 0;
  const PeerRating* own = nullptr;
  for (const auto& r : state.ratings) {
    if (r.ratee != target || r.round >= round) continue;
    axis_sum += r.skillfulness + r.collaboration + r.helpfulness;
    ++count;
    if (r.rater == viewer && (own == nullptr || r.round >= own->round)) own = &r;
  }
  if (count > 0) view.others_rating = Rational(axis_sum, 3 * count);
  if (own != nullptr) view.own_rating = own->axis_mean();
  return view;
}

void record_peer_rating(SessionState& state, PeerRating rating) {
  if (state.phase != Phase::peer_rating) throw Error(ErrorCode::stale_phase, "ratings are only accepted during peer_rating");
  rating.round = state.round;
  if (rating.rater == rating.ratee) throw Error(ErrorCode::relationship_error, "users cannot rate themselves");
  const auto rater_team = state.team_of(rating.rater);
  if (!rater_team || rater_team != state.team_of(rating.ratee)) {
    throw Error(ErrorCode::relationship_error, rating.ratee.str() + " was not a teammate of " + rating.rater.str());
  }
  for (int v : {rating.skillfulness, rating.collaboration, rating.helpfulness, rating.own_helpfulness}) {
    if (v < 1 || v > 5) throw Error(ErrorCode::validation_error, "ratings must be between 1 and 5");
  }
  auto same = [&](const PeerRating& r) {
    return r.round == rating.round && r.rater == rating.rater && r.ratee == rating.ratee;
  };
  auto it = std::find_if(state.ratings.begin(), state.ratings.end(), same);
  if (it != state.ratings.end()) {
    *it = std::move(rating);
  } else {
    state.ratings.push_back(std::move(rating));
  }
}

TallyResult tally_story_votes(const std::map<UserId, TeamIndex>& votes, std::size_t team_count, std::uint64_t seed) {
  if (team_count == 0) throw Error(ErrorCode::input_error, "cannot tally a round without teams");
  TallyResult out;
  out.seed = seed;
  out.counts.assign(team_count, 0);
  for (const auto& [voter, team] : votes) {
    if (team < 0 || static_cast<std::size_t>(team) >= team_count) {
      throw Error(ErrorCode::input_error, "vote for unknown team " + std::to_string(team));
    }
    ++out.counts[static_cast<std::size_t>(team)];
  }
  const int best = *std::max_element(out.counts.begin(), out.counts.end());
  std::vector<TeamIndex> tied;
  for (std::size_t t = 0; t < team_count; ++t)
    if (out.counts[t] == best) tied.push_back(static_cast<TeamIndex>(t));
  out.abstention_tie = best == 0;
  out.tie = tied.size() > 1;
  if (tied.size() == 1) {
    out.winner = tied.front();
  } else {
    Rng rng(seed);
    out.winner = rng.pick(tied);
  }
  return out;
}

bool append_winning_story(SessionState& state, TeamIndex winner) {
  const auto* round = state.current_round();
  if (round == nullptr || winner < 0 || static_cast<std::size_t>(winner) >= round->texts.size()) {
    throw Error(ErrorCode::input_error, "no such winning team");
  }
  const auto fragment = round->texts[static_cast<std::size_t>(winner)].text();
  state.main_story += kRoundSeparator;
  state.main_story += fragment;
  return !fragment.empty();
}

void settle_rewards(SessionState& state, TeamIndex winner) {
  auto* round = state.current_round();
  if (round == nullptr || winner < 0 || static_cast<std::size_t>(winner) >= round->teams.teams.size()) {
    throw Error(ErrorCode::input_error, "no such winning team");
  }
  if (round->settled) {
    throw Error(ErrorCode::idempotency_error, "round " + std::to_string(round->index) + " already settled");
  }
  for (const auto& member : round->teams.teams[static_cast<std::size_t>(winner)]) {
    auto& profile = state.profiles.at(member);
    profile.wins += 1;
    profile.reward_balance += state.config.win_bonus;
  }
  round->settled = true;
}

std::vector<LeaderboardEntry> leaderboard(const SessionState& state) {
  std::vector<LeaderboardEntry> out;
  for (const auto& user : state.roster) {
    const auto& p = state.profiles.at(user);
    out.push_back({user, p.username, p.wins, p.reward_balance});
  }
  std::sort(out.begin(), out.end(), [](const LeaderboardEntry& a, const LeaderboardEntry& b) {
    if (a.wins != b.wins) return a.wins > b.wins;
    if (a.username != b.username) return a.username < b.username;
    return a.user < b.user;
  });
  return out;
}

FinalReport finalize_session(SessionState& state, std::uint64_t last_server_order) {
  if (state.finalized) throw Error(ErrorCode::lifecycle_error, "session already finalized");
  const bool rounds_done = state.round == state.config.rounds && state.rounds.size() == static_cast<std::size_t>(state.config.rounds) &&
                           state.rounds.back().settled;
  if (!rounds_done || state.phase != Phase::leaderboard) {
    throw Error(ErrorCode::lifecycle_error, "cannot finalize before the last round and final questionnaire close");
  }
  FinalReport report{state.session_id, state.main_story, leaderboard(state), last_server_order};
  state.report = report;
  state.finalized = true;
  return report;
}

}  // namespace sot::session
