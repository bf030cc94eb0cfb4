#include "sot/session/engine.hpp"

#include <algorithm>
#include <cstdio>

#include "sot/rng.hpp"
#include "sot/session/rules.hpp"
#include "sot/utf8.hpp"

namespace sot::session {

namespace {

constexpr std::size_t kMaxUsername = 64;
constexpr std::size_t kMaxSample = 20'000;
constexpr std::size_t kMaxChat = 2'000;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void malformed(const std::string& message) { throw Error(ErrorCode::malformed, message); }

const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) malformed(std::string("missing field '") + key + "'");
  return j.at(key);
}

template <typename T>
T get(const nlohmann::json& j, const char* key) {
  try {
    return field(j, key).get<T>();
  } catch (const nlohmann::json::exception&) {
    malformed(std::string("field '") + key + "' has the wrong type");
  }
}

void check_text(const std::string& text, std::size_t max, const char* what) {
  const auto len = utf8::length(text);
  if (len > max) throw Error(ErrorCode::validation_error, std::string(what) + " is too long");
}

std::string user_id_for(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "u%02zu", index);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

std::string_view action_name(const Command& command) {
  return std::visit(Overloaded{
                        [](const Register&) { return std::string_view("register"); },
                        [](const SubmitQuestionnaire&) { return std::string_view("submit_questionnaire"); },
                        [](const SubmitSample&) { return std::string_view("submit_sample"); },
                        [](const SubmitBallot&) { return std::string_view("submit_ballot"); },
                        [](const SubmitEdit&) { return std::string_view("edit_op"); },
                        [](const SendChat&) { return std::string_view("chat"); },
                        [](const SubmitRating&) { return std::string_view("submit_rating"); },
                        [](const SubmitStoryVote&) { return std::string_view("submit_story_vote"); },
                        [](const Leave&) { return std::string_view("leave"); },
                        [](const Tick&) { return std::string_view("tick"); },
                    },
                    command);
}

nlohmann::json command_to_json(const Command& command) {
  return std::visit(
      Overloaded{
          [](const Register& c) { return nlohmann::json{{"username", c.username}}; },
          [](const SubmitQuestionnaire& c) { return nlohmann::json{{"user", c.user}, {"answers", c.answers}}; },
          [](const SubmitSample& c) { return nlohmann::json{{"user", c.user}, {"text", c.text}}; },
          [](const SubmitBallot& c) {
            nlohmann::json j{{"user", c.user}, {"chosen", c.chosen}};
            if (c.stay) j["stay"] = *c.stay;
            return j;
          },
          [](const SubmitEdit& c) {
            nlohmann::json j{{"user", c.user}, {"team", c.team}, {"kind", to_string(c.kind)}, {"position", c.position}};
            if (c.kind == EditKind::insert) {
              j["text"] = c.text;
            } else {
              j["length"] = c.length;
            }
            if (c.base_revision) j["base_revision"] = *c.base_revision;
            return j;
          },
          [](const SendChat& c) { return nlohmann::json{{"user", c.user}, {"team", c.team}, {"text", c.text}}; },
          [](const SubmitRating& c) {
            nlohmann::json rating = c.rating;
            rating.erase("rater");
            rating.erase("round");
            return nlohmann::json{{"user", c.user}, {"rating", rating}};
          },
          [](const SubmitStoryVote& c) { return nlohmann::json{{"user", c.user}, {"team", c.team}}; },
          [](const Leave& c) { return nlohmann::json{{"user", c.user}}; },
          [](const Tick&) { return nlohmann::json::object(); },
      },
      command);
}

Command command_from_json(std::string_view action, const nlohmann::json& p) {
  if (!p.is_object()) malformed("payload must be an object");
  if (action == "register") return Register{get<std::string>(p, "username")};
  if (action == "tick") return Tick{};
  const auto user = UserId(get<std::string>(p, "user"));
  if (action == "submit_questionnaire") {
    const auto& answers = field(p, "answers");
    if (!answers.is_object()) malformed("answers must be an object");
    return SubmitQuestionnaire{user, answers};
  }
  if (action == "submit_sample") return SubmitSample{user, get<std::string>(p, "text")};
  if (action == "submit_ballot") {
    SubmitBallot c{user, std::nullopt, {}};
    if (p.contains("stay") && !p.at("stay").is_null()) c.stay = get<bool>(p, "stay");
    if (p.contains("chosen")) c.chosen = get<std::vector<UserId>>(p, "chosen");
    return c;
  }
  if (action == "edit_op") {
    SubmitEdit c;
    c.user = user;
    c.team = get<TeamIndex>(p, "team");
    const auto kind = get<std::string>(p, "kind");
    if (kind != "insert" && kind != "delete") malformed("edit kind must be insert or delete");
    c.kind = kind == "insert" ? EditKind::insert : EditKind::erase;
    c.position = get<std::int64_t>(p, "position");
    if (c.kind == EditKind::insert) {
      c.text = get<std::string>(p, "text");
    } else {
      c.length = get<std::int64_t>(p, "length");
    }
    if (p.contains("base_revision")) c.base_revision = get<std::uint64_t>(p, "base_revision");
    return c;
  }
  if (action == "chat") return SendChat{user, get<TeamIndex>(p, "team"), get<std::string>(p, "text")};
  if (action == "submit_rating") {
    SubmitRating c{user, {}};
    try {
      c.rating = field(p, "rating").get<PeerRating>();
    } catch (const nlohmann::json::exception&) {
      malformed("rating payload is incomplete");
    }
    c.rating.rater = user;
    c.rating.round = 0;
    return c;
  }
  if (action == "submit_story_vote") return SubmitStoryVote{user, get<TeamIndex>(p, "team")};
  if (action == "leave") return Leave{user};
  malformed("unknown action '" + std::string(action) + "'");
}

bool is_input_record(std::string_view type) {
  static constexpr std::string_view kInputs[] = {"register", "submit_questionnaire", "submit_sample",
                                                 "submit_ballot", "edit_op", "chat",
                                                 "submit_rating", "submit_story_vote", "leave",
                                                 "tick", "input_rejected"};
  return std::find(std::begin(kInputs), std::end(kInputs), type) != std::end(kInputs);
}

// ---------------------------------------------------------------------------
// Log records

nlohmann::json LogRecord::to_json() const {
  return nlohmann::json{{"v", kLogVersion}, {"seq", seq},           {"type", type},         {"session", session},
                        {"round", round},  {"phase", to_string(phase)}, {"t_ms", at.count()}, {"payload", payload}};
}

LogRecord LogRecord::from_json(const nlohmann::json& j) {
  try {
    if (j.at("v").get<int>() != kLogVersion) malformed("unsupported log version");
    LogRecord r;
    r.seq = j.at("seq").get<std::uint64_t>();
    r.type = j.at("type").get<std::string>();
    r.session = j.at("session").get<std::string>();
    r.round = j.at("round").get<int>();
    r.phase = phase_from_string(j.at("phase").get<std::string>());
    r.at = Millis(j.at("t_ms").get<std::int64_t>());
    r.payload = j.at("payload");
    return r;
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("bad log record: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Engine

SessionEngine::SessionEngine(std::string session_id, SessionConfig config) {
  config.validate();
  state_.session_id = std::move(session_id);
  state_.config = std::move(config);
  state_.deadline = state_.config.max_wait;
  state_.main_story = state_.config.seed_story;
  emit("session_created", {{"config", state_.config}});
}

LogRecord& SessionEngine::emit(std::string type, nlohmann::json payload) {
  LogRecord r;
  r.seq = next_seq_++;
  r.type = std::move(type);
  r.session = state_.session_id;
  r.round = state_.round;
  r.phase = state_.phase;
  r.at = state_.clock;
  r.payload = std::move(payload);
  log_.push_back(std::move(r));
  return log_.back();
}

void SessionEngine::reject_unlogged(Outcome& out, ErrorCode code, std::string message) const {
  out.accepted = false;
  out.error = code;
  out.message = std::move(message);
}

Outcome SessionEngine::apply(const Command& command, Millis now) {
  Outcome out;
  if (state_.finalized) {
    reject_unlogged(out, ErrorCode::lifecycle_error, "session is finalized");
    return out;
  }
  if (state_.phase == Phase::aborted) {
    reject_unlogged(out, ErrorCode::session_aborted, "session was aborted");
    return out;
  }
  now = std::max(now, state_.clock);
  if (std::holds_alternative<Tick>(command)) {
    advance(now);
    out.accepted = true;
    return out;
  }
  run_timers(now);
  if (finished()) {
    reject_unlogged(out, state_.finalized ? ErrorCode::lifecycle_error : ErrorCode::session_aborted,
                    "session closed before the input was processed");
    return out;
  }
  state_.clock = now;

  nlohmann::json payload = command_to_json(command);
  try {
    std::visit(Overloaded{
                   [&](const Register& c) { payload["user"] = handle(c, out); },
                   [&](const SubmitQuestionnaire& c) { handle(c); },
                   [&](const SubmitSample& c) { handle(c); },
                   [&](const SubmitBallot& c) { payload["ballot"] = handle(c); },
                   [&](const SubmitEdit& c) { payload["op"] = handle(c); },
                   [&](const SendChat& c) { handle(c); },
                   [&](const SubmitRating& c) { payload["rating"] = handle(c); },
                   [&](const SubmitStoryVote& c) { handle(c); },
                   [&](const Leave& c) { handle(c); },
                   [&](const Tick&) {},
               },
               command);
  } catch (const Error& e) {
    emit("input_rejected", {{"action", action_name(command)},
                            {"input", command_to_json(command)},
                            {"code", to_string(e.code())},
                            {"message", e.what()}});
    out.accepted = false;
    out.error = e.code();
    out.message = e.what();
    return out;
  }

  out.accepted = true;
  out.server_order = emit(std::string(action_name(command)), std::move(payload)).seq;

  if (std::holds_alternative<Register>(command)) {
    const auto decision = gate_batch(state_.registrations, state_.config, now);
    if (decision.status == GateDecision::Status::admitted) admit(decision);
  } else {
    check_completion(now);
  }
  return out;
}

void SessionEngine::advance(Millis now) {
  if (state_.finalized) throw Error(ErrorCode::lifecycle_error, "cannot advance a finalized session");
  if (state_.phase == Phase::aborted) throw Error(ErrorCode::lifecycle_error, "cannot advance an aborted session");
  run_timers(std::max(now, state_.clock));
}

std::optional<Millis> SessionEngine::next_timer() const {
  if (finished()) return std::nullopt;
  if (state_.phase == Phase::lobby) return state_.config.max_wait;
  if (state_.phase == Phase::collaboration && state_.reminder_at && !state_.reminder_sent) {
    return std::min(*state_.reminder_at, state_.deadline);
  }
  return state_.deadline;
}

void SessionEngine::run_timers(Millis now) {
  auto due = next_timer();
  if (!due || *due > now) return;
  state_.clock = now;
  emit("tick", nlohmann::json::object());
  while ((due = next_timer()) && *due <= now) {
    state_.clock = *due;
    fire_next_timer(*due);
  }
  state_.clock = now;
}

bool SessionEngine::fire_next_timer(Millis at) {
  if (state_.phase == Phase::lobby) {
    const auto decision = gate_batch(state_.registrations, state_.config, at);
    if (decision.status == GateDecision::Status::admitted) {
      admit(decision);
    } else {
      state_.phase = Phase::aborted;
      state_.deadline = Millis{0};
      emit("session_aborted", {{"reason", "batch below minimum at max wait"},
                               {"registered", state_.registrations.size()},
                               {"batch_min", state_.config.batch_min}});
    }
    return true;
  }
  if (state_.phase == Phase::collaboration && state_.reminder_at && !state_.reminder_sent &&
      *state_.reminder_at <= state_.deadline && *state_.reminder_at <= at) {
    state_.reminder_sent = true;
    emit("reminder", {{"round", state_.round}, {"remaining_ms", (state_.deadline - at).count()}});
    return true;
  }
  leave_phase(at);
  return true;
}

Phase SessionEngine::phase_after(Phase phase) const {
  const bool selection = state_.config.condition != Condition::no_agency;
  switch (phase) {
    case Phase::lobby: return Phase::instructions;
    case Phase::instructions: return Phase::demographics;
    case Phase::demographics: return Phase::writing_sample;
    case Phase::writing_sample: return selection ? Phase::teammate_selection : Phase::collaboration;
    case Phase::teammate_selection: return Phase::collaboration;
    case Phase::collaboration: return Phase::peer_rating;
    case Phase::peer_rating: return Phase::story_voting;
    case Phase::story_voting: return Phase::winner_display;
    case Phase::winner_display:
      if (state_.round >= state_.config.rounds) return Phase::final_questionnaire;
      return selection ? Phase::teammate_selection : Phase::collaboration;
    case Phase::final_questionnaire: return Phase::leaderboard;
    case Phase::leaderboard:
    case Phase::aborted: break;
  }
  throw Error(ErrorCode::lifecycle_error, "no phase follows " + std::string(to_string(phase)));
}

void SessionEngine::leave_phase(Millis at) {
  const Phase current = state_.phase;
  if (current == Phase::teammate_selection) close_selection();
  if (current == Phase::story_voting) close_voting();
  const Phase next = phase_after(current);
  const bool new_round = (current == Phase::writing_sample || current == Phase::winner_display) &&
                         (next == Phase::teammate_selection || next == Phase::collaboration);
  if (new_round) start_round();
  enter_phase(next, at);
}

void SessionEngine::enter_phase(Phase phase, Millis at) {
  state_.phase = phase;
  state_.phase_started = at;
  state_.deadline = at + state_.config.schedule.duration(phase);
  state_.phase_submissions.clear();
  state_.reminder_at.reset();
  state_.reminder_sent = false;
  if (phase == Phase::collaboration) {
    form_teams();
    state_.reminder_at = state_.deadline - state_.config.schedule.wrapup_reminder_offset;
  }
  emit("phase_entered", {{"phase", to_string(phase)},
                         {"round", state_.round},
                         {"started_ms", at.count()},
                         {"deadline_ms", state_.deadline.count()}});
  if (phase == Phase::leaderboard) {
    const auto report = finalize_session(state_, next_seq_);
    emit("session_finalized", {{"report", report}});
  }
}

void SessionEngine::check_completion(Millis at) {
  if (!finished() && phase_complete()) leave_phase(at);
}

bool SessionEngine::phase_complete() const {
  const auto active = state_.active_roster();
  auto everyone_submitted = [&] {
    return std::all_of(active.begin(), active.end(),
                       [&](const UserId& u) { return state_.phase_submissions.contains(u); });
  };
  switch (state_.phase) {
    case Phase::demographics:
    case Phase::writing_sample:
    case Phase::teammate_selection:
    case Phase::final_questionnaire: return everyone_submitted();
    case Phase::peer_rating: {
      const auto* round = state_.current_round();
      for (const auto& team : round->teams.teams) {
        for (const auto& rater : team) {
          if (!state_.is_active(rater)) continue;
          for (const auto& ratee : team) {
            if (ratee == rater || !state_.is_active(ratee)) continue;
            const bool rated = std::any_of(state_.ratings.begin(), state_.ratings.end(), [&](const PeerRating& r) {
              return r.round == state_.round && r.rater == rater && r.ratee == ratee;
            });
            if (!rated) return false;
          }
        }
      }
      return true;
    }
    case Phase::story_voting: {
      const auto* round = state_.current_round();
      if (round->teams.teams.size() < 2) return true;
      return std::all_of(active.begin(), active.end(),
                         [&](const UserId& u) { return round->story_votes.contains(u); });
    }
    default: return false;
  }
}

void SessionEngine::admit(const GateDecision& decision) {
  state_.roster = decision.admitted;
  state_.excluded = decision.excluded;
  for (const auto& reg : state_.registrations) {
    if (std::find(decision.admitted.begin(), decision.admitted.end(), reg.user) == decision.admitted.end()) continue;
    ParticipantProfile profile;
    profile.user = reg.user;
    profile.username = reg.username;
    profile.reward_balance = state_.config.base_reward;
    state_.profiles.emplace(reg.user, std::move(profile));
  }
  state_.clock = std::max(state_.clock, decision.decided_at);
  emit("roster_admitted", {{"admitted", decision.admitted}, {"excluded", decision.excluded}});
  enter_phase(Phase::instructions, state_.clock);
}

void SessionEngine::start_round() {
  state_.round += 1;
  RoundState round;
  round.index = state_.round;
  state_.rounds.push_back(std::move(round));
}

void SessionEngine::form_teams() {
  auto& round = *state_.current_round();
  std::vector<affinity::PreferenceBallot> ballots;
  for (const auto& [voter, ballot] : round.ballots) ballots.push_back(ballot);
  const auto formation = form_round_teams(state_, ballots);
  round.roster = formation.roster;
  round.teams = formation.teams;
  round.formation_method = formation.method;
  round.formation_seed = formation.seed;
  round.texts.clear();
  for (std::size_t t = 0; t < round.teams.teams.size(); ++t) round.texts.emplace_back(static_cast<TeamIndex>(t));
  round.chats.assign(round.teams.teams.size(), {});
  emit("teams_formed", {{"round", state_.round},
                        {"method", formation.method},
                        {"seed", formation.seed},
                        {"team_size", state_.config.team_size},
                        {"roster", formation.roster},
                        {"assignment", formation.teams},
                        {"ballots_ignored", formation.ballots_ignored}});
}

void SessionEngine::close_selection() {
  auto& round = *state_.current_round();
  for (const auto& user : state_.active_roster()) {
    if (round.ballots.contains(user)) continue;
    const auto ballot = affinity::default_ballot(user, previous_teammate(state_, user, state_.round));
    round.ballots.emplace(user, ballot);
    round.defaulted_ballots.insert(user);
    emit("ballot_defaulted", {{"ballot", ballot}});
  }
}

void SessionEngine::close_voting() {
  auto& round = *state_.current_round();
  const auto seed = derive_seed(state_.config.seed, "story_votes", static_cast<std::uint64_t>(state_.round));
  const auto tally = tally_story_votes(round.story_votes, round.teams.teams.size(), seed);
  round.tally = tally;
  const auto& members = round.teams.teams[static_cast<std::size_t>(tally.winner)];
  const auto story = round.texts[static_cast<std::size_t>(tally.winner)].text();
  emit("winner_announced", {{"round", state_.round},
                            {"winner", tally.winner},
                            {"counts", tally.counts},
                            {"tie", tally.tie},
                            {"abstention_tie", tally.abstention_tie},
                            {"seed", seed},
                            {"members", members},
                            {"story", story}});
  const bool non_empty = append_winning_story(state_, tally.winner);
  emit("story_appended", {{"round", state_.round}, {"team", tally.winner}, {"fragment", story}, {"empty", !non_empty}});
  settle_rewards(state_, tally.winner);
  nlohmann::json balances = nlohmann::json::object();
  for (const auto& m : members) balances[m.str()] = state_.profiles.at(m).reward_balance;
  emit("rewards_settled", {{"round", state_.round},
                           {"team", tally.winner},
                           {"members", members},
                           {"bonus", state_.config.win_bonus},
                           {"balances", std::move(balances)}});
}

FinalReport SessionEngine::finalize() {
  auto report = finalize_session(state_, next_seq_);
  emit("session_finalized", {{"report", report}});
  return report;
}

// ---------------------------------------------------------------------------
// Input handlers. Each validates completely before mutating state.

void SessionEngine::require_phase(std::initializer_list<Phase> phases, std::string_view action) const {
  if (std::find(phases.begin(), phases.end(), state_.phase) == phases.end()) {
    throw Error(ErrorCode::stale_phase,
                std::string(action) + " is not accepted during " + std::string(to_string(state_.phase)));
  }
}

void SessionEngine::require_active(const UserId& user) const {
  if (!state_.in_roster(user)) throw Error(ErrorCode::not_in_roster, user.str() + " is not in the session roster");
  if (state_.departed.contains(user)) throw Error(ErrorCode::not_in_roster, user.str() + " has left the session");
}

UserId SessionEngine::handle(const Register& c, Outcome& out) {
  require_phase({Phase::lobby}, "register");
  if (c.username.empty()) throw Error(ErrorCode::validation_error, "username must not be empty");
  check_text(c.username, kMaxUsername, "username");
  for (const auto& r : state_.registrations) {
    if (r.username == c.username) throw Error(ErrorCode::validation_error, "username '" + c.username + "' is taken");
  }
  const UserId user(user_id_for(state_.registrations.size() + 1));
  state_.registrations.push_back({user, c.username, state_.clock});
  out.user = user;
  return user;
}

void SessionEngine::handle(const SubmitQuestionnaire& c) {
  require_phase({Phase::demographics, Phase::final_questionnaire}, "submit_questionnaire");
  require_active(c.user);
  if (!c.answers.is_object()) throw Error(ErrorCode::validation_error, "answers must be an object");
  auto& profile = state_.profiles.at(c.user);
  (state_.phase == Phase::demographics ? profile.demographics : profile.final_answers) = c.answers;
  state_.phase_submissions.insert(c.user);
}

void SessionEngine::handle(const SubmitSample& c) {
  require_phase({Phase::writing_sample}, "submit_sample");
  require_active(c.user);
  check_text(c.text, kMaxSample, "writing sample");
  state_.profiles.at(c.user).writing_sample = c.text;
  state_.phase_submissions.insert(c.user);
}

nlohmann::json SessionEngine::handle(const SubmitBallot& c) {
  require_phase({Phase::teammate_selection}, "submit_ballot");
  require_active(c.user);
  affinity::PreferenceBallot ballot;
  ballot.voter = c.user;
  ballot.previous_teammate = previous_teammate(state_, c.user, state_.round);
  if (ballot.previous_teammate) {
    if (!c.stay) throw Error(ErrorCode::ballot_rejected, "a stay/leave decision about the previous teammate is required");
    ballot.stay_with_previous = c.stay;
  }
  for (const auto& chosen : c.chosen) {
    if (!state_.is_active(chosen)) {
      throw Error(ErrorCode::ballot_rejected, "ballot references unknown or departed user " + chosen.str());
    }
  }
  ballot.chosen = c.chosen;
  ballot.validate();
  auto& round = *state_.current_round();
  round.ballots[c.user] = ballot;
  state_.phase_submissions.insert(c.user);
  return ballot;
}

nlohmann::json SessionEngine::handle(const SubmitEdit& c) {
  require_phase({Phase::collaboration}, "edit_op");
  require_active(c.user);
  auto& round = *state_.current_round();
  const auto own = round.teams.team_of(c.user);
  if (!own || *own != c.team) {
    throw Error(ErrorCode::unauthorized, c.user.str() + " may only edit their own team's text");
  }
  auto& text = round.texts[static_cast<std::size_t>(c.team)];
  EditOperation op;
  op.team = c.team;
  op.author = c.user;
  op.kind = c.kind;
  op.requested_position = c.position;
  op.base_revision = c.base_revision.value_or(text.revision());
  op.text = c.text;
  op.length = c.length;
  op.server_order = next_seq_;
  op.at = state_.clock;
  if (op.kind == EditKind::insert) check_text(op.text, kMaxSample, "insert");
  return text.apply(std::move(op));
}

void SessionEngine::handle(const SendChat& c) {
  require_phase({Phase::collaboration}, "chat");
  require_active(c.user);
  auto& round = *state_.current_round();
  const auto own = round.teams.team_of(c.user);
  if (!own || *own != c.team) throw Error(ErrorCode::unauthorized, c.user.str() + " may only chat with their own team");
  if (c.text.empty()) throw Error(ErrorCode::validation_error, "empty chat message");
  check_text(c.text, kMaxChat, "chat message");
  round.chats[static_cast<std::size_t>(c.team)].push_back({c.user, c.text, state_.clock, next_seq_});
}

nlohmann::json SessionEngine::handle(const SubmitRating& c) {
  require_phase({Phase::peer_rating}, "submit_rating");
  require_active(c.user);
  PeerRating rating = c.rating;
  rating.rater = c.user;
  record_peer_rating(state_, rating);
  rating.round = state_.round;
  return rating;
}

void SessionEngine::handle(const SubmitStoryVote& c) {
  require_phase({Phase::story_voting}, "submit_story_vote");
  require_active(c.user);
  auto& round = *state_.current_round();
  if (c.team < 0 || static_cast<std::size_t>(c.team) >= round.teams.teams.size()) {
    throw Error(ErrorCode::validation_error, "no team " + std::to_string(c.team));
  }
  if (round.teams.team_of(c.user) == c.team) {
    throw Error(ErrorCode::validation_error, "users cannot vote for their own team's story");
  }
  round.story_votes[c.user] = c.team;
}

void SessionEngine::handle(const Leave& c) {
  if (state_.phase == Phase::lobby) throw Error(ErrorCode::stale_phase, "leave is not accepted before admission");
  require_active(c.user);
  state_.departed.insert(c.user);
}

SessionEngine replay_inputs(std::span<const LogRecord> log) {
  if (log.empty() || log.front().type != "session_created") malformed("log does not start with session_created");
  SessionConfig config;
  try {
    config = log.front().payload.at("config").get<SessionConfig>();
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("bad session config: ") + e.what());
  }
  SessionEngine engine(log.front().session, std::move(config));
  for (const auto& record : log.subspan(1)) {
    if (!is_input_record(record.type)) continue;
    if (record.type == "input_rejected") {
      engine.apply(command_from_json(get<std::string>(record.payload, "action"), field(record.payload, "input")),
                   record.at);
    } else {
      engine.apply(command_from_json(record.type, record.payload), record.at);
    }
  }
  return engine;
}

}  // namespace sot::session
