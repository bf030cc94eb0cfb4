#include "sot/session/types.hpp"

#include <algorithm>
#include <array>
#include <utility>

#include "sot/error.hpp"

namespace sot::session {

namespace {

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::validation_error, message); }

constexpr std::array<std::pair<Phase, std::string_view>, 12> kPhaseNames{{
    {Phase::lobby, "lobby"},
    {Phase::instructions, "instructions"},
    {Phase::demographics, "demographics"},
    {Phase::writing_sample, "writing_sample"},
    {Phase::teammate_selection, "teammate_selection"},
    {Phase::collaboration, "collaboration"},
    {Phase::peer_rating, "peer_rating"},
    {Phase::story_voting, "story_voting"},
    {Phase::winner_display, "winner_display"},
    {Phase::final_questionnaire, "final_questionnaire"},
    {Phase::leaderboard, "leaderboard"},
    {Phase::aborted, "aborted"},
}};

constexpr std::array<std::pair<Competency, std::string_view>, 4> kCompetencyNames{{
    {Competency::task_commitment, "task_commitment"},
    {Competency::work_strategy, "work_strategy"},
    {Competency::skill_similarity, "skill_similarity"},
    {Competency::personal_values, "personal_values"},
}};

std::int64_t ms(Millis m) { return m.count(); }

Millis read_ms(const nlohmann::json& j, const char* key, Millis fallback) {
  return j.contains(key) ? Millis(j.at(key).get<std::int64_t>()) : fallback;
}

}  // namespace

std::string_view to_string(Condition condition) {
  switch (condition) {
    case Condition::sot: return "SOT";
    case Condition::placebo: return "Placebo";
    case Condition::no_agency: return "NoAgency";
  }
  return "SOT";
}

Condition condition_from_string(std::string_view text) {
  if (text == "SOT") return Condition::sot;
  if (text == "Placebo") return Condition::placebo;
  if (text == "NoAgency") return Condition::no_agency;
  invalid("unknown condition '" + std::string(text) + "'");
}

std::string_view to_string(Phase phase) {
  for (const auto& [p, name] : kPhaseNames)
    if (p == phase) return name;
  return "lobby";
}

Phase phase_from_string(std::string_view text) {
  for (const auto& [p, name] : kPhaseNames)
    if (name == text) return p;
  throw Error(ErrorCode::malformed, "unknown phase '" + std::string(text) + "'");
}

std::string_view to_string(Competency competency) {
  for (const auto& [c, name] : kCompetencyNames)
    if (c == competency) return name;
  return "task_commitment";
}

Competency competency_from_string(std::string_view text) {
  for (const auto& [c, name] : kCompetencyNames)
    if (name == text) return c;
  invalid("unknown competency '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------

Millis PhaseSchedule::duration(Phase phase) const {
  switch (phase) {
    case Phase::instructions: return instructions;
    case Phase::demographics: return demographics;
    case Phase::writing_sample: return writing_sample;
    case Phase::teammate_selection: return teammate_selection;
    case Phase::collaboration: return collaboration;
    case Phase::peer_rating: return peer_rating;
    case Phase::story_voting: return story_voting;
    case Phase::winner_display: return winner_display;
    case Phase::final_questionnaire: return final_questionnaire;
    case Phase::lobby:
    case Phase::leaderboard:
    case Phase::aborted: return Millis{0};
  }
  return Millis{0};
}

void PhaseSchedule::validate() const {
  for (Millis d : {instructions, demographics, writing_sample, teammate_selection, collaboration,
                   wrapup_reminder_offset, peer_rating, story_voting, winner_display, final_questionnaire}) {
    if (d.count() <= 0) invalid("phase durations must be positive");
  }
  if (wrapup_reminder_offset >= collaboration) invalid("wrap-up reminder offset must be shorter than collaboration");
}

void SessionConfig::validate() const {
  const int k = team_size;
  if (k < 2) invalid("team_size must be at least 2");
  if (batch_min < 2 * k) invalid("batch_min must be at least twice the team size");
  if (batch_min % k != 0 || batch_max % k != 0) invalid("batch bounds must be multiples of the team size");
  if (batch_max < batch_min) invalid("batch_max must not be below batch_min");
  if (rounds < 1) invalid("rounds must be at least 1");
  if (base_reward < 0 || win_bonus < 0) invalid("rewards must be non-negative");
  if (max_wait.count() <= 0) invalid("max_wait must be positive");
  schedule.validate();
}

GateDecision gate_batch(std::span<const Registration> registrations, const SessionConfig& config, Millis now) {
  GateDecision decision;
  const auto max = static_cast<std::size_t>(config.batch_max);
  const auto k = static_cast<std::size_t>(config.team_size);
  if (registrations.size() >= max) {
    decision.status = GateDecision::Status::admitted;
    for (std::size_t i = 0; i < max; ++i) decision.admitted.push_back(registrations[i].user);
    decision.decided_at = registrations[max - 1].at;
    return decision;
  }
  if (now < config.max_wait) return decision;

  decision.decided_at = config.max_wait;
  std::size_t count = 0;
  while (count < registrations.size() && registrations[count].at <= config.max_wait) ++count;
  if (count < static_cast<std::size_t>(config.batch_min)) {
    decision.status = GateDecision::Status::aborted;
    return decision;
  }
  decision.status = GateDecision::Status::admitted;
  const std::size_t keep = count - count % k;
  for (std::size_t i = 0; i < count; ++i) {
    (i < keep ? decision.admitted : decision.excluded).push_back(registrations[i].user);
  }
  return decision;
}

// ---------------------------------------------------------------------------

bool SessionState::in_roster(const UserId& user) const {
  return std::find(roster.begin(), roster.end(), user) != roster.end();
}

std::vector<UserId> SessionState::active_roster() const {
  std::vector<UserId> out;
  for (const auto& u : roster)
    if (!departed.contains(u)) out.push_back(u);
  return out;
}

const RoundState* SessionState::current_round() const {
  if (round < 1 || static_cast<std::size_t>(round) > rounds.size()) return nullptr;
  return &rounds[static_cast<std::size_t>(round) - 1];
}

RoundState* SessionState::current_round() {
  return const_cast<RoundState*>(std::as_const(*this).current_round());
}

std::optional<TeamIndex> SessionState::team_of(const UserId& user) const {
  const auto* r = current_round();
  if (r == nullptr) return std::nullopt;
  return r->teams.team_of(user);
}

std::vector<PeerRating> SessionState::ratings_received(const UserId& user) const {
  std::vector<PeerRating> out;
  for (const auto& r : ratings)
    if (r.ratee == user) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const PhaseSchedule& s) {
  j = nlohmann::json{{"instructions_ms", ms(s.instructions)},
                     {"demographics_ms", ms(s.demographics)},
                     {"writing_sample_ms", ms(s.writing_sample)},
                     {"teammate_selection_ms", ms(s.teammate_selection)},
                     {"collaboration_ms", ms(s.collaboration)},
                     {"wrapup_reminder_offset_ms", ms(s.wrapup_reminder_offset)},
                     {"peer_rating_ms", ms(s.peer_rating)},
                     {"story_voting_ms", ms(s.story_voting)},
                     {"winner_display_ms", ms(s.winner_display)},
                     {"final_questionnaire_ms", ms(s.final_questionnaire)}};
}

void from_json(const nlohmann::json& j, PhaseSchedule& s) {
  const PhaseSchedule d;
  s.instructions = read_ms(j, "instructions_ms", d.instructions);
  s.demographics = read_ms(j, "demographics_ms", d.demographics);
  s.writing_sample = read_ms(j, "writing_sample_ms", d.writing_sample);
  s.teammate_selection = read_ms(j, "teammate_selection_ms", d.teammate_selection);
  s.collaboration = read_ms(j, "collaboration_ms", d.collaboration);
  s.wrapup_reminder_offset = read_ms(j, "wrapup_reminder_offset_ms", d.wrapup_reminder_offset);
  s.peer_rating = read_ms(j, "peer_rating_ms", d.peer_rating);
  s.story_voting = read_ms(j, "story_voting_ms", d.story_voting);
  s.winner_display = read_ms(j, "winner_display_ms", d.winner_display);
  s.final_questionnaire = read_ms(j, "final_questionnaire_ms", d.final_questionnaire);
}

void to_json(nlohmann::json& j, const SessionConfig& c) {
  j = nlohmann::json{{"condition", to_string(c.condition)},
                     {"batch_min", c.batch_min},
                     {"batch_max", c.batch_max},
                     {"rounds", c.rounds},
                     {"team_size", c.team_size},
                     {"base_reward", c.base_reward},
                     {"win_bonus", c.win_bonus},
                     {"phase_schedule", c.schedule},
                     {"seed", c.seed},
                     {"max_wait_ms", ms(c.max_wait)},
                     {"seed_story", c.seed_story}};
}

void from_json(const nlohmann::json& j, SessionConfig& c) {
  const SessionConfig d;
  c.condition = condition_from_string(j.value("condition", std::string(to_string(d.condition))));
  c.batch_min = j.value("batch_min", d.batch_min);
  c.batch_max = j.value("batch_max", d.batch_max);
  c.rounds = j.value("rounds", d.rounds);
  c.team_size = j.value("team_size", d.team_size);
  c.base_reward = j.value("base_reward", d.base_reward);
  c.win_bonus = j.value("win_bonus", d.win_bonus);
  c.schedule = j.contains("phase_schedule") ? j.at("phase_schedule").get<PhaseSchedule>() : d.schedule;
  c.seed = j.value("seed", d.seed);
  c.max_wait = read_ms(j, "max_wait_ms", d.max_wait);
  c.seed_story = j.value("seed_story", d.seed_story);
}

void to_json(nlohmann::json& j, const PeerRating& r) {
  std::vector<std::string_view> shared;
  for (auto c : r.shared_competencies) shared.push_back(to_string(c));
  j = nlohmann::json{{"rater", r.rater},
                     {"ratee", r.ratee},
                     {"round", r.round},
                     {"skillfulness", r.skillfulness},
                     {"collaboration", r.collaboration},
                     {"helpfulness", r.helpfulness},
                     {"own_helpfulness", r.own_helpfulness},
                     {"shared_competencies", shared}};
}

void from_json(const nlohmann::json& j, PeerRating& r) {
  r = {};
  r.rater = j.value("rater", UserId());
  r.ratee = j.at("ratee").get<UserId>();
  r.round = j.value("round", 0);
  r.skillfulness = j.at("skillfulness").get<int>();
  r.collaboration = j.at("collaboration").get<int>();
  r.helpfulness = j.at("helpfulness").get<int>();
  r.own_helpfulness = j.at("own_helpfulness").get<int>();
  for (const auto& c : j.value("shared_competencies", nlohmann::json::array()))
    r.shared_competencies.insert(competency_from_string(c.get<std::string>()));
}

void to_json(nlohmann::json& j, const ProfileView& v) {
  j = nlohmann::json{{"user", v.user},
                     {"username", v.username},
                     {"demographics", v.demographics},
                     {"writing_sample", v.writing_sample},
                     {"ratings_shown", v.ratings_shown}};
  if (v.others_rating) j["others_rating"] = v.others_rating->str();
  if (v.own_rating) j["own_rating"] = v.own_rating->str();
}

void to_json(nlohmann::json& j, const TallyResult& t) {
  j = nlohmann::json{{"winner", t.winner},
                     {"counts", t.counts},
                     {"tie", t.tie},
                     {"abstention_tie", t.abstention_tie},
                     {"seed", t.seed}};
}

void to_json(nlohmann::json& j, const FinalReport& r) {
  nlohmann::json board = nlohmann::json::array();
  for (const auto& e : r.leaderboard) {
    board.push_back(
        {{"user", e.user}, {"username", e.username}, {"wins", e.wins}, {"reward_balance", e.reward_balance}});
  }
  j = nlohmann::json{{"session_id", r.session_id},
                     {"final_story", r.final_story},
                     {"leaderboard", std::move(board)},
                     {"last_server_order", r.last_server_order}};
}

void from_json(const nlohmann::json& j, FinalReport& r) {
  r = {};
  r.session_id = j.at("session_id").get<std::string>();
  r.final_story = j.at("final_story").get<std::string>();
  r.last_server_order = j.at("last_server_order").get<std::uint64_t>();
  for (const auto& e : j.at("leaderboard")) {
    r.leaderboard.push_back({e.at("user").get<UserId>(), e.at("username").get<std::string>(), e.at("wins").get<int>(),
                             e.at("reward_balance").get<int>()});
  }
}

namespace {

nlohmann::json round_to_json(const RoundState& r) {
  nlohmann::json ballots = nlohmann::json::array();
  for (const auto& [voter, b] : r.ballots) ballots.push_back(b);
  nlohmann::json texts = nlohmann::json::array();
  for (const auto& t : r.texts) texts.push_back({{"text", t.text()}, {"operations", t.operations()}});
  nlohmann::json chats = nlohmann::json::array();
  for (const auto& team_chat : r.chats) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : team_chat) {
      messages.push_back({{"from", m.from}, {"text", m.text}, {"t_ms", m.at.count()}, {"server_order", m.server_order}});
    }
    chats.push_back(std::move(messages));
  }
  nlohmann::json votes = nlohmann::json::object();
  for (const auto& [voter, team] : r.story_votes) votes[voter.str()] = team;
  nlohmann::json j{{"index", r.index},
                   {"roster", r.roster},
                   {"teams", r.teams},
                   {"formation_method", r.formation_method},
                   {"formation_seed", r.formation_seed},
                   {"ballots", std::move(ballots)},
                   {"defaulted_ballots", r.defaulted_ballots},
                   {"texts", std::move(texts)},
                   {"chats", std::move(chats)},
                   {"story_votes", std::move(votes)},
                   {"settled", r.settled}};
  j["tally"] = r.tally ? nlohmann::json(*r.tally) : nlohmann::json(nullptr);
  return j;
}

}  // namespace

void to_json(nlohmann::json& j, const SessionState& s) {
  nlohmann::json registrations = nlohmann::json::array();
  for (const auto& r : s.registrations) {
    registrations.push_back({{"user", r.user}, {"username", r.username}, {"t_ms", r.at.count()}});
  }
  nlohmann::json profiles = nlohmann::json::array();
  for (const auto& [id, p] : s.profiles) {
    profiles.push_back({{"user", p.user},
                        {"username", p.username},
                        {"demographics", p.demographics},
                        {"writing_sample", p.writing_sample},
                        {"final_answers", p.final_answers},
                        {"wins", p.wins},
                        {"reward_balance", p.reward_balance}});
  }
  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : s.rounds) rounds.push_back(round_to_json(r));
  j = nlohmann::json{{"session_id", s.session_id},
                     {"config", s.config},
                     {"phase", to_string(s.phase)},
                     {"round", s.round},
                     {"phase_started_ms", s.phase_started.count()},
                     {"deadline_ms", s.deadline.count()},
                     {"reminder_sent", s.reminder_sent},
                     {"clock_ms", s.clock.count()},
                     {"registrations", std::move(registrations)},
                     {"roster", s.roster},
                     {"excluded", s.excluded},
                     {"departed", s.departed},
                     {"phase_submissions", s.phase_submissions},
                     {"profiles", std::move(profiles)},
                     {"ratings", s.ratings},
                     {"rounds", std::move(rounds)},
                     {"main_story", s.main_story},
                     {"finalized", s.finalized}};
  j["reminder_at_ms"] = s.reminder_at ? nlohmann::json(s.reminder_at->count()) : nlohmann::json(nullptr);
  j["report"] = s.report ? nlohmann::json(*s.report) : nlohmann::json(nullptr);
}

}  // namespace sot::session
