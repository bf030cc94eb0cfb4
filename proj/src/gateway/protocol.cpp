#include "sot/gateway/protocol.hpp"

#include "sot/session/rules.hpp"

namespace sot::gateway {

namespace {

[[noreturn]] void malformed(const std::string& message) { throw Error(ErrorCode::malformed, message); }

nlohmann::json parse_object(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded()) malformed("message is not valid JSON");
  if (!j.is_object()) malformed("message must be a JSON object");
  if (!j.contains("v")) malformed("missing protocol version 'v'");
  if (!j["v"].is_number_integer() || j["v"].get<int>() != kProtocolVersion) {
    malformed("unsupported protocol version");
  }
  return j;
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    malformed(std::string("field '") + key + "' has the wrong type");
  }
}

using session::LogRecord;
using session::Phase;
using session::SessionState;

const session::RoundState* round_of(const SessionState& state, int round) {
  if (round < 1 || static_cast<std::size_t>(round) > state.rounds.size()) return nullptr;
  return &state.rounds[static_cast<std::size_t>(round - 1)];
}

nlohmann::json named(const SessionState& state, const std::vector<UserId>& users) {
  auto out = nlohmann::json::array();
  for (const auto& u : users) {
    auto it = state.profiles.find(u);
    std::string name;
    if (it != state.profiles.end()) {
      name = it->second.username;
    } else {
      for (const auto& r : state.registrations)
        if (r.user == u) name = r.username;
    }
    out.push_back({{"user", u}, {"username", name}});
  }
  return out;
}

std::vector<UserId> registered(const SessionState& state) {
  std::vector<UserId> out;
  for (const auto& r : state.registrations) out.push_back(r.user);
  return out;
}

}  // namespace

ClientMessage ClientMessage::parse(std::string_view text) {
  const auto j = parse_object(text);
  ClientMessage m;
  const auto action = optional_field<std::string>(j, "action");
  if (!action || action->empty()) malformed("missing 'action'");
  m.action = *action;
  m.session = optional_field<std::string>(j, "session");
  m.token = optional_field<std::string>(j, "token");
  if (j.contains("payload")) {
    if (!j["payload"].is_object()) malformed("payload must be an object");
    m.payload = j["payload"];
  }
  m.client_ts = optional_field<std::int64_t>(j, "client_ts");
  m.msg_id = optional_field<std::int64_t>(j, "msg_id");
  return m;
}

nlohmann::json ClientMessage::to_json() const {
  nlohmann::json j{{"v", kProtocolVersion}, {"action", action}, {"payload", payload}};
  if (session) j["session"] = *session;
  if (token) j["token"] = *token;
  if (client_ts) j["client_ts"] = *client_ts;
  if (msg_id) j["msg_id"] = *msg_id;
  return j;
}

ServerEvent ServerEvent::parse(std::string_view text) {
  const auto j = parse_object(text);
  ServerEvent e;
  try {
    e.type = j.at("type").get<std::string>();
    e.session = j.value("session", "");
    e.server_order = j.value("server_order", std::uint64_t{0});
    e.payload = j.value("payload", nlohmann::json::object());
  } catch (const nlohmann::json::exception&) {
    malformed("bad server event");
  }
  e.msg_id = optional_field<std::int64_t>(j, "msg_id");
  return e;
}

nlohmann::json ServerEvent::to_json() const {
  nlohmann::json j{{"v", kProtocolVersion},
                   {"type", type},
                   {"session", session},
                   {"server_order", server_order},
                   {"payload", payload}};
  if (msg_id) j["msg_id"] = *msg_id;
  return j;
}

ServerEvent make_ack(std::string session, std::uint64_t server_order, std::optional<std::int64_t> msg_id,
                     nlohmann::json payload) {
  return ServerEvent{"ack", std::move(session), server_order, std::move(payload), msg_id};
}

ServerEvent make_error(std::string session, ErrorCode code, std::string message, std::optional<std::int64_t> msg_id) {
  return ServerEvent{"error", std::move(session), 0, {{"code", to_string(code)}, {"message", std::move(message)}}, msg_id};
}

std::vector<Delivery> project(const LogRecord& record, const SessionState& state) {
  std::vector<Delivery> out;
  auto event = [&](std::string type, nlohmann::json payload) {
    return ServerEvent{std::move(type), record.session, record.seq, std::move(payload), std::nullopt};
  };
  auto to_all = [&](const std::vector<UserId>& users, const ServerEvent& e) {
    for (const auto& u : users) out.push_back({u, e});
  };
  const auto active = state.active_roster();
  const auto& p = record.payload;

  if (record.type == "register") {
    to_all(registered(state), event("roster_update", {{"status", "waiting"},
                                                      {"registered", named(state, {UserId(p.at("user").get<std::string>())})},
                                                      {"batch_min", state.config.batch_min},
                                                      {"batch_max", state.config.batch_max}}));
  } else if (record.type == "roster_admitted") {
    const auto admitted = p.at("admitted").get<std::vector<UserId>>();
    const auto excluded = p.at("excluded").get<std::vector<UserId>>();
    to_all(registered(state), event("roster_update", {{"status", "admitted"},
                                                      {"admitted", named(state, admitted)},
                                                      {"excluded", named(state, excluded)},
                                                      {"condition", to_string(state.config.condition)},
                                                      {"rounds", state.config.rounds},
                                                      {"team_size", state.config.team_size},
                                                      {"base_reward", state.config.base_reward},
                                                      {"win_bonus", state.config.win_bonus}}));
  } else if (record.type == "leave") {
    to_all(active, event("roster_update", {{"status", "departed"}, {"departed", named(state, {UserId(p.at("user").get<std::string>())})}}));
  } else if (record.type == "session_aborted") {
    to_all(registered(state), event("phase_entered", {{"phase", "aborted"}, {"round", 0}, {"reason", p.at("reason")}}));
  } else if (record.type == "phase_entered") {
    const auto phase = session::phase_from_string(p.at("phase").get<std::string>());
    nlohmann::json base = p;
    if (phase == Phase::collaboration) {
      // the prompt is the main story as it stood before this round's append
      std::string story = state.config.seed_story;
      for (int r = 1; r < record.round; ++r) {
        const auto* prior = round_of(state, r);
        if (prior == nullptr || !prior->tally) break;
        story += session::kRoundSeparator;
        story += prior->texts[static_cast<std::size_t>(prior->tally->winner)].text();
      }
      base["main_story"] = story;
    }
    if (phase == Phase::story_voting) {
      const auto* round = round_of(state, record.round);
      for (const auto& u : active) {
        auto payload = base;
        payload["stories"] = nlohmann::json::array();
        const auto own = round ? round->teams.team_of(u) : std::nullopt;
        for (std::size_t t = 0; round && t < round->texts.size(); ++t) {
          if (own && static_cast<std::size_t>(*own) == t) continue;
          payload["stories"].push_back({{"team", t}, {"text", round->texts[t].text()}});
        }
        out.push_back({u, event("phase_entered", std::move(payload))});
      }
    } else {
      to_all(active, event("phase_entered", base));
    }
    if (phase == Phase::teammate_selection) {
      for (const auto& viewer : active) {
        auto views = nlohmann::json::array();
        for (const auto& target : active) {
          if (target != viewer) views.push_back(session::build_profile_view(viewer, target, state, record.round));
        }
        nlohmann::json payload{{"round", record.round}, {"profiles", std::move(views)}};
        const auto prev = session::previous_teammate(state, viewer, record.round);
        payload["previous_teammate"] = prev ? nlohmann::json(*prev) : nlohmann::json(nullptr);
        out.push_back({viewer, event("profile_views", std::move(payload))});
      }
    }
  } else if (record.type == "teams_formed") {
    const auto assignment = p.at("assignment").get<affinity::TeamAssignment>();
    for (std::size_t t = 0; t < assignment.teams.size(); ++t) {
      for (const auto& member : assignment.teams[t]) {
        if (!state.is_active(member)) continue;
        out.push_back({member, event("teams_formed", {{"round", record.round},
                                                      {"team", t},
                                                      {"members", named(state, assignment.teams[t])},
                                                      {"team_count", assignment.teams.size()}})});
      }
    }
  } else if (record.type == "edit_op" || record.type == "chat") {
    const auto* round = round_of(state, record.round);
    if (round == nullptr) return out;
    const auto team = p.at("team").get<TeamIndex>();
    if (team < 0 || static_cast<std::size_t>(team) >= round->teams.teams.size()) return out;
    nlohmann::json payload;
    if (record.type == "edit_op") {
      const auto& op = p.at("op");
      const auto revision = op.at("revision").get<std::uint64_t>();
      payload = {{"round", record.round},
                 {"team", team},
                 {"revision", revision},
                 {"text", round->texts[static_cast<std::size_t>(team)].text_at(revision)},
                 {"op", op}};
    } else {
      payload = {{"round", record.round}, {"team", team}, {"from", p.at("user")}, {"text", p.at("text")}};
    }
    const auto type = record.type == "edit_op" ? "text_state" : "chat_delivered";
    for (const auto& member : round->teams.teams[static_cast<std::size_t>(team)]) {
      if (state.is_active(member)) out.push_back({member, event(type, payload)});
    }
  } else if (record.type == "reminder") {
    to_all(active, event("reminder", p));
  } else if (record.type == "winner_announced") {
    auto payload = p;
    payload["bonus"] = state.config.win_bonus;
    to_all(active, event("winner_announced", payload));
  } else if (record.type == "session_finalized") {
    to_all(state.roster, event("leaderboard", p.at("report")));
  }
  return out;
}

}  // namespace sot::gateway
