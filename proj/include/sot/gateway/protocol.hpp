#pragma once

// Wire protocol between clients and the gateway. Every message is one JSON
// object with a mandatory protocol version `v`.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sot/error.hpp"
#include "sot/ids.hpp"
#include "sot/session/engine.hpp"

namespace sot::gateway {

inline constexpr int kProtocolVersion = 1;

/// Client -> server.
///
///   {"v":1, "action":"submit_ballot", "session":"s1", "token":"...",
///    "payload":{...}, "client_ts":1234, "msg_id":7}
///
/// Actions: the engine inputs (register, submit_questionnaire, submit_sample,
/// submit_ballot, edit_op, chat, submit_rating, submit_story_vote, leave)
/// plus `resume` ({"last_ack": n}) to rebind a token after a reconnect.
/// `session` may be omitted on register to join the open lobby; `token` may
/// be omitted once the connection is bound.
struct ClientMessage {
  std::string action;
  std::optional<std::string> session;
  std::optional<std::string> token;
  nlohmann::json payload = nlohmann::json::object();
  std::optional<std::int64_t> client_ts;
  std::optional<std::int64_t> msg_id;

  /// Throws Error(malformed) for bad JSON, a missing/unsupported version or
  /// wrongly typed fields.
  static ClientMessage parse(std::string_view text);
  nlohmann::json to_json() const;
  std::string to_text() const { return to_json().dump(); }
};

/// Server -> client. `type` is one of the event types
///   phase_entered, roster_update, profile_views, teams_formed, text_state,
///   chat_delivered, reminder, winner_announced, leaderboard
/// or a reply: `ack` (carrying the input's server_order) or `error`.
struct ServerEvent {
  std::string type;
  std::string session;
  std::uint64_t server_order = 0;
  nlohmann::json payload = nlohmann::json::object();
  std::optional<std::int64_t> msg_id;  // replies only

  static ServerEvent parse(std::string_view text);
  nlohmann::json to_json() const;
  std::string to_text() const { return to_json().dump(); }

  bool is_reply() const { return type == "ack" || type == "error"; }
};

ServerEvent make_ack(std::string session, std::uint64_t server_order, std::optional<std::int64_t> msg_id,
                     nlohmann::json payload = nlohmann::json::object());
ServerEvent make_error(std::string session, ErrorCode code, std::string message, std::optional<std::int64_t> msg_id);

struct Delivery {
  UserId to;
  ServerEvent event;
};

/// What each user sees of one log record. Team-private content (text_state,
/// chat_delivered) only goes to members of that team; the other teams'
/// stories are revealed with phase_entered(story_voting). `state` must be a
/// state at or after the record (round data is kept, so the final state
/// works for historical records).
std::vector<Delivery> project(const session::LogRecord& record, const session::SessionState& state);

}  // namespace sot::gateway
