#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "sot/error.hpp"
#include "sot/session/types.hpp"

namespace sot::session {

// ---------------------------------------------------------------------------
// Inputs. Each maps 1:1 onto a client action and onto an input record in
// the event log.

struct Register {
  std::string username;
};
struct SubmitQuestionnaire {
  UserId user;
  nlohmann::json answers = nlohmann::json::object();
};
struct SubmitSample {
  UserId user;
  std::string text;
};
struct SubmitBallot {
  UserId user;
  std::optional<bool> stay;
  std::vector<UserId> chosen;
};
struct SubmitEdit {
  UserId user;
  TeamIndex team = 0;
  EditKind kind = EditKind::insert;
  std::int64_t position = 0;
  std::string text;
  std::int64_t length = 0;
  std::optional<std::uint64_t> base_revision;  // defaults to the current revision
};
struct SendChat {
  UserId user;
  TeamIndex team = 0;
  std::string text;
};
struct SubmitRating {
  UserId user;
  PeerRating rating;  // rater and round are taken from user and the session
};
struct SubmitStoryVote {
  UserId user;
  TeamIndex team = 0;
};
struct Leave {
  UserId user;
};
struct Tick {};

using Command = std::variant<Register, SubmitQuestionnaire, SubmitSample, SubmitBallot, SubmitEdit, SendChat,
                             SubmitRating, SubmitStoryVote, Leave, Tick>;

std::string_view action_name(const Command& command);
nlohmann::json command_to_json(const Command& command);
/// Parses the input part of a record or wire payload for `action`.
/// Throws Error(malformed) when the payload does not match the schema.
Command command_from_json(std::string_view action, const nlohmann::json& payload);

// ---------------------------------------------------------------------------

/// One line of the append-only event log.
struct LogRecord {
  std::uint64_t seq = 0;  // server_order
  std::string type;
  std::string session;
  int round = 0;
  Phase phase = Phase::lobby;
  Millis at{0};
  nlohmann::json payload = nlohmann::json::object();

  nlohmann::json to_json() const;
  static LogRecord from_json(const nlohmann::json& j);
  std::string to_line() const { return to_json().dump(); }

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

inline constexpr int kLogVersion = 1;

/// True for records that carry an externally supplied input (replayed) as
/// opposed to records derived by the engine.
bool is_input_record(std::string_view type);

struct Outcome {
  bool accepted = false;
  std::uint64_t server_order = 0;  // seq of the input record (0 when not logged)
  std::optional<UserId> user;      // id assigned by Register
  std::optional<ErrorCode> error;
  std::string message;
};

/// Deterministic state machine for one session. All inputs, including timer
/// ticks, go through apply(); every effect is appended to the event log.
/// Not thread-safe: callers funnel a session's inputs through one queue.
class SessionEngine {
 public:
  SessionEngine(std::string session_id, SessionConfig config);

  Outcome apply(const Command& command, Millis now);

  /// Fires every timer due at or before `now`. Throws Error(lifecycle_error)
  /// once the session is finalized or aborted.
  void advance(Millis now);

  /// Explicit finalize; the engine finalizes by itself when the final
  /// questionnaire closes, so this only succeeds in hand-driven states.
  FinalReport finalize();

  const SessionState& state() const noexcept { return state_; }
  const std::vector<LogRecord>& log() const noexcept { return log_; }
  const std::string& id() const noexcept { return state_.session_id; }

  /// Next instant at which advance() would change something.
  std::optional<Millis> next_timer() const;
  bool finished() const noexcept { return state_.finalized || state_.phase == Phase::aborted; }

 private:
  LogRecord& emit(std::string type, nlohmann::json payload);
  void reject_unlogged(Outcome& out, ErrorCode code, std::string message) const;

  void run_timers(Millis now);
  bool fire_next_timer(Millis now);
  void enter_phase(Phase phase, Millis at);
  void leave_phase(Millis at);
  void check_completion(Millis at);
  bool phase_complete() const;
  Phase phase_after(Phase phase) const;

  void admit(const GateDecision& decision);
  void start_round();
  void form_teams();
  void close_selection();
  void close_voting();

  UserId handle(const Register& c, Outcome& out);
  void handle(const SubmitQuestionnaire& c);
  void handle(const SubmitSample& c);
  nlohmann::json handle(const SubmitBallot& c);
  nlohmann::json handle(const SubmitEdit& c);
  void handle(const SendChat& c);
  nlohmann::json handle(const SubmitRating& c);
  void handle(const SubmitStoryVote& c);
  void handle(const Leave& c);

  void require_phase(std::initializer_list<Phase> phases, std::string_view action) const;
  void require_active(const UserId& user) const;

  SessionState state_;
  std::vector<LogRecord> log_;
  std::uint64_t next_seq_ = 1;
};

/// Rebuilds a session by feeding the input records of `log` to a fresh
/// engine. The regenerated log can then be compared with the original.
SessionEngine replay_inputs(std::span<const LogRecord> log);

}  // namespace sot::session
