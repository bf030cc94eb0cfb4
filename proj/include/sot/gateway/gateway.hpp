#pragma once

// Transport-independent gateway: routes client messages into per-session
// engines, persists every record before fanning out its projection, and
// tracks which connection speaks for which user.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "sot/gateway/log_store.hpp"
#include "sot/gateway/protocol.hpp"
#include "sot/rng.hpp"
#include "sot/session/engine.hpp"

namespace sot::gateway {

/// One client connection. send() may be called from any thread and must not
/// call back into the Gateway.
class ClientLink {
 public:
  virtual ~ClientLink() = default;
  virtual void send(const std::string& text) = 0;
};

/// In-process link that queues outgoing text; used by agents and tests.
class LoopbackLink : public ClientLink {
 public:
  void send(const std::string& text) override;
  std::vector<std::string> drain();
  std::vector<ServerEvent> drain_events();
  bool empty() const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> inbox_;
};

struct GatewayOptions {
  session::SessionConfig session;   // template for sessions created on demand
  std::filesystem::path log_dir;    // empty: keep logs in memory only
  bool durable = false;             // fsync after every append
  session::Millis leave_grace{60'000};  // disconnected this long -> leave
  std::optional<std::uint64_t> token_seed;  // deterministic tokens (tests, sims)
  std::string session_prefix = "s";
};

class Gateway {
 public:
  explicit Gateway(GatewayOptions options);
  ~Gateway();

  /// Creates a session whose clock starts at `now`; returns its id.
  std::string create_session(std::optional<std::string> id, std::optional<session::SessionConfig> config,
                             session::Millis now);

  /// Processes one client message; replies and events go out via links.
  void handle(const std::shared_ptr<ClientLink>& link, std::string_view text, session::Millis now);
  void disconnect(const ClientLink* link, session::Millis now);

  /// Fires due timers (and grace-period leaves) in every session.
  void tick(session::Millis now);
  /// Earliest absolute instant at which tick() would change something.
  std::optional<session::Millis> next_timer() const;

  std::vector<std::string> session_ids() const;
  std::vector<session::LogRecord> log_of(const std::string& session) const;
  session::SessionState state_of(const std::string& session) const;
  bool finished(const std::string& session) const;
  std::optional<std::filesystem::path> log_path(const std::string& session) const;

 private:
  struct Host;
  struct Binding {
    std::string session;
    UserId user;
  };

  std::shared_ptr<Host> find(const std::string& session) const;
  std::shared_ptr<Host> open_lobby(session::Millis now);
  std::string issue_token(const std::string& session);
  void bind(const std::shared_ptr<ClientLink>& link, Host& host, const UserId& user);
  std::optional<Binding> binding_of(const ClientLink* link) const;

  void reply(ClientLink& link, const ServerEvent& event) const;
  /// Persist records appended since the last publish, then deliver them.
  void publish(Host& host);
  void deliver_missed(Host& host, const UserId& user, ClientLink& link, std::uint64_t after) const;

  GatewayOptions options_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Host>> sessions_;
  std::mutex lobby_mutex_;
  std::string open_lobby_;
  std::uint64_t created_ = 0;

  mutable std::mutex links_mutex_;
  std::map<const ClientLink*, Binding> bindings_;

  std::mutex token_mutex_;
  Rng token_rng_;
};

}  // namespace sot::gateway
