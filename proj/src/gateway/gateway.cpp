#include "sot/gateway/gateway.hpp"

#include <cstdio>
#include <random>

namespace sot::gateway {

using session::Millis;

void LoopbackLink::send(const std::string& text) {
  std::lock_guard lock(mutex_);
  inbox_.push_back(text);
}

std::vector<std::string> LoopbackLink::drain() {
  std::lock_guard lock(mutex_);
  return std::exchange(inbox_, {});
}

std::vector<ServerEvent> LoopbackLink::drain_events() {
  std::vector<ServerEvent> out;
  for (const auto& text : drain()) out.push_back(ServerEvent::parse(text));
  return out;
}

bool LoopbackLink::empty() const {
  std::lock_guard lock(mutex_);
  return inbox_.empty();
}

struct Gateway::Host {
  Host(std::string id, session::SessionConfig config, Millis created_at) : created(created_at), engine(std::move(id), std::move(config)) {}

  std::mutex mutex;
  Millis created;
  session::SessionEngine engine;
  std::unique_ptr<LogWriter> writer;
  std::size_t persisted = 0;
  std::size_t delivered = 0;
  std::map<std::string, UserId> tokens;
  std::map<UserId, std::weak_ptr<ClientLink>> links;
  std::map<UserId, Millis> disconnected_at;  // gateway clock

  Millis local(Millis now) const { return std::max(Millis{0}, now - created); }

  void persist() {
    const auto& log = engine.log();
    if (writer && persisted < log.size()) {
      writer->append(std::span(log).subspan(persisted));
    }
    persisted = log.size();
  }

  void fan_out() {
    const auto& log = engine.log();
    for (; delivered < log.size(); ++delivered) {
      for (const auto& d : project(log[delivered], engine.state())) {
        auto it = links.find(d.to);
        if (it == links.end()) continue;
        if (auto link = it->second.lock()) link->send(d.event.to_text());
      }
    }
  }
};

Gateway::Gateway(GatewayOptions options)
    : options_(std::move(options)), token_rng_(options_.token_seed.value_or(std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32))) {
  options_.session.validate();
}

Gateway::~Gateway() = default;

std::string Gateway::create_session(std::optional<std::string> id, std::optional<session::SessionConfig> config,
                                    Millis now) {
  std::unique_lock lock(sessions_mutex_);
  ++created_;
  const auto session_id = id.value_or(options_.session_prefix + std::to_string(created_));
  if (session_id.empty() || session_id.find_first_of("/\\:") != std::string::npos) {
    throw Error(ErrorCode::validation_error, "session ids must be non-empty and free of '/', '\\\\' and ':'");
  }
  if (sessions_.contains(session_id)) throw Error(ErrorCode::input_error, "session " + session_id + " already exists");
  auto host = std::make_shared<Host>(session_id, config.value_or(options_.session), now);
  if (!options_.log_dir.empty()) {
    const auto path = options_.log_dir / (session_id + ".jsonl");
    if (std::filesystem::exists(path)) throw Error(ErrorCode::input_error, "log " + path.string() + " already exists");
    host->writer = std::make_unique<LogWriter>(path, options_.durable);
  }
  host->persist();
  host->delivered = host->engine.log().size();
  sessions_.emplace(session_id, std::move(host));
  return session_id;
}

std::shared_ptr<Gateway::Host> Gateway::find(const std::string& session) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session);
  if (it == sessions_.end()) throw Error(ErrorCode::unknown_session, "unknown session '" + session + "'");
  return it->second;
}

std::shared_ptr<Gateway::Host> Gateway::open_lobby(Millis now) {
  std::lock_guard lobby_lock(lobby_mutex_);
  std::uint64_t next = 0;
  {
    std::shared_lock lock(sessions_mutex_);
    next = created_ + 1;
    auto it = sessions_.find(open_lobby_);
    if (it != sessions_.end()) {
      std::lock_guard host_lock(it->second->mutex);
      if (it->second->engine.state().phase == session::Phase::lobby) return it->second;
    }
  }
  auto config = options_.session;
  config.seed = derive_seed(options_.session.seed, "session", next);
  const auto id = create_session(std::nullopt, config, now);
  std::unique_lock lock(sessions_mutex_);
  open_lobby_ = id;
  return sessions_.at(id);
}

std::string Gateway::issue_token(const std::string& session) {
  std::lock_guard lock(token_mutex_);
  char buf[40];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(token_rng_.next()),
                static_cast<unsigned long long>(token_rng_.next()));
  return session + ":" + buf;
}

void Gateway::bind(const std::shared_ptr<ClientLink>& link, Host& host, const UserId& user) {
  host.links[user] = link;
  host.disconnected_at.erase(user);
  std::lock_guard lock(links_mutex_);
  bindings_[link.get()] = Binding{host.engine.id(), user};
}

std::optional<Gateway::Binding> Gateway::binding_of(const ClientLink* link) const {
  std::lock_guard lock(links_mutex_);
  auto it = bindings_.find(link);
  if (it == bindings_.end()) return std::nullopt;
  return it->second;
}

void Gateway::reply(ClientLink& link, const ServerEvent& event) const { link.send(event.to_text()); }

void Gateway::publish(Host& host) {
  host.persist();
  host.fan_out();
}

void Gateway::deliver_missed(Host& host, const UserId& user, ClientLink& link, std::uint64_t after) const {
  for (const auto& record : host.engine.log()) {
    if (record.seq <= after) continue;
    for (const auto& d : project(record, host.engine.state())) {
      if (d.to == user) link.send(d.event.to_text());
    }
  }
}

void Gateway::handle(const std::shared_ptr<ClientLink>& link, std::string_view text, Millis now) {
  ClientMessage msg;
  try {
    msg = ClientMessage::parse(text);
  } catch (const Error& e) {
    reply(*link, make_error("", e.code(), e.what(), std::nullopt));
    return;
  }

  std::shared_ptr<Host> host;
  std::optional<UserId> user;
  try {
    if (msg.action == "register") {
      host = msg.session ? find(*msg.session) : open_lobby(now);
    } else if (msg.token) {
      const auto colon = msg.token->find(':');
      if (colon == std::string::npos) throw Error(ErrorCode::unauthorized, "unknown token");
      const auto session = msg.token->substr(0, colon);
      if (msg.session && *msg.session != session) throw Error(ErrorCode::unauthorized, "token belongs to another session");
      host = find(session);
    } else if (auto b = binding_of(link.get())) {
      if (msg.session && *msg.session != b->session) throw Error(ErrorCode::unauthorized, "connection is bound to another session");
      host = find(b->session);
      user = b->user;
    } else {
      throw Error(ErrorCode::unauthorized, "message needs a token");
    }
  } catch (const Error& e) {
    reply(*link, make_error(msg.session.value_or(""), e.code(), e.what(), msg.msg_id));
    return;
  }

  std::lock_guard lock(host->mutex);
  const auto& session_id = host->engine.id();
  try {
    if (msg.token) {
      auto it = host->tokens.find(*msg.token);
      if (it == host->tokens.end()) throw Error(ErrorCode::unauthorized, "unknown token");
      user = it->second;
    }

    if (msg.action == "resume") {
      const auto last_ack = msg.payload.value("last_ack", std::uint64_t{0});
      bind(link, *host, *user);
      reply(*link, make_ack(session_id, host->engine.log().back().seq, msg.msg_id,
                            {{"user", *user}, {"session", session_id}, {"resumed_from", last_ack}}));
      deliver_missed(*host, *user, *link, last_ack);
      return;
    }

    session::Command command;
    if (msg.action == "register") {
      if (!msg.payload.contains("username") || !msg.payload["username"].is_string()) {
        throw Error(ErrorCode::malformed, "register needs a string 'username'");
      }
      command = session::Register{msg.payload["username"].get<std::string>()};
    } else {
      if (msg.action == "tick") throw Error(ErrorCode::unauthorized, "clients cannot send tick");
      auto payload = msg.payload;
      payload["user"] = *user;
      command = session::command_from_json(msg.action, payload);
    }

    const auto outcome = host->engine.apply(command, host->local(now));
    host->persist();
    if (outcome.accepted) {
      nlohmann::json ack_payload{{"action", msg.action}};
      if (outcome.user) {
        const auto token = issue_token(session_id);
        host->tokens[token] = *outcome.user;
        bind(link, *host, *outcome.user);
        ack_payload["user"] = *outcome.user;
        ack_payload["token"] = token;
        ack_payload["session"] = session_id;
      }
      reply(*link, make_ack(session_id, outcome.server_order, msg.msg_id, std::move(ack_payload)));
    } else {
      reply(*link, make_error(session_id, *outcome.error, outcome.message, msg.msg_id));
    }
    host->fan_out();
  } catch (const Error& e) {
    // malformed or unauthorized before reaching the engine: nothing logged
    reply(*link, make_error(session_id, e.code(), e.what(), msg.msg_id));
  }
}

void Gateway::disconnect(const ClientLink* link, Millis now) {
  std::optional<Binding> b;
  {
    std::lock_guard lock(links_mutex_);
    auto it = bindings_.find(link);
    if (it == bindings_.end()) return;
    b = it->second;
    bindings_.erase(it);
  }
  std::shared_ptr<Host> host;
  try {
    host = find(b->session);
  } catch (const Error&) {
    return;
  }
  std::lock_guard lock(host->mutex);
  auto it = host->links.find(b->user);
  if (it != host->links.end()) {
    auto current = it->second.lock();
    if (current && current.get() != link) return;  // already resumed elsewhere
    host->links.erase(it);
  }
  host->disconnected_at[b->user] = now;
}

void Gateway::tick(Millis now) {
  std::vector<std::shared_ptr<Host>> hosts;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& [id, host] : sessions_) hosts.push_back(host);
  }
  for (const auto& host : hosts) {
    std::lock_guard lock(host->mutex);
    auto& engine = host->engine;
    if (engine.finished()) continue;
    if (engine.state().phase != session::Phase::lobby) {
      for (auto it = host->disconnected_at.begin(); it != host->disconnected_at.end();) {
        if (now - it->second >= options_.leave_grace && engine.state().is_active(it->first)) {
          engine.apply(session::Leave{it->first}, host->local(now));
          it = host->disconnected_at.erase(it);
        } else {
          ++it;
        }
      }
    }
    const auto due = engine.next_timer();
    if (due && !engine.finished() && host->created + *due <= now) engine.advance(host->local(now));
    publish(*host);
  }
}

std::optional<Millis> Gateway::next_timer() const {
  std::optional<Millis> best;
  auto consider = [&](Millis t) {
    if (!best || t < *best) best = t;
  };
  std::shared_lock lock(sessions_mutex_);
  for (const auto& [id, host] : sessions_) {
    std::lock_guard host_lock(host->mutex);
    if (host->engine.finished()) continue;
    if (auto t = host->engine.next_timer()) consider(host->created + *t);
    if (host->engine.state().phase != session::Phase::lobby) {
      for (const auto& [user, at] : host->disconnected_at) {
        if (host->engine.state().is_active(user)) consider(at + options_.leave_grace);
      }
    }
  }
  return best;
}

std::vector<std::string> Gateway::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, host] : sessions_) out.push_back(id);
  return out;
}

std::vector<session::LogRecord> Gateway::log_of(const std::string& session) const {
  auto host = find(session);
  std::lock_guard lock(host->mutex);
  return host->engine.log();
}

session::SessionState Gateway::state_of(const std::string& session) const {
  auto host = find(session);
  std::lock_guard lock(host->mutex);
  return host->engine.state();
}

bool Gateway::finished(const std::string& session) const {
  auto host = find(session);
  std::lock_guard lock(host->mutex);
  return host->engine.finished();
}

std::optional<std::filesystem::path> Gateway::log_path(const std::string& session) const {
  auto host = find(session);
  std::lock_guard lock(host->mutex);
  if (!host->writer) return std::nullopt;
  return host->writer->path();
}

}  // namespace sot::gateway
