#include "doctest.h"

#include <boost/asio.hpp>
#include <boost/beast.hpp>
#include <boost/beast/websocket.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "sot/gateway/config.hpp"
#include "sot/gateway/gateway.hpp"
#include "sot/gateway/log_store.hpp"
#include "sot/gateway/ws_server.hpp"

using namespace sot;
using namespace sot::gateway;
using session::Millis;
using session::Phase;
using namespace std::chrono_literals;

namespace {

session::SessionConfig config4(session::Condition condition = session::Condition::sot, int rounds = 1) {
  session::SessionConfig c;
  c.condition = condition;
  c.batch_min = 4;
  c.batch_max = 4;
  c.rounds = rounds;
  c.seed = 3;
  return c;
}

struct Client {
  std::shared_ptr<LoopbackLink> link = std::make_shared<LoopbackLink>();
  std::string token;
  UserId user;
  std::vector<ServerEvent> events;  // non-reply events, in arrival order

  ServerEvent send(Gateway& g, const std::string& action, nlohmann::json payload, Millis now,
                   std::optional<std::string> session = std::nullopt) {
    ClientMessage m;
    m.action = action;
    m.payload = std::move(payload);
    m.session = std::move(session);
    if (!token.empty()) m.token = token;
    m.msg_id = next_id++;
    g.handle(link, m.to_text(), now);
    return collect();
  }

  ServerEvent collect() {
    ServerEvent reply;
    for (auto& e : link->drain_events()) {
      if (e.is_reply()) {
        reply = e;
      } else {
        events.push_back(std::move(e));
      }
    }
    return reply;
  }

  std::int64_t next_id = 1;
};

struct Harness {
  GatewayOptions options;
  std::unique_ptr<Gateway> gateway;
  std::vector<Client> clients;
  std::string session;
  Millis now{0};

  explicit Harness(session::SessionConfig c, std::filesystem::path log_dir = {}, Millis grace = 60s) {
    options.session = c;
    options.leave_grace = grace;
    options.token_seed = 1;
    options.log_dir = std::move(log_dir);
    gateway = std::make_unique<Gateway>(options);
    session = gateway->create_session("g1", c, now);
  }

  void join(int n) {
    for (int i = 0; i < n; ++i) {
      Client c;
      now += 100ms;
      const auto ack = c.send(*gateway, "register", {{"username", "name" + std::to_string(i)}}, now, session);
      REQUIRE(ack.type == "ack");
      c.token = ack.payload.at("token");
      c.user = UserId(ack.payload.at("user").get<std::string>());
      clients.push_back(std::move(c));
    }
    collect();
  }

  void collect() {
    for (auto& c : clients) c.collect();
  }

  Phase phase() const { return gateway->state_of(session).phase; }

  void run_until(Phase p) {
    while (phase() != p && !gateway->finished(session)) {
      now = std::max(now, *gateway->next_timer());
      gateway->tick(now);
    }
    collect();
  }
};

}  // namespace

TEST_CASE("client message parsing") {
  CHECK_THROWS_AS(ClientMessage::parse("not json"), Error);
  CHECK_THROWS_AS(ClientMessage::parse(R"({"action":"chat"})"), Error);
  CHECK_THROWS_AS(ClientMessage::parse(R"({"v":2,"action":"chat"})"), Error);
  CHECK_THROWS_AS(ClientMessage::parse(R"({"v":1})"), Error);
  CHECK_THROWS_AS(ClientMessage::parse(R"({"v":1,"action":"chat","payload":[]})"), Error);
  CHECK_THROWS_AS(ClientMessage::parse(R"({"v":1,"action":"chat","msg_id":"x"})"), Error);
  const auto m = ClientMessage::parse(R"({"v":1,"action":"chat","token":"s:1","payload":{"text":"hi"},"client_ts":5})");
  CHECK(m.action == "chat");
  CHECK(m.client_ts == 5);
  CHECK(ClientMessage::parse(m.to_text()).to_json() == m.to_json());

  const auto e = make_error("s", ErrorCode::stale_phase, "late", 4);
  const auto back = ServerEvent::parse(e.to_text());
  CHECK(back.type == "error");
  CHECK(back.payload.at("code") == "stale_phase");
  CHECK(back.msg_id == 4);
}

TEST_CASE("malformed and unauthenticated messages are not logged") {
  Harness h(config4());
  h.join(1);
  const auto before = h.gateway->log_of(h.session).size();
  Client stranger;
  auto reply = stranger.send(*h.gateway, "chat", {{"team", 0}, {"text", "x"}}, h.now);
  CHECK(reply.type == "error");
  CHECK(reply.payload.at("code") == "unauthorized");
  stranger.link->drain();
  h.gateway->handle(stranger.link, "{oops", h.now);
  CHECK(stranger.link->drain_events().front().payload.at("code") == "malformed");
  reply = h.clients[0].send(*h.gateway, "submit_sample", {}, h.now);
  CHECK(reply.payload.at("code") == "malformed");
  reply = stranger.send(*h.gateway, "register", {{"username", "z"}}, h.now, std::string("nope"));
  CHECK(reply.payload.at("code") == "unknown_session");
  CHECK(h.gateway->log_of(h.session).size() == before);
}

TEST_CASE("phase gate and team authorization through the gateway") {
  Harness h(config4());
  h.join(4);
  h.run_until(Phase::teammate_selection);
  auto& c = h.clients[0];
  h.now += 1s;
  const auto ack = c.send(*h.gateway, "submit_ballot", {{"chosen", nlohmann::json::array()}}, h.now);
  CHECK(ack.type == "ack");
  CHECK(ack.server_order > 0);
  const auto log = h.gateway->log_of(h.session);
  CHECK(log.back().seq == ack.server_order);
  CHECK(log.back().type == "submit_ballot");

  h.run_until(Phase::collaboration);
  const auto late = c.send(*h.gateway, "submit_ballot", {{"chosen", nlohmann::json::array()}}, h.now);
  CHECK(late.type == "error");
  CHECK(late.payload.at("code") == "stale_phase");

  const auto state = h.gateway->state_of(h.session);
  const auto own = *state.team_of(c.user);
  const auto other = 1 - own;
  const auto denied = c.send(*h.gateway, "edit_op", {{"team", other}, {"kind", "insert"}, {"position", 0}, {"text", "x"}}, h.now);
  CHECK(denied.type == "error");
  CHECK(denied.payload.at("code") == "unauthorized");
  const auto fine = c.send(*h.gateway, "edit_op", {{"team", own}, {"kind", "insert"}, {"position", 0}, {"text", "x"}}, h.now);
  CHECK(fine.type == "ack");
}

TEST_CASE("isolation, ordering and story reveal") {
  Harness h(config4(session::Condition::sot, 2));
  h.join(4);
  for (int round = 1; round <= 2; ++round) {
    h.run_until(Phase::collaboration);
    const auto state = h.gateway->state_of(h.session);
    for (int i = 0; i < 6; ++i) {
      auto& c = h.clients[static_cast<std::size_t>(i % 4)];
      const auto team = *state.team_of(c.user);
      h.now += 500ms;
      c.send(*h.gateway, "edit_op",
             {{"team", team}, {"kind", "insert"}, {"position", 0}, {"text", c.user.str() + "-r" + std::to_string(round) + " "}},
             h.now);
      c.send(*h.gateway, "chat", {{"team", team}, {"text", "hello from " + c.user.str()}}, h.now);
    }
    h.run_until(Phase::winner_display);
  }
  h.run_until(Phase::leaderboard);
  const auto state = h.gateway->state_of(h.session);
  REQUIRE(state.finalized);

  for (const auto& c : h.clients) {
    std::uint64_t last = 0;
    bool saw_leaderboard = false;
    for (const auto& e : c.events) {
      CHECK(e.server_order >= last);
      last = e.server_order;
      if (e.type == "text_state" || e.type == "chat_delivered") {
        const int round = e.payload.at("round");
        const auto& teams = state.rounds[static_cast<std::size_t>(round - 1)].teams;
        CHECK(teams.team_of(c.user) == e.payload.at("team").get<int>());
      }
      if (e.type == "phase_entered" && e.payload.at("phase") == "story_voting") {
        const int round = e.payload.at("round");
        const auto& r = state.rounds[static_cast<std::size_t>(round - 1)];
        const auto own = *r.teams.team_of(c.user);
        CHECK(e.payload.at("stories").size() == r.teams.teams.size() - 1);
        for (const auto& s : e.payload.at("stories")) CHECK(s.at("team").get<int>() != own);
      }
      if (e.type == "leaderboard") saw_leaderboard = true;
    }
    CHECK(saw_leaderboard);
    // text_state carries the exact text after that op
    for (const auto& e : c.events) {
      if (e.type != "text_state") continue;
      const auto& r = state.rounds[static_cast<std::size_t>(e.payload.at("round").get<int>() - 1)];
      CHECK(e.payload.at("text") == r.texts[e.payload.at("team").get<std::size_t>()].text_at(e.payload.at("revision")));
    }
  }
  // profile views arrive once per selection phase, without self
  for (const auto& c : h.clients) {
    int views = 0;
    for (const auto& e : c.events) {
      if (e.type != "profile_views") continue;
      ++views;
      CHECK(e.payload.at("profiles").size() == 3);
      for (const auto& p : e.payload.at("profiles")) CHECK(p.at("user") != c.user.str());
      if (e.payload.at("round") == 1) CHECK_FALSE(e.payload.at("profiles")[0].at("ratings_shown").get<bool>());
    }
    CHECK(views == 2);
  }
}

TEST_CASE("records are persisted before their events are sent") {
  const auto dir = std::filesystem::temp_directory_path() / "sot_gateway_wal";
  std::filesystem::remove_all(dir);

  struct CheckingLink : ClientLink {
    std::filesystem::path path;
    int violations = 0;
    int checked = 0;
    void send(const std::string& text) override {
      const auto e = ServerEvent::parse(text);
      if (e.server_order == 0) return;
      const auto persisted = read_log_file(path).records;
      ++checked;
      if (persisted.empty() || persisted.back().seq < e.server_order) ++violations;
    }
  };

  Harness h(config4(), dir);
  auto watcher = std::make_shared<CheckingLink>();
  watcher->path = dir / "g1.jsonl";
  ClientMessage reg;
  reg.action = "register";
  reg.session = h.session;
  reg.payload = {{"username", "watcher"}};
  h.gateway->handle(watcher, reg.to_text(), h.now);
  h.join(3);
  h.run_until(Phase::leaderboard);
  CHECK(watcher->checked > 10);
  CHECK(watcher->violations == 0);
  const auto on_disk = read_log_file(watcher->path).records;
  CHECK(on_disk.size() == h.gateway->log_of(h.session).size());
  std::filesystem::remove_all(dir);
}

TEST_CASE("resume re-sends missed events and grace leave") {
  Harness h(config4(), {}, 600s);
  h.join(4);
  h.run_until(Phase::demographics);
  auto& c = h.clients[1];
  const auto last_ack = c.events.back().server_order;
  h.gateway->disconnect(c.link.get(), h.now);
  c.link = std::make_shared<LoopbackLink>();
  const auto seen_before = c.events.size();
  h.run_until(Phase::writing_sample);
  CHECK(c.events.size() == seen_before);  // disconnected: nothing arrives

  const auto ack = c.send(*h.gateway, "resume", {{"last_ack", last_ack}}, h.now);
  CHECK(ack.type == "ack");
  REQUIRE(c.events.size() > seen_before);
  CHECK(c.events[seen_before].server_order > last_ack);
  CHECK(c.events.back().payload.at("phase") == "writing_sample");

  // a dropped user is marked as left after the grace period
  auto& d = h.clients[2];
  h.gateway->disconnect(d.link.get(), h.now);
  const auto dropped_at = h.now;
  h.now += h.options.leave_grace;
  h.gateway->tick(h.now);
  CHECK(h.gateway->state_of(h.session).departed.contains(d.user));
  const auto log = h.gateway->log_of(h.session);
  const auto leave = std::find_if(log.begin(), log.end(), [](const auto& r) { return r.type == "leave"; });
  REQUIRE(leave != log.end());
  CHECK(leave->at >= dropped_at);
}

TEST_CASE("register without a session joins the open lobby") {
  GatewayOptions o;
  o.session = config4();
  o.token_seed = 9;
  Gateway g(o);
  std::vector<Client> cs(5);
  std::set<std::string> sessions;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const auto ack = cs[i].send(g, "register", {{"username", "n" + std::to_string(i)}}, Millis{static_cast<std::int64_t>(i)});
    REQUIRE(ack.type == "ack");
    sessions.insert(ack.payload.at("session").get<std::string>());
  }
  CHECK(sessions.size() == 2);  // the first four filled a batch
  CHECK(g.session_ids().size() == 2);
}

TEST_CASE("replay_event_log") {
  Harness h(config4(session::Condition::sot, 3));
  h.join(4);
  h.run_until(Phase::teammate_selection);
  h.clients[0].send(*h.gateway, "submit_ballot", {{"chosen", {h.clients[1].user}}}, h.now);
  h.run_until(Phase::collaboration);
  for (auto& c : h.clients) {
    const auto team = *h.gateway->state_of(h.session).team_of(c.user);
    h.now += 1s;
    c.send(*h.gateway, "edit_op", {{"team", team}, {"kind", "insert"}, {"position", 0}, {"text", "words "}}, h.now);
  }
  h.run_until(Phase::leaderboard);
  const auto log = h.gateway->log_of(h.session);
  const auto live = h.gateway->state_of(h.session);

  SUBCASE("full log reproduces the final state") {
    const auto report = replay_event_log(log);
    CHECK_FALSE(report.divergence);
    CHECK_FALSE(report.incomplete);
    CHECK(report.final_state == nlohmann::json(live));
    REQUIRE(report.report);
    CHECK(report.report->leaderboard == live.report->leaderboard);
  }
  SUBCASE("removing any single record is reported at its index") {
    // dropping the very last record looks like truncation, so stop before it
    for (std::size_t i = 1; i + 1 < log.size(); ++i) {
      CAPTURE(i);
      auto tampered = log;
      tampered.erase(tampered.begin() + static_cast<std::ptrdiff_t>(i));
      const auto report = replay_event_log(tampered);
      REQUIRE(report.divergence);
      CHECK(report.divergence->index == i);
    }
  }
  SUBCASE("empty log gives the initial state") {
    const auto report = replay_event_log({}, config4());
    CHECK_FALSE(report.divergence);
    const auto initial = session::SessionEngine("", config4()).state();
    CHECK(report.final_state == nlohmann::json(initial));
  }
  SUBCASE("truncated log is a consistent prefix flagged incomplete") {
    for (std::size_t cut = 1; cut < log.size(); cut += 5) {
      std::vector<session::LogRecord> prefix(log.begin(), log.begin() + static_cast<std::ptrdiff_t>(cut));
      const auto report = replay_event_log(prefix);
      CHECK_FALSE(report.divergence);
      CHECK(report.incomplete);
    }
  }
  SUBCASE("torn last line") {
    std::stringstream text;
    for (const auto& r : log) text << r.to_line() << '\n';
    auto content = text.str();
    content.resize(content.size() - 20);
    std::stringstream torn(content);
    const auto read = read_log(torn);
    CHECK(read.truncated_tail);
    CHECK(read.records.size() == log.size() - 1);
    const auto report = replay_event_log(read.records, std::nullopt, read.truncated_tail);
    CHECK(report.incomplete);
    CHECK_FALSE(report.divergence);

    std::stringstream broken("{\"bad\":1}\n" + text.str());
    CHECK_THROWS_AS(read_log(broken), Error);
  }
  SUBCASE("config mismatch") {
    auto other = config4();
    other.seed = 99;
    const auto report = replay_event_log(log, other);
    REQUIRE(report.divergence);
    CHECK(report.divergence->index == 0);
  }
}

TEST_CASE("bind address parsing") {
  CHECK(parse_bind("0.0.0.0:9000", 1) == std::pair<std::string, unsigned short>{"0.0.0.0", 9000});
  CHECK(parse_bind("127.0.0.1", 8080).second == 8080);
  CHECK_THROWS_AS(parse_bind("host:x", 1), Error);
  CHECK_THROWS_AS(parse_bind("host:70000", 1), Error);
}

TEST_CASE("websocket transport end to end") {
  namespace beast = boost::beast;
  namespace websocket = beast::websocket;
  namespace net = boost::asio;
  using tcp = net::ip::tcp;

  GatewayOptions o;
  o.session = config4();
  o.token_seed = 5;
  Gateway g(o);
  ServerOptions so;
  so.port = 0;
  so.tick_interval = 50ms;
  WebSocketServer server(g, so);
  const auto port = server.port();
  std::thread runner([&] { server.run(); });

  {
    net::io_context ioc;
    tcp::resolver resolver(ioc);
    websocket::stream<tcp::socket> ws(ioc);
    net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws.handshake("127.0.0.1", "/");
    ClientMessage m;
    m.action = "register";
    m.payload = {{"username", "remote"}};
    m.msg_id = 1;
    ws.write(net::buffer(m.to_text()));
    bool acked = false;
    for (int i = 0; i < 3 && !acked; ++i) {
      beast::flat_buffer buffer;
      ws.read(buffer);
      const auto e = ServerEvent::parse(beast::buffers_to_string(buffer.data()));
      if (e.type == "ack") {
        acked = true;
        CHECK(e.msg_id == 1);
        CHECK(e.payload.at("user") == "u01");
      }
    }
    CHECK(acked);
    ws.write(net::buffer(std::string("{nonsense")));
    ServerEvent reply;
    do {
      beast::flat_buffer buffer;
      ws.read(buffer);
      reply = ServerEvent::parse(beast::buffers_to_string(buffer.data()));
    } while (reply.type != "error");
    CHECK(reply.payload.at("code") == "malformed");
    ws.close(websocket::close_code::normal);
  }
  {
    net::io_context ioc;
    tcp::socket socket(ioc);
    socket.connect(tcp::endpoint(net::ip::make_address("127.0.0.1"), port));
    const std::string request = "GET /health HTTP/1.1\r\nHost: x\r\n\r\n";
    net::write(socket, net::buffer(request));
    beast::flat_buffer buffer;
    beast::http::response<beast::http::string_body> response;
    beast::http::read(socket, buffer, response);
    CHECK(response.result_int() == 200);
    CHECK(nlohmann::json::parse(response.body()).at("ok") == true);
  }
  server.stop();
  runner.join();
  CHECK(g.session_ids().size() == 1);
}

TEST_CASE("serve config file and environment overrides") {
  const auto dir = std::filesystem::temp_directory_path() / "sot_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "serve.json";
  {
    std::ofstream out(path);
    out << R"({"bind":"0.0.0.0:9000","log_dir":"/var/sot","session":{"condition":"Placebo","batch_min":4,"batch_max":8}})";
  }
  auto config = gateway::load_serve_config(path);
  CHECK(config.bind == "0.0.0.0:9000");
  CHECK(config.log_dir == "/var/sot");
  CHECK(config.session.condition == session::Condition::placebo);
  CHECK(config.session.batch_max == 8);
  CHECK(config.session.rounds == 3);
  CHECK(nlohmann::json(config).get<gateway::ServeConfig>() == config);

  std::map<std::string, std::string> env{{"SOT_BIND", "127.0.0.1:7000"}};
  auto lookup = [&](const char* name) -> std::optional<std::string> {
    auto it = env.find(name);
    return it == env.end() ? std::nullopt : std::optional<std::string>(it->second);
  };
  gateway::apply_env_overrides(config, lookup);
  CHECK(config.bind == "127.0.0.1:7000");
  CHECK(config.log_dir == "/var/sot");
  env["SOT_LOG_DIR"] = "/tmp/logs";
  gateway::apply_env_overrides(config, lookup);
  CHECK(config.log_dir == "/tmp/logs");

  {
    std::ofstream out(path);
    out << R"({"session":{"batch_min":9,"batch_max":4}})";
  }
  CHECK_THROWS_AS(gateway::load_serve_config(path), Error);
  {
    std::ofstream out(path);
    out << "{not json";
  }
  CHECK_THROWS_AS(gateway::load_serve_config(path), Error);
  CHECK_THROWS_AS(gateway::load_serve_config(dir / "missing.json"), Error);
  std::filesystem::remove_all(dir);
}
