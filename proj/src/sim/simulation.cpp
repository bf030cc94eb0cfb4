#include "sot/sim/simulation.hpp"

#include <chrono>
#include <memory>
#include <queue>
#include <thread>

#include "sot/error.hpp"
#include "sot/gateway/gateway.hpp"
#include "sot/utf8.hpp"

namespace sot::sim {

using gateway::ClientMessage;
using gateway::ServerEvent;
using session::Millis;
using session::Phase;

int SimulationPlan::agent_count() const {
  int n = 0;
  for (const auto& [strategy, count] : strategy_mix) n += count;
  return n;
}

void SimulationPlan::validate() const {
  config.validate();
  for (const auto& [strategy, count] : strategy_mix) {
    if (count < 0) throw Error(ErrorCode::validation_error, "strategy counts must be non-negative");
  }
  const int n = agent_count();
  if (n < 1) throw Error(ErrorCode::validation_error, "the strategy mix has no agents");
  if (n > config.batch_max) {
    throw Error(ErrorCode::validation_error,
                std::to_string(n) + " agents exceed batch_max " + std::to_string(config.batch_max));
  }
  if (vote_bias < 0 || vote_bias > 1) throw Error(ErrorCode::validation_error, "vote_bias must be within [0, 1]");
  for (double b : agent_vote_bias) {
    if (b < 0 || b > 1) throw Error(ErrorCode::validation_error, "agent_vote_bias entries must be within [0, 1]");
  }
  if (time_scale < 0) throw Error(ErrorCode::validation_error, "time_scale must be >= 0");
  for (const auto& d : dropouts) {
    if (d.agent >= static_cast<std::size_t>(n)) throw Error(ErrorCode::validation_error, "dropout names an unknown agent");
    if (d.round < 1 || d.round > config.rounds) throw Error(ErrorCode::validation_error, "dropout round out of range");
  }
  if (session_id.empty() || session_id.find_first_of("/\\:") != std::string::npos) {
    throw Error(ErrorCode::validation_error, "session id may not be empty or contain '/', '\\' or ':'");
  }
}

void to_json(nlohmann::json& j, const SimulationPlan& p) {
  nlohmann::json mix = nlohmann::json::object();
  for (const auto& [strategy, count] : p.strategy_mix) mix[std::string(to_string(strategy))] = count;
  auto dropouts = nlohmann::json::array();
  for (const auto& d : p.dropouts) dropouts.push_back({{"agent", d.agent}, {"round", d.round}});
  j = nlohmann::json{{"config", p.config},
                     {"strategy_mix", mix},
                     {"master_seed", p.master_seed},
                     {"text_seed", p.text_seed},
                     {"vote_bias", p.vote_bias},
                     {"agent_vote_bias", p.agent_vote_bias},
                     {"time_scale", p.time_scale},
                     {"dropouts", dropouts},
                     {"session_id", p.session_id},
                     {"log_dir", p.log_dir.string()}};
}

void from_json(const nlohmann::json& j, SimulationPlan& p) {
  p = {};
  if (j.contains("config")) p.config = j.at("config").get<session::SessionConfig>();
  const auto mix = j.value("strategy_mix", nlohmann::json::object());
  for (auto it = mix.begin(); it != mix.end(); ++it) p.strategy_mix[strategy_from_string(it.key())] = it.value().get<int>();
  p.master_seed = j.value("master_seed", p.master_seed);
  p.text_seed = j.value("text_seed", p.text_seed);
  p.vote_bias = j.value("vote_bias", p.vote_bias);
  p.agent_vote_bias = j.value("agent_vote_bias", p.agent_vote_bias);
  p.time_scale = j.value("time_scale", p.time_scale);
  for (const auto& d : j.value("dropouts", nlohmann::json::array())) {
    p.dropouts.push_back({d.at("agent").get<std::size_t>(), d.at("round").get<int>()});
  }
  p.session_id = j.value("session_id", p.session_id);
  p.log_dir = j.value("log_dir", std::string());
}

namespace {

enum class Act { reg, questionnaire, sample, ballot, edit, chat, rating, story_vote, final_answers, leave };

struct Pending {
  Millis at;
  std::uint64_t order = 0;
  std::size_t agent = 0;
  Act act = Act::reg;
  Phase phase = Phase::lobby;
  int round = 0;
  bool operator>(const Pending& o) const { return std::tie(at, order) > std::tie(o.at, o.order); }
};

using Queue = std::priority_queue<Pending, std::vector<Pending>, std::greater<>>;

constexpr std::string_view kAges[] = {"18-24", "25-34", "35-44", "45-54", "55+"};
constexpr std::string_view kExperience[] = {"none", "some", "regular"};

class Agent {
 public:
  Agent(std::size_t index, Strategy strategy, const SimulationPlan& plan)
      : index_(index),
        strategy_(strategy),
        rng_(derive_seed(plan.master_seed, "agent", index)),
        text_(derive_seed(plan.text_seed, "text", index), 3 + static_cast<int>(derive_seed(plan.text_seed, "verbosity", index) % 8)),
        bias_(index < plan.agent_vote_bias.size() ? plan.agent_vote_bias[index] : plan.vote_bias),
        link_(std::make_shared<gateway::LoopbackLink>()) {
    for (const auto& d : plan.dropouts) {
      if (d.agent == index) leave_round_ = d.round;
    }
  }

  const std::shared_ptr<gateway::LoopbackLink>& link() const { return link_; }
  const std::optional<UserId>& user() const { return user_; }
  Strategy strategy() const { return strategy_; }
  const std::vector<std::string>& rejections() const { return rejections_; }

  std::string username() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "agent%02zu", index_ + 1);
    return buf;
  }

  /// Reacts to everything delivered so far, scheduling follow-up actions.
  void receive(Millis now, Queue& queue, std::uint64_t& order) {
    for (const auto& e : link_->drain_events()) on_event(e, now, queue, order);
  }

  /// Builds the message for a due action, or nothing if it went stale.
  std::optional<ClientMessage> act(const Pending& p, const std::string& session) {
    if (p.act != Act::reg && (gone_ || p.phase != phase_ || p.round != round_ || !user_)) return std::nullopt;
    ClientMessage m;
    m.action = action_name(p.act);
    m.msg_id = static_cast<std::int64_t>(++msg_id_);
    if (p.act == Act::reg) {
      m.session = session;
      m.payload = {{"username", username()}};
      return m;
    }
    m.token = token_;
    switch (p.act) {
      case Act::questionnaire:
        m.payload = {{"answers",
                      {{"age", kAges[rng_.below(std::size(kAges))]},
                       {"writing_experience", kExperience[rng_.below(std::size(kExperience))]}}}};
        break;
      case Act::final_answers:
        m.payload = {{"answers", {{"enjoyment", 1 + rng_.below(5)}, {"would_return", rng_.bernoulli(0.5)}}}};
        break;
      case Act::sample: m.payload = {{"text", text_.next() + text_.next()}}; break;
      case Act::ballot: {
        BallotContext c{*user_, round_, candidates_, previous_, last_winners_, own_ratings_, preferred_};
        const auto b = agent_select_teammates(c, strategy_, rng_.next());
        m.payload = {{"chosen", b.chosen}};
        if (b.stay_with_previous) m.payload["stay"] = *b.stay_with_previous;
        break;
      }
      case Act::edit:
        m.payload = {{"team", team_},       {"kind", "insert"},         {"position", text_length_},
                     {"text", text_.next()}, {"base_revision", revision_}};
        break;
      case Act::chat: m.payload = {{"team", team_}, {"text", "ok," + text_.next()}}; break;
      case Act::rating: {
        if (rating_queue_.empty()) return std::nullopt;
        const auto ratee = rating_queue_.front();
        rating_queue_.erase(rating_queue_.begin());
        std::size_t total = 0;
        for (const auto& [author, chars] : contribution_) total += chars;
        auto share = [&](const UserId& u) {
          if (total == 0) return Rational(1, static_cast<std::int64_t>(team_members_.size()));
          auto it = contribution_.find(u);
          return Rational(it == contribution_.end() ? 0 : static_cast<std::int64_t>(it->second), static_cast<std::int64_t>(total));
        };
        const int value = strategy_ == Strategy::loyal ? 5 : contribution_rating(share(ratee));
        const int own = strategy_ == Strategy::loyal ? 5 : contribution_rating(share(*user_));
        own_ratings_[ratee] = value;
        m.payload = {{"rating",
                      {{"ratee", ratee},
                       {"skillfulness", value},
                       {"collaboration", value},
                       {"helpfulness", value},
                       {"own_helpfulness", own},
                       {"shared_competencies", nlohmann::json::array()}}}};
        break;
      }
      case Act::story_vote: {
        if (stories_.empty()) return std::nullopt;
        m.payload = {{"team", agent_vote_story(stories_, bias_, rng_.next())}};
        break;
      }
      case Act::leave: gone_ = true; break;
      case Act::reg: break;
    }
    return m;
  }

 private:
  static std::string action_name(Act a) {
    switch (a) {
      case Act::reg: return "register";
      case Act::questionnaire:
      case Act::final_answers: return "submit_questionnaire";
      case Act::sample: return "submit_sample";
      case Act::ballot: return "submit_ballot";
      case Act::edit: return "edit_op";
      case Act::chat: return "chat";
      case Act::rating: return "submit_rating";
      case Act::story_vote: return "submit_story_vote";
      case Act::leave: return "leave";
    }
    return "";
  }

  void plan(Act act, Millis at, Queue& queue, std::uint64_t& order) const {
    queue.push({at, order++, index_, act, phase_, round_});
  }

  /// A think time inside the first quarter of the phase.
  Millis think(Millis now) {
    const auto window = std::max<std::int64_t>((deadline_ - now).count() / 4, 2000);
    return now + Millis(1000 + static_cast<std::int64_t>(rng_.below(static_cast<std::uint64_t>(window - 1000))));
  }

  void on_event(const ServerEvent& e, Millis now, Queue& queue, std::uint64_t& order) {
    const auto& p = e.payload;
    if (e.type == "error") {
      rejections_.push_back(username() + ": " + p.value("code", std::string()) + " " + p.value("message", std::string()));
      return;
    }
    if (e.type == "ack") {
      if (p.contains("token")) {
        token_ = p.at("token").get<std::string>();
        user_ = UserId(p.at("user").get<std::string>());
      }
      return;
    }
    if (gone_) return;
    if (e.type == "phase_entered") {
      phase_ = session::phase_from_string(p.at("phase").get<std::string>());
      round_ = p.at("round").get<int>();
      if (p.contains("deadline_ms")) deadline_ = Millis(p.at("deadline_ms").get<std::int64_t>());
      switch (phase_) {
        case Phase::demographics: plan(Act::questionnaire, think(now), queue, order); break;
        case Phase::writing_sample: plan(Act::sample, think(now), queue, order); break;
        case Phase::collaboration: plan_collaboration(now, queue, order); break;
        case Phase::peer_rating:
          rating_queue_.clear();
          for (const auto& m : team_members_)
            if (m != *user_) rating_queue_.push_back(m);
          for (std::size_t i = 0; i < rating_queue_.size(); ++i) plan(Act::rating, think(now), queue, order);
          break;
        case Phase::story_voting:
          stories_.clear();
          for (const auto& s : p.value("stories", nlohmann::json::array())) {
            stories_.push_back({s.at("team").get<TeamIndex>(), utf8::length(s.at("text").get<std::string>())});
          }
          if (!stories_.empty()) plan(Act::story_vote, think(now), queue, order);
          break;
        case Phase::final_questionnaire: plan(Act::final_answers, think(now), queue, order); break;
        default: break;
      }
    } else if (e.type == "profile_views") {
      candidates_.clear();
      for (const auto& v : p.at("profiles")) candidates_.push_back(v.at("user").get<UserId>());
      previous_.reset();
      if (!p.at("previous_teammate").is_null()) previous_ = p.at("previous_teammate").get<UserId>();
      if (preferred_.empty()) preferred_ = pick_preferred(candidates_, rng_.next());
      plan(leave_round_ == round_ ? Act::leave : Act::ballot, think(now), queue, order);
    } else if (e.type == "teams_formed") {
      team_ = p.at("team").get<TeamIndex>();
      team_members_.clear();
      for (const auto& m : p.at("members")) team_members_.push_back(m.at("user").get<UserId>());
      text_length_ = 0;
      revision_ = 0;
      contribution_.clear();
    } else if (e.type == "text_state") {
      const auto revision = p.at("revision").get<std::uint64_t>();
      if (revision >= revision_) {
        revision_ = revision;
        text_length_ = static_cast<std::int64_t>(utf8::length(p.at("text").get<std::string>()));
      }
      const auto& op = p.at("op");
      if (op.at("kind") == "insert") contribution_[op.at("author").get<UserId>()] += op.at("length").get<std::size_t>();
    } else if (e.type == "roster_update" && p.value("status", std::string()) == "departed") {
      for (const auto& d : p.at("departed")) {
        const auto gone = d.at("user").get<UserId>();
        std::erase(candidates_, gone);
        std::erase(last_winners_, gone);
        std::erase(preferred_, gone);
        std::erase(rating_queue_, gone);
      }
    } else if (e.type == "winner_announced") {
      last_winners_ = p.at("members").get<std::vector<UserId>>();
    }
  }

  void plan_collaboration(Millis now, Queue& queue, std::uint64_t& order) {
    // edits spread over the phase, all well before the deadline
    const auto start = now + Millis(5000);
    const auto end = deadline_ - Millis(15000);
    if (end <= start) {
      plan(Act::edit, start, queue, order);
      return;
    }
    const auto edits = 2 + rng_.below(5);
    const auto span = static_cast<std::uint64_t>((end - start).count());
    std::vector<std::int64_t> times;
    for (std::uint64_t i = 0; i < edits; ++i) times.push_back(static_cast<std::int64_t>(rng_.below(span)));
    std::sort(times.begin(), times.end());
    for (auto t : times) plan(Act::edit, start + Millis(t), queue, order);
    if (rng_.below(2) == 0) plan(Act::chat, start + Millis(static_cast<std::int64_t>(rng_.below(span))), queue, order);
  }

  std::size_t index_;
  Strategy strategy_;
  Rng rng_;
  TextGenerator text_;
  double bias_;
  std::optional<int> leave_round_;
  std::shared_ptr<gateway::LoopbackLink> link_;

  std::optional<UserId> user_;
  std::string token_;
  std::uint64_t msg_id_ = 0;
  bool gone_ = false;
  Phase phase_ = Phase::lobby;
  int round_ = 0;
  Millis deadline_{0};

  std::vector<UserId> candidates_;
  std::optional<UserId> previous_;
  std::vector<UserId> preferred_;
  std::vector<UserId> last_winners_;
  std::map<UserId, int> own_ratings_;

  TeamIndex team_ = 0;
  std::vector<UserId> team_members_;
  std::int64_t text_length_ = 0;
  std::uint64_t revision_ = 0;
  std::map<UserId, std::size_t> contribution_;
  std::vector<UserId> rating_queue_;
  std::vector<StoryCandidate> stories_;
  std::vector<std::string> rejections_;
};

}  // namespace

SimulationResult run_simulation(const SimulationPlan& plan) {
  plan.validate();

  std::vector<Strategy> strategies;
  for (auto s : kStrategies) {
    auto it = plan.strategy_mix.find(s);
    if (it != plan.strategy_mix.end()) strategies.insert(strategies.end(), static_cast<std::size_t>(it->second), s);
  }
  Rng order_rng(derive_seed(plan.master_seed, "strategies"));
  order_rng.shuffle(strategies);

  gateway::GatewayOptions options;
  options.session = plan.config;
  options.log_dir = plan.log_dir;
  options.token_seed = derive_seed(plan.master_seed, "tokens");
  gateway::Gateway gw(options);
  const auto sid = gw.create_session(plan.session_id, plan.config, Millis{0});

  std::vector<Agent> agents;
  for (std::size_t i = 0; i < strategies.size(); ++i) agents.emplace_back(i, strategies[i], plan);

  Queue queue;
  std::uint64_t order = 0;
  Rng arrivals(derive_seed(plan.master_seed, "arrivals"));
  Millis at{0};
  for (std::size_t i = 0; i < agents.size(); ++i) {
    at += Millis(500 + static_cast<std::int64_t>(arrivals.below(2000)));
    queue.push({at, order++, i, Act::reg, Phase::lobby, 0});
  }

  Millis now{0};
  auto wall = std::chrono::steady_clock::now();
  auto pace = [&](Millis to) {
    if (plan.time_scale > 0 && to > now) {
      wall += std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double, std::milli>(static_cast<double>((to - now).count()) / plan.time_scale));
      std::this_thread::sleep_until(wall);
    }
    now = std::max(now, to);
  };
  auto dispatch = [&] {
    for (auto& a : agents) a.receive(now, queue, order);
  };

  constexpr std::size_t kMaxSteps = 1'000'000;
  for (std::size_t step = 0; !gw.finished(sid); ++step) {
    if (step == kMaxSteps) throw Error(ErrorCode::lifecycle_error, "simulation " + sid + " did not finish");
    const auto timer = gw.next_timer();
    if (!queue.empty() && (!timer || queue.top().at < *timer)) {
      const auto p = queue.top();
      queue.pop();
      pace(p.at);
      auto& agent = agents[p.agent];
      if (auto msg = agent.act(p, sid)) gw.handle(agent.link(), msg->to_text(), now);
    } else if (timer) {
      pace(*timer);
      gw.tick(now);
    } else {
      break;
    }
    dispatch();
  }

  SimulationResult result;
  result.session_id = sid;
  result.strategies = strategies;
  result.log = gw.log_of(sid);
  result.final_state = gw.state_of(sid);
  result.log_path = gw.log_path(sid);
  for (const auto& a : agents) {
    result.users.push_back(a.user().value_or(UserId()));
    result.rejections.insert(result.rejections.end(), a.rejections().begin(), a.rejections().end());
  }
  if (result.final_state.phase == Phase::aborted) {
    const auto& p = result.log.back().payload;
    throw Error(ErrorCode::session_aborted, "simulation " + sid + " aborted: " + p.value("reason", std::string("unknown")) +
                                                " (registered " + std::to_string(strategies.size()) + ", batch_min " +
                                                std::to_string(plan.config.batch_min) + ")");
  }
  if (!result.final_state.report) throw Error(ErrorCode::lifecycle_error, "simulation " + sid + " ended without a report");
  result.report = *result.final_state.report;
  return result;
}

}  // namespace sot::sim
