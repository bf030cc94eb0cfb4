#pragma once

// Helpers that push a SessionEngine through phases in tests.

#include <string>
#include <vector>

#include "sot/rng.hpp"
#include "sot/session/engine.hpp"

namespace sot::testing {

using session::Millis;
using session::Phase;

inline session::SessionConfig small_config(session::Condition condition, int users = 4, int rounds = 3) {
  session::SessionConfig c;
  c.condition = condition;
  c.batch_min = 4;
  c.batch_max = users;
  c.rounds = rounds;
  c.seed = 7;
  return c;
}

struct Driver {
  session::SessionEngine engine;
  Millis now{0};

  explicit Driver(session::SessionConfig config, std::string id = "s1") : engine(std::move(id), std::move(config)) {}

  const session::SessionState& state() const { return engine.state(); }

  session::Outcome apply(const session::Command& c) { return engine.apply(c, now); }

  std::vector<UserId> join(int n) {
    std::vector<UserId> users;
    for (int i = 0; i < n; ++i) {
      now += Millis{1000};
      const auto out = apply(session::Register{"player" + std::to_string(i + 1)});
      if (out.user) users.push_back(*out.user);
    }
    return users;
  }

  /// Fire timers until `phase` (or a terminal state) is reached.
  void run_until(Phase phase) {
    while (state().phase != phase && !engine.finished()) {
      const auto t = engine.next_timer();
      if (!t) break;
      now = std::max(now, *t);
      engine.advance(now);
    }
  }

  /// Fire exactly the next timer.
  void step() {
    const auto t = engine.next_timer();
    now = std::max(now, *t);
    engine.advance(now);
  }

  /// Fill questionnaire and sample for everyone so setup ends early.
  void complete_setup() {
    run_until(Phase::demographics);
    for (const auto& u : state().active_roster()) {
      apply(session::SubmitQuestionnaire{u, {{"age", "25-34"}}});
    }
    for (const auto& u : state().active_roster()) {
      apply(session::SubmitSample{u, "sample by " + u.str()});
    }
  }

  std::vector<const session::LogRecord*> records(std::string_view type) const {
    std::vector<const session::LogRecord*> out;
    for (const auto& r : engine.log()) {
      if (r.type == type) out.push_back(&r);
    }
    return out;
  }
};

}  // namespace sot::testing
