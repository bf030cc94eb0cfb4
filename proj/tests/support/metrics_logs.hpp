#pragma once

// Small SOT logs with hand-picked ballots for the metrics tests and the
// acceptance suite.

#include <map>
#include <vector>

#include "session_driver.hpp"
#include "sot/session/rules.hpp"

namespace sot::testing {

/// Four users, three rounds: u01/u02 and u03/u04 pick each other in round 1
/// and vote to stay afterwards. Cross pairs only ever get the unchosen weight.
inline std::vector<session::LogRecord> two_pair_log(std::uint64_t seed = 7, std::string id = "pairs") {
  auto config = small_config(session::Condition::sot, 4, 3);
  config.seed = seed;
  Driver d(config, std::move(id));
  d.join(4);
  d.complete_setup();
  const std::map<std::string, std::string> pick{{"u01", "u02"}, {"u02", "u01"}, {"u03", "u04"}, {"u04", "u03"}};
  for (const auto& [u, v] : pick) d.apply(session::SubmitBallot{UserId(u), std::nullopt, {UserId(v)}});
  while (!d.engine.finished()) {
    if (d.state().phase == session::Phase::teammate_selection && d.state().round > 1) {
      for (const auto& u : d.state().active_roster()) d.apply(session::SubmitBallot{u, true, {}});
    }
    d.step();
  }
  return d.engine.log();
}

/// Single round where nobody names anyone: every pair weighs 1.
inline std::vector<session::LogRecord> uniform_log(int users = 6, std::string id = "uniform") {
  Driver d(small_config(session::Condition::sot, users, 1), std::move(id));
  d.join(users);
  d.complete_setup();
  for (const auto& u : d.state().active_roster()) d.apply(session::SubmitBallot{u, std::nullopt, {}});
  d.run_until(session::Phase::leaderboard);
  return d.engine.log();
}

}  // namespace sot::testing
