#pragma once

// Headless sessions: scripted agents talk to a Gateway over loopback links
// on a virtual clock.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sot/session/engine.hpp"
#include "sot/sim/agent.hpp"

namespace sot::sim {

struct Dropout {
  std::size_t agent = 0;  // index into the agent list (registration order)
  int round = 1;          // leaves when this round's teammate selection opens

  friend bool operator==(const Dropout&, const Dropout&) = default;
};

struct SimulationPlan {
  session::SessionConfig config;
  std::map<Strategy, int> strategy_mix;  // counts; their sum is the number of agents
  std::uint64_t master_seed = 1;
  std::uint64_t text_seed = 1;
  double vote_bias = 0.5;            // chance of voting for the longest story
  std::vector<double> agent_vote_bias;  // per-agent override, by index
  double time_scale = 0;  // 0: run the virtual clock flat out; k > 0: k virtual ms per wall ms
  std::vector<Dropout> dropouts;
  std::string session_id = "sim";
  std::filesystem::path log_dir;  // empty: keep the log in memory

  int agent_count() const;
  /// Throws Error(validation_error).
  void validate() const;

  friend bool operator==(const SimulationPlan&, const SimulationPlan&) = default;
};

void to_json(nlohmann::json& j, const SimulationPlan& plan);
void from_json(const nlohmann::json& j, SimulationPlan& plan);

struct SimulationResult {
  std::string session_id;
  std::vector<Strategy> strategies;  // per agent, registration order
  std::vector<UserId> users;         // per agent, as assigned by the engine
  std::vector<session::LogRecord> log;
  session::SessionState final_state;
  session::FinalReport report;
  std::vector<std::string> rejections;  // error replies the agents received
  std::optional<std::filesystem::path> log_path;
};

/// Runs one session to finalization. Throws Error(session_aborted) if the
/// engine aborts, with the batch numbers in the message.
SimulationResult run_simulation(const SimulationPlan& plan);

}  // namespace sot::sim
