#pragma once

// `serve` configuration: the session template plus where to listen and
// where to write logs.
//
//   {"bind": "0.0.0.0:8080", "log_dir": "logs", "static_dir": "web",
//    "durable": false, "leave_grace_ms": 60000, "tick_ms": 200,
//    "session": { ...SessionConfig... }}

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "sot/session/types.hpp"

namespace sot::gateway {

struct ServeConfig {
  session::SessionConfig session;
  std::string bind = "127.0.0.1:8080";
  std::filesystem::path log_dir = "logs";
  std::filesystem::path static_dir;
  bool durable = false;
  session::Millis leave_grace{60'000};
  session::Millis tick{200};

  friend bool operator==(const ServeConfig&, const ServeConfig&) = default;
};

void to_json(nlohmann::json& j, const ServeConfig& config);
void from_json(const nlohmann::json& j, ServeConfig& config);

/// Reads and validates a config file. Throws Error(input_error) if the file
/// cannot be read, Error(malformed) for bad JSON and Error(validation_error)
/// for bad values.
ServeConfig load_serve_config(const std::filesystem::path& path);

using EnvLookup = std::function<std::optional<std::string>(const char*)>;
/// SOT_BIND and SOT_LOG_DIR replace bind and log_dir when set and non-empty.
void apply_env_overrides(ServeConfig& config, const EnvLookup& env);
std::optional<std::string> process_env(const char* name);

}  // namespace sot::gateway
