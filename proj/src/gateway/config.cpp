#include "sot/gateway/config.hpp"

#include <cstdlib>
#include <fstream>

#include "sot/error.hpp"

namespace sot::gateway {

void to_json(nlohmann::json& j, const ServeConfig& c) {
  j = nlohmann::json{{"bind", c.bind},
                     {"log_dir", c.log_dir.string()},
                     {"static_dir", c.static_dir.string()},
                     {"durable", c.durable},
                     {"leave_grace_ms", c.leave_grace.count()},
                     {"tick_ms", c.tick.count()},
                     {"session", c.session}};
}

void from_json(const nlohmann::json& j, ServeConfig& c) {
  const ServeConfig d;
  c.session = j.contains("session") ? j.at("session").get<session::SessionConfig>() : d.session;
  c.bind = j.value("bind", d.bind);
  c.log_dir = j.value("log_dir", d.log_dir.string());
  c.static_dir = j.value("static_dir", d.static_dir.string());
  c.durable = j.value("durable", d.durable);
  c.leave_grace = session::Millis(j.value("leave_grace_ms", d.leave_grace.count()));
  c.tick = session::Millis(j.value("tick_ms", d.tick.count()));
}

ServeConfig load_serve_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::input_error, "cannot read config " + path.string());
  ServeConfig config;
  try {
    config = nlohmann::json::parse(in).get<ServeConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed, path.string() + ": " + e.what());
  }
  config.session.validate();
  if (config.tick.count() <= 0) throw Error(ErrorCode::validation_error, "tick_ms must be positive");
  if (config.leave_grace.count() < 0) throw Error(ErrorCode::validation_error, "leave_grace_ms must be >= 0");
  return config;
}

void apply_env_overrides(ServeConfig& config, const EnvLookup& env) {
  if (auto bind = env("SOT_BIND"); bind && !bind->empty()) config.bind = *bind;
  if (auto dir = env("SOT_LOG_DIR"); dir && !dir->empty()) config.log_dir = *dir;
}

std::optional<std::string> process_env(const char* name) {
  const char* value = std::getenv(name);
  if (value == nullptr) return std::nullopt;
  return std::string(value);
}

}  // namespace sot::gateway
