#pragma once

// WebSocket front end for the Gateway (Boost.Beast). Plain HTTP requests are
// answered with /health or files from an optional static directory.

#include <filesystem>
#include <memory>
#include <string>

#include "sot/gateway/gateway.hpp"

namespace sot::gateway {

struct ServerOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;
  session::Millis tick_interval{200};
  int threads = 1;
};

class WebSocketServer {
 public:
  WebSocketServer(Gateway& gateway, ServerOptions options);
  ~WebSocketServer();

  /// Port actually bound (useful with port 0).
  unsigned short port() const;
  /// Serves until stop() is called. Blocks.
  void run();
  void stop();

  struct Impl;  // defined in the implementation file only

 private:
  std::unique_ptr<Impl> impl_;
};

/// Splits "host:port" (port optional) into its parts.
std::pair<std::string, unsigned short> parse_bind(const std::string& bind, unsigned short default_port);

}  // namespace sot::gateway
