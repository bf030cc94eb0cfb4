#pragma once

// Newline-delimited JSON event logs: one LogRecord per line.

#include <cstdio>
#include <filesystem>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sot/session/engine.hpp"

namespace sot::gateway {

struct LogReadResult {
  std::vector<session::LogRecord> records;
  bool truncated_tail = false;  // last line was cut off and ignored
};

/// Reads records until end of input. A final line that fails to parse is
/// treated as a torn write (truncated_tail); a bad line elsewhere throws
/// Error(malformed) naming the line number.
LogReadResult read_log(std::istream& in);
LogReadResult read_log_file(const std::filesystem::path& path);

/// Append-only writer. Each append is flushed before returning so callers
/// can publish effects after it (write-ahead). `durable` adds an fsync.
class LogWriter {
 public:
  LogWriter(const std::filesystem::path& path, bool durable);
  ~LogWriter();
  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  void append(std::span<const session::LogRecord> records);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  bool durable_ = false;
};

void write_log_file(const std::filesystem::path& path, std::span<const session::LogRecord> records);

struct Divergence {
  std::size_t index = 0;  // position in the original log
  std::string reason;
  nlohmann::json expected;  // original record (null if missing)
  nlohmann::json actual;    // regenerated record (null if missing)
};

struct ReplayReport {
  std::string session_id;
  std::size_t records = 0;  // records in the original log
  std::size_t inputs = 0;   // input records fed to the engine
  bool finished = false;    // replayed session reached finalized/aborted
  bool incomplete = false;  // log ends before the session did
  std::optional<Divergence> divergence;
  nlohmann::json final_state;
  std::optional<session::FinalReport> report;

  nlohmann::json to_json() const;
};

/// Feeds the log's input records to a fresh engine and compares the
/// regenerated log with the original, record by record. An empty log yields
/// the initial state for `config` (default config if absent).
ReplayReport replay_event_log(std::span<const session::LogRecord> log,
                              const std::optional<session::SessionConfig>& config = std::nullopt,
                              bool truncated_tail = false);

}  // namespace sot::gateway
