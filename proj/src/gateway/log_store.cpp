#include "sot/gateway/log_store.hpp"

#include <fstream>
#include <unistd.h>

#include "sot/error.hpp"

namespace sot::gateway {

using session::LogRecord;

LogReadResult read_log(std::istream& in) {
  LogReadResult out;
  std::string line;
  std::size_t number = 0;
  std::optional<std::pair<std::size_t, std::string>> pending_error;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    if (pending_error) {
      throw Error(ErrorCode::malformed,
                  "log line " + std::to_string(pending_error->first) + ": " + pending_error->second);
    }
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      pending_error = std::make_pair(number, std::string("not valid JSON"));
      continue;
    }
    try {
      out.records.push_back(LogRecord::from_json(j));
    } catch (const Error& e) {
      pending_error = std::make_pair(number, std::string(e.what()));
    }
  }
  // only the last line may be damaged
  out.truncated_tail = pending_error.has_value();
  return out;
}

LogReadResult read_log_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::input_error, "cannot open log " + path.string());
  return read_log(in);
}

LogWriter::LogWriter(const std::filesystem::path& path, bool durable) : path_(path), durable_(durable) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file_ = std::fopen(path.c_str(), "a");
  if (file_ == nullptr) throw Error(ErrorCode::input_error, "cannot open log " + path.string() + " for writing");
}

LogWriter::~LogWriter() {
  if (file_ != nullptr) std::fclose(file_);
}

void LogWriter::append(std::span<const LogRecord> records) {
  if (records.empty()) return;
  for (const auto& r : records) {
    const auto line = r.to_line();
    std::fwrite(line.data(), 1, line.size(), file_);
    std::fputc('\n', file_);
  }
  if (std::fflush(file_) != 0) throw Error(ErrorCode::input_error, "write to " + path_.string() + " failed");
  if (durable_) ::fsync(fileno(file_));
}

void write_log_file(const std::filesystem::path& path, std::span<const LogRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::input_error, "cannot write " + path.string());
  for (const auto& r : records) out << r.to_line() << '\n';
}

nlohmann::json ReplayReport::to_json() const {
  nlohmann::json j{{"session", session_id},   {"records", records},     {"inputs", inputs},
                   {"finished", finished},    {"incomplete", incomplete}, {"final_state", final_state}};
  if (divergence) {
    j["divergence"] = {{"index", divergence->index},
                       {"reason", divergence->reason},
                       {"expected", divergence->expected},
                       {"actual", divergence->actual}};
  } else {
    j["divergence"] = nullptr;
  }
  j["report"] = report ? nlohmann::json(*report) : nlohmann::json(nullptr);
  return j;
}

ReplayReport replay_event_log(std::span<const LogRecord> log, const std::optional<session::SessionConfig>& config,
                              bool truncated_tail) {
  ReplayReport out;
  out.records = log.size();
  if (log.empty()) {
    session::SessionEngine engine("", config.value_or(session::SessionConfig{}));
    out.final_state = engine.state();
    out.incomplete = truncated_tail;
    return out;
  }

  out.session_id = log.front().session;
  if (log.front().type != "session_created") {
    out.divergence = Divergence{0, "log does not start with session_created", log.front().to_json(), nullptr};
    out.incomplete = true;
    return out;
  }
  session::SessionConfig logged;
  try {
    logged = log.front().payload.at("config").get<session::SessionConfig>();
  } catch (const std::exception& e) {
    throw Error(ErrorCode::malformed, std::string("bad session config in log: ") + e.what());
  }
  session::SessionEngine engine(out.session_id, logged);

  auto record_diverges = [&](std::size_t upto) {
    const auto& regenerated = engine.log();
    const auto limit = std::min(upto, regenerated.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (i < log.size() && regenerated[i].to_json() != log[i].to_json()) {
        out.divergence = Divergence{i, "record differs", log[i].to_json(), regenerated[i].to_json()};
        return true;
      }
    }
    return false;
  };

  if (config && !(*config == logged)) {
    out.divergence = Divergence{0, "config differs from the supplied config", log.front().to_json(),
                                nlohmann::json{{"config", *config}}};
  }

  for (std::size_t i = 1; i < log.size() && !out.divergence; ++i) {
    const auto& record = log[i];
    if (record.session != out.session_id) {
      out.divergence = Divergence{i, "record belongs to another session", record.to_json(), nullptr};
      break;
    }
    if (!session::is_input_record(record.type)) continue;
    // everything before this input must already match
    if (record_diverges(i)) break;
    if (engine.log().size() < i) {
      const auto at = engine.log().size();
      out.divergence = Divergence{at, "record not produced by replay", log[at].to_json(), nullptr};
      break;
    }
    if (engine.log().size() > i) {
      out.divergence = Divergence{i, "record missing from log", record.to_json(), engine.log()[i].to_json()};
      break;
    }
    try {
      const auto command = record.type == "input_rejected"
                               ? session::command_from_json(record.payload.at("action").get<std::string>(),
                                                            record.payload.at("input"))
                               : session::command_from_json(record.type, record.payload);
      engine.apply(command, record.at);
      ++out.inputs;
    } catch (const std::exception& e) {
      out.divergence = Divergence{i, std::string("input could not be applied: ") + e.what(), record.to_json(), nullptr};
    }
  }

  if (!out.divergence) {
    const auto& regenerated = engine.log();
    if (!record_diverges(log.size())) {
      if (regenerated.size() < log.size()) {
        out.divergence = Divergence{regenerated.size(), "record not produced by replay",
                                    log[regenerated.size()].to_json(), nullptr};
      } else if (regenerated.size() > log.size()) {
        // the original stops part-way through the effects of its last input
        out.incomplete = true;
      }
    }
  }

  out.finished = engine.finished();
  out.incomplete = out.incomplete || truncated_tail || !out.finished;
  out.final_state = engine.state();
  out.report = engine.state().report;
  return out;
}

}  // namespace sot::gateway
