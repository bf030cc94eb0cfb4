#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sot {

enum class ErrorCode {
  ballot_rejected,
  input_error,
  size_error,
  lifecycle_error,
  validation_error,
  relationship_error,
  idempotency_error,
  self_view_error,
  unsupported_arity,
  stale_phase,
  not_in_roster,
  unauthorized,
  unknown_session,
  malformed,
  session_aborted,
};

std::string_view to_string(ErrorCode code);

// Single exception type for every domain failure; the code is what callers
// branch on, the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sot
