#pragma once

#include <compare>
#include <functional>
#include <ostream>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

namespace sot {

/// Opaque participant identifier, unique within one session roster.
class UserId {
 public:
  UserId() = default;
  explicit UserId(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend bool operator==(const UserId&, const UserId&) = default;
  friend auto operator<=>(const UserId&, const UserId&) = default;

  friend std::ostream& operator<<(std::ostream& os, const UserId& id) { return os << id.value_; }

 private:
  std::string value_;
};

inline void to_json(nlohmann::json& j, const UserId& id) { j = id.str(); }
inline void from_json(const nlohmann::json& j, UserId& id) { id = UserId(j.get<std::string>()); }

/// Index of a team within one round's assignment (0-based).
using TeamIndex = int;

}  // namespace sot

template <>
struct std::hash<sot::UserId> {
  std::size_t operator()(const sot::UserId& id) const noexcept { return std::hash<std::string>{}(id.str()); }
};
