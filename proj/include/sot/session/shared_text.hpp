#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sot/ids.hpp"

namespace sot::session {

enum class EditKind { insert, erase };

/// One authored change to a team's text, in the form it was applied.
struct EditOperation {
  TeamIndex team = 0;
  UserId author;
  EditKind kind = EditKind::insert;
  std::int64_t position = 0;            // code-point offset after rebasing
  std::int64_t requested_position = 0;  // offset as sent by the client
  std::uint64_t base_revision = 0;      // revision the client edited against
  std::string text;                     // inserted text (insert only)
  std::int64_t length = 0;              // code points inserted or removed
  std::uint64_t revision = 0;           // revision after applying this op
  std::uint64_t server_order = 0;
  std::chrono::milliseconds at{0};

  friend bool operator==(const EditOperation&, const EditOperation&) = default;
};

struct AuthorSpan {
  UserId author;
  std::string text;
};

/// A team's shared editor. Operations are serialized in server order: an
/// operation made against an older revision has its offset shifted by the
/// length deltas of everything applied since.
class SharedText {
 public:
  SharedText() = default;
  explicit SharedText(TeamIndex team) : team_(team) {}

  /// Rebase `op` (position/base_revision as sent) and apply it. Returns the
  /// applied form. Throws Error(validation_error) for empty inserts,
  /// non-positive delete lengths, negative offsets or a future base.
  const EditOperation& apply(EditOperation op);

  std::string text() const;
  /// Text as it stood right after `revision` operations.
  std::string text_at(std::uint64_t revision) const;
  std::size_t length() const { return chars_.size(); }
  std::uint64_t revision() const { return ops_.size(); }
  const std::vector<EditOperation>& operations() const { return ops_; }
  /// Maximal runs of characters by the same author, in document order.
  std::vector<AuthorSpan> spans() const;

  friend bool operator==(const SharedText& a, const SharedText& b) {
    return a.team_ == b.team_ && a.ops_ == b.ops_;
  }

 private:
  void apply_applied(const EditOperation& op);

  TeamIndex team_ = 0;
  std::u32string chars_;
  std::vector<std::size_t> authors_;  // index into author_table_, parallel to chars_
  std::vector<UserId> author_table_;
  std::vector<EditOperation> ops_;
};

std::string_view to_string(EditKind kind);
void to_json(nlohmann::json& j, const EditOperation& op);
void from_json(const nlohmann::json& j, EditOperation& op);
void to_json(nlohmann::json& j, const AuthorSpan& span);

}  // namespace sot::session
