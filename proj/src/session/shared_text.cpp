#include "sot/session/shared_text.hpp"

#include <algorithm>

#include "sot/error.hpp"
#include "sot/utf8.hpp"

namespace sot::session {

namespace {

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorCode::validation_error, message); }

}  // namespace

std::string_view to_string(EditKind kind) { return kind == EditKind::insert ? "insert" : "delete"; }

const EditOperation& SharedText::apply(EditOperation op) {
  if (op.requested_position < 0) invalid("edit offset must be non-negative");
  if (op.base_revision > revision()) invalid("edit is based on a future revision");
  if (op.kind == EditKind::insert) {
    if (op.text.empty()) invalid("insert without text");
    op.length = static_cast<std::int64_t>(utf8::length(op.text));
  } else if (op.length <= 0) {
    invalid("delete length must be positive");
  }

  std::int64_t pos = op.requested_position;
  for (std::size_t i = op.base_revision; i < ops_.size(); ++i) {
    const auto& prior = ops_[i];
    if (prior.kind == EditKind::insert) {
      if (prior.position <= pos) pos += prior.length;
    } else if (prior.position + prior.length <= pos) {
      pos -= prior.length;
    } else if (prior.position < pos) {
      pos = prior.position;
    }
  }
  const auto size = static_cast<std::int64_t>(chars_.size());
  op.position = std::clamp<std::int64_t>(pos, 0, size);
  if (op.kind == EditKind::erase) op.length = std::min(op.length, size - op.position);
  op.team = team_;
  op.revision = revision() + 1;
  apply_applied(op);
  ops_.push_back(std::move(op));
  return ops_.back();
}

void SharedText::apply_applied(const EditOperation& op) {
  const auto at = static_cast<std::size_t>(op.position);
  if (op.kind == EditKind::insert) {
    const auto inserted = utf8::decode(op.text);
    auto slot = std::find(author_table_.begin(), author_table_.end(), op.author);
    const auto author = static_cast<std::size_t>(slot - author_table_.begin());
    if (slot == author_table_.end()) author_table_.push_back(op.author);
    chars_.insert(at, inserted);
    authors_.insert(authors_.begin() + static_cast<std::ptrdiff_t>(at), inserted.size(), author);
  } else {
    const auto len = static_cast<std::size_t>(op.length);
    chars_.erase(at, len);
    authors_.erase(authors_.begin() + static_cast<std::ptrdiff_t>(at),
                   authors_.begin() + static_cast<std::ptrdiff_t>(at + len));
  }
}

std::string SharedText::text() const { return utf8::encode(chars_); }

std::string SharedText::text_at(std::uint64_t revision) const {
  SharedText replay(team_);
  const auto upto = std::min<std::uint64_t>(revision, ops_.size());
  for (std::size_t i = 0; i < upto; ++i) replay.apply_applied(ops_[i]);
  return replay.text();
}

std::vector<AuthorSpan> SharedText::spans() const {
  std::vector<AuthorSpan> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= chars_.size(); ++i) {
    if (i == chars_.size() || authors_[i] != authors_[start]) {
      out.push_back({author_table_[authors_[start]], utf8::encode(std::u32string_view(chars_).substr(start, i - start))});
      start = i;
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const EditOperation& op) {
  j = nlohmann::json{{"team", op.team},
                     {"author", op.author},
                     {"kind", to_string(op.kind)},
                     {"position", op.position},
                     {"requested_position", op.requested_position},
                     {"base_revision", op.base_revision},
                     {"length", op.length},
                     {"revision", op.revision},
                     {"server_order", op.server_order},
                     {"t_ms", op.at.count()}};
  if (op.kind == EditKind::insert) j["text"] = op.text;
}

void from_json(const nlohmann::json& j, EditOperation& op) {
  op = {};
  op.team = j.at("team").get<TeamIndex>();
  op.author = j.at("author").get<UserId>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind != "insert" && kind != "delete") throw Error(ErrorCode::malformed, "unknown edit kind " + kind);
  op.kind = kind == "insert" ? EditKind::insert : EditKind::erase;
  op.position = j.value("position", std::int64_t{0});
  op.requested_position = j.value("requested_position", op.position);
  op.base_revision = j.value("base_revision", std::uint64_t{0});
  op.text = j.value("text", std::string{});
  op.length = j.value("length", std::int64_t{0});
  op.revision = j.value("revision", std::uint64_t{0});
  op.server_order = j.value("server_order", std::uint64_t{0});
  op.at = std::chrono::milliseconds(j.value("t_ms", std::int64_t{0}));
}

void to_json(nlohmann::json& j, const AuthorSpan& span) {
  j = nlohmann::json{{"author", span.author}, {"text", span.text}};
}

}  // namespace sot::session
