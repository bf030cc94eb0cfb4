#include "sot/sim/agent.hpp"

#include <algorithm>
#include <cctype>

#include "sot/error.hpp"

namespace sot::sim {

std::string_view to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::play_to_win: return "play_to_win";
    case Strategy::profile_affinity: return "profile_affinity";
    case Strategy::loyal: return "loyal";
    case Strategy::random: return "random";
  }
  return "random";
}

Strategy strategy_from_string(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (c == '_' || c == '-') continue;
    key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (key == "playtowin") return Strategy::play_to_win;
  if (key == "profileaffinity") return Strategy::profile_affinity;
  if (key == "loyal") return Strategy::loyal;
  if (key == "random") return Strategy::random;
  throw Error(ErrorCode::validation_error, "unknown strategy '" + std::string(text) + "'");
}

namespace {

bool contains(const std::vector<UserId>& v, const UserId& u) { return std::find(v.begin(), v.end(), u) != v.end(); }

/// Candidates that may appear in `chosen`.
std::vector<UserId> eligible(const BallotContext& c) {
  std::vector<UserId> out;
  for (const auto& u : c.candidates) {
    if (u != c.self && u != c.previous_teammate && !contains(out, u)) out.push_back(u);
  }
  return out;
}

std::vector<UserId> random_subset(std::vector<UserId> pool, std::size_t max, Rng& rng) {
  rng.shuffle(pool);
  pool.resize(std::min(pool.size(), max));
  return pool;
}

}  // namespace

std::vector<UserId> pick_preferred(std::span<const UserId> candidates, std::uint64_t seed) {
  std::vector<UserId> out(candidates.begin(), candidates.end());
  Rng rng(seed);
  rng.shuffle(out);
  return out;
}

affinity::PreferenceBallot agent_select_teammates(const BallotContext& c, Strategy strategy, std::uint64_t seed) {
  Rng rng(seed);
  affinity::PreferenceBallot b;
  b.voter = c.self;
  b.previous_teammate = c.previous_teammate;
  const auto pool = eligible(c);
  const bool has_prev = c.previous_teammate.has_value() && contains(c.candidates, *c.previous_teammate);
  if (!has_prev) b.previous_teammate.reset();

  switch (strategy) {
    case Strategy::play_to_win: {
      if (c.last_winners.empty()) {
        b.chosen = random_subset(pool, 2, rng);
        if (has_prev) b.stay_with_previous = rng.bernoulli(0.5);
        break;
      }
      if (has_prev) b.stay_with_previous = contains(c.last_winners, c.self);
      for (const auto& w : c.last_winners) {
        if (b.chosen.size() < 2 && contains(pool, w) && !contains(b.chosen, w)) b.chosen.push_back(w);
      }
      break;
    }
    case Strategy::loyal: {
      if (has_prev) b.stay_with_previous = true;
      std::vector<std::pair<int, UserId>> rated;
      for (const auto& u : pool) {
        if (auto it = c.own_ratings.find(u); it != c.own_ratings.end()) rated.push_back({it->second, u});
      }
      std::stable_sort(rated.begin(), rated.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
      for (const auto& [score, u] : rated) {
        if (b.chosen.size() < 2) b.chosen.push_back(u);
      }
      if (b.chosen.empty() && !has_prev) b.chosen = random_subset(pool, 1, rng);
      break;
    }
    case Strategy::profile_affinity: {
      if (has_prev) b.stay_with_previous = contains(c.preferred, *c.previous_teammate);
      for (const auto& u : c.preferred) {
        if (b.chosen.size() < 2 && contains(pool, u) && !contains(b.chosen, u)) b.chosen.push_back(u);
      }
      break;
    }
    case Strategy::random: {
      if (has_prev) b.stay_with_previous = rng.bernoulli(0.5);
      b.chosen = random_subset(pool, rng.below(3), rng);
      break;
    }
  }
  return b;
}

TeamIndex agent_vote_story(std::span<const StoryCandidate> candidates, double bias, std::uint64_t seed) {
  if (candidates.empty()) throw Error(ErrorCode::input_error, "no story to vote for");
  Rng rng(seed);
  if (rng.bernoulli(bias)) {
    const StoryCandidate* best = &candidates.front();
    for (const auto& c : candidates) {
      if (c.length > best->length || (c.length == best->length && c.team < best->team)) best = &c;
    }
    return best->team;
  }
  return candidates[static_cast<std::size_t>(rng.below(candidates.size()))].team;
}

int contribution_rating(const Rational& share) {
  // round half up on 5 * share
  const auto scaled = share * Rational(5);
  const auto rounded = (2 * scaled.num() + scaled.den()) / (2 * scaled.den());
  return static_cast<int>(std::clamp<std::int64_t>(rounded, 1, 5));
}

namespace {

constexpr std::string_view kWords[] = {
    "the",     "lantern", "sea",     "quiet",   "door",    "stairs",  "morning", "salt",    "wind",
    "she",     "he",      "they",    "found",   "heard",   "carried", "opened",  "waited",  "remembered",
    "a",       "old",     "letter",  "map",     "bell",    "island",  "boat",    "shadow",  "window",
    "slowly",  "again",   "beneath", "across",  "toward",  "before",  "after",   "under",   "keeper",
    "light",   "fog",     "rope",    "voice",   "names",   "cold",    "bright",  "hidden",  "small",
    "and",     "but",     "then",    "while",   "because", "nobody",  "someone", "every",   "last",
    "harbour", "stone",   "glass",   "tide",    "footsteps", "promise", "storm",  "key",     "night",
};

}  // namespace

TextGenerator::TextGenerator(std::uint64_t seed, int verbosity) : rng_(seed), verbosity_(std::max(1, verbosity)) {}

std::string TextGenerator::next() {
  const auto spread = static_cast<std::uint64_t>(verbosity_);
  const auto words = 1 + spread / 2 + rng_.below(spread + 1);
  std::string out;
  for (std::uint64_t i = 0; i < words; ++i) {
    std::string word(kWords[rng_.below(std::size(kWords))]);
    if (!sentence_open_) {
      word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
      sentence_open_ = true;
    }
    out += ' ';
    out += word;
    if (rng_.below(6) == 0) {
      out += '.';
      sentence_open_ = false;
    }
  }
  return out;
}

}  // namespace sot::sim
