#include "sot/affinity.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include "sot/error.hpp"
#include "sot/rng.hpp"

namespace sot::affinity {

namespace {

[[noreturn]] void input_error(const std::string& message) { throw Error(ErrorCode::input_error, message); }

void check_team_size(std::size_t n, int k) {
  if (k < 2) input_error("team size must be at least 2, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > n) {
    input_error("team size " + std::to_string(k) + " exceeds roster of " + std::to_string(n));
  }
}

void check_roster_unique(std::span<const UserId> roster) {
  std::set<UserId> seen;
  for (const auto& id : roster) {
    if (!seen.insert(id).second) input_error("duplicate roster entry " + id.str());
  }
}

std::int64_t pair_count(int k) { return static_cast<std::int64_t>(k) * (k - 1) / 2; }

int team_halves(const AffinityGraph& graph, std::span<const std::size_t> members) {
  int sum = 0;
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) sum += graph.halves(members[a], members[b]);
  }
  return sum;
}

// Calls visit(indices) for every k-subset of [0, n) in lexicographic order.
template <typename Visit>
void for_each_combination(std::size_t n, std::size_t k, Visit&& visit) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    visit(std::span<const std::size_t>(idx));
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

struct IndexedCandidate {
  std::vector<std::size_t> members;
  int halves = 0;
};

std::vector<IndexedCandidate> ranked_candidates(const AffinityGraph& graph, int k,
                                                std::optional<std::uint64_t> tie_seed) {
  check_team_size(graph.size(), k);
  std::vector<IndexedCandidate> candidates;
  for_each_combination(graph.size(), static_cast<std::size_t>(k), [&](std::span<const std::size_t> members) {
    candidates.push_back({{members.begin(), members.end()}, team_halves(graph, members)});
  });
  if (tie_seed) {
    Rng rng(*tie_seed);
    rng.shuffle(candidates);
  }
  // Every candidate has the same number of pairs, so half-unit sums order
  // exactly like the mean scores.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const IndexedCandidate& a, const IndexedCandidate& b) { return a.halves > b.halves; });
  return candidates;
}

std::vector<UserId> to_ids(const AffinityGraph& graph, std::span<const std::size_t> members) {
  std::vector<UserId> ids;
  ids.reserve(members.size());
  for (auto i : members) ids.push_back(graph.nodes()[i]);
  return ids;
}

}  // namespace

// ---------------------------------------------------------------------------

void PreferenceBallot::validate() const {
  auto reject = [&](const std::string& why) {
    throw Error(ErrorCode::ballot_rejected, "ballot from " + voter.str() + ": " + why);
  };
  if (voter.empty()) reject("missing voter");
  if (previous_teammate.has_value() != stay_with_previous.has_value()) {
    reject("stay decision must be given exactly when a previous teammate exists");
  }
  if (previous_teammate && *previous_teammate == voter) reject("voter listed as own previous teammate");
  if (chosen.size() > 2) reject("at most two candidates may be chosen");
  std::set<UserId> seen;
  for (const auto& c : chosen) {
    if (c == voter) reject("voter cannot choose themselves");
    if (previous_teammate && c == *previous_teammate) reject("previous teammate " + c.str() + " listed as chosen");
    if (!seen.insert(c).second) reject("candidate " + c.str() + " chosen twice");
  }
}

PreferenceBallot default_ballot(const UserId& voter, const std::optional<UserId>& previous_teammate) {
  PreferenceBallot ballot;
  ballot.voter = voter;
  ballot.previous_teammate = previous_teammate;
  if (previous_teammate) ballot.stay_with_previous = true;
  return ballot;
}

AffinityGraph::AffinityGraph(std::vector<UserId> nodes) : nodes_(std::move(nodes)) {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i], i).second) input_error("duplicate graph node " + nodes_[i].str());
  }
  halves_.assign(nodes_.size() * nodes_.size(), 0);
}

std::size_t AffinityGraph::index_of(const UserId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) input_error("unknown graph node " + id.str());
  return it->second;
}

void AffinityGraph::set_halves(std::size_t i, std::size_t j, int value) {
  halves_[i * nodes_.size() + j] = value;
  halves_[j * nodes_.size() + i] = value;
}

std::optional<TeamIndex> TeamAssignment::team_of(const UserId& user) const {
  for (std::size_t t = 0; t < teams.size(); ++t) {
    if (std::find(teams[t].begin(), teams[t].end(), user) != teams[t].end()) return static_cast<TeamIndex>(t);
  }
  return std::nullopt;
}

std::size_t TeamAssignment::member_count() const {
  std::size_t total = 0;
  for (const auto& team : teams) total += team.size();
  return total;
}

// ---------------------------------------------------------------------------

DirectedWeightVector encode_ballot(const PreferenceBallot& ballot, std::span<const UserId> roster) {
  ballot.validate();
  const std::set<UserId> members(roster.begin(), roster.end());
  auto require = [&](const UserId& id) {
    if (!members.contains(id)) {
      throw Error(ErrorCode::ballot_rejected, "ballot from " + ballot.voter.str() + " references unknown id " + id.str());
    }
  };
  require(ballot.voter);
  if (ballot.previous_teammate) require(*ballot.previous_teammate);
  for (const auto& c : ballot.chosen) require(c);

  DirectedWeightVector out;
  out.voter = ballot.voter;
  for (const auto& id : roster) {
    if (id != ballot.voter) out.weights[id] = kNotChosen;
  }
  for (const auto& c : ballot.chosen) out.weights[c] = kChosen;
  if (ballot.previous_teammate) {
    out.weights[*ballot.previous_teammate] = *ballot.stay_with_previous ? kStayWithPrevious : kLeavePrevious;
  }
  return out;
}

AffinityGraph build_affinity_graph(std::span<const DirectedWeightVector> vectors, std::span<const UserId> roster) {
  check_roster_unique(roster);
  AffinityGraph graph({roster.begin(), roster.end()});
  std::vector<const DirectedWeightVector*> by_voter(roster.size(), nullptr);
  for (const auto& v : vectors) {
    if (!graph.contains(v.voter)) input_error("weight vector for non-roster voter " + v.voter.str());
    auto& slot = by_voter[graph.index_of(v.voter)];
    if (slot != nullptr) input_error("duplicate weight vector for voter " + v.voter.str());
    if (v.weights.size() + 1 != roster.size()) input_error("weight vector of " + v.voter.str() + " does not cover the roster");
    slot = &v;
  }
  for (std::size_t i = 0; i < roster.size(); ++i) {
    if (by_voter[i] == nullptr) input_error("missing weight vector for voter " + roster[i].str());
  }
  auto directed = [&](std::size_t from, std::size_t to) {
    const auto& weights = by_voter[from]->weights;
    auto it = weights.find(roster[to]);
    if (it == weights.end()) input_error("weight vector of " + roster[from].str() + " lacks " + roster[to].str());
    if (it->second < kLeavePrevious || it->second > kStayWithPrevious) {
      input_error("weight out of range in vector of " + roster[from].str());
    }
    return it->second;
  };
  for (std::size_t i = 0; i < roster.size(); ++i) {
    for (std::size_t j = i + 1; j < roster.size(); ++j) graph.set_halves(i, j, directed(i, j) + directed(j, i));
  }
  return graph;
}

Rational team_score(const AffinityGraph& graph, std::span<const std::size_t> members) {
  const auto k = static_cast<int>(members.size());
  if (k < 2) input_error("team score needs at least two members");
  return Rational(team_halves(graph, members), 2 * pair_count(k));
}

Rational team_score(const AffinityGraph& graph, std::span<const UserId> members) {
  std::vector<std::size_t> idx;
  for (const auto& m : members) idx.push_back(graph.index_of(m));
  return team_score(graph, idx);
}

Rational assignment_score(const AffinityGraph& graph, const TeamAssignment& assignment) {
  Rational total;
  for (const auto& team : assignment.teams) {
    if (team.size() >= 2) total += team_score(graph, team);
  }
  return total;
}

std::vector<CandidateTeam> enumerate_candidate_teams(const AffinityGraph& graph, int k,
                                                     std::optional<std::uint64_t> tie_seed) {
  const auto ranked = ranked_candidates(graph, k, tie_seed);
  std::vector<CandidateTeam> out;
  out.reserve(ranked.size());
  for (const auto& c : ranked) out.push_back({to_ids(graph, c.members), Rational(c.halves, 2 * pair_count(k))});
  return out;
}

TeamAssignment greedy_assign(const AffinityGraph& graph, int k, std::uint64_t seed) {
  const auto ranked = ranked_candidates(graph, k, seed);
  const std::size_t n = graph.size();
  std::vector<bool> placed(n, false);
  std::vector<std::vector<std::size_t>> teams;

  for (const auto& candidate : ranked) {
    const bool free = std::none_of(candidate.members.begin(), candidate.members.end(),
                                   [&](std::size_t m) { return placed[m]; });
    if (!free) continue;
    for (auto m : candidate.members) placed[m] = true;
    teams.push_back(candidate.members);
  }

  TeamAssignment out;
  std::vector<bool> enlarged(teams.size(), false);
  for (std::size_t u = 0; u < n; ++u) {
    if (placed[u]) continue;
    // Best mean affinity toward u; teams that already absorbed a leftover
    // are used only when every team has.
    std::optional<std::size_t> best;
    Rational best_mean;
    const bool all_enlarged = std::all_of(enlarged.begin(), enlarged.end(), [](bool e) { return e; });
    for (std::size_t t = 0; t < teams.size(); ++t) {
      if (enlarged[t] && !all_enlarged) continue;
      int sum = 0;
      for (auto m : teams[t]) sum += graph.halves(u, m);
      const Rational mean(sum, 2 * static_cast<std::int64_t>(teams[t].size()));
      if (!best || mean > best_mean) {
        best = t;
        best_mean = mean;
      }
    }
    teams[*best].push_back(u);
    enlarged[*best] = true;
    placed[u] = true;
    out.residual.push_back({graph.nodes()[u], static_cast<TeamIndex>(*best), best_mean});
  }

  for (const auto& team : teams) out.teams.push_back(to_ids(graph, team));
  return out;
}

TeamAssignment brute_force_assign(const AffinityGraph& graph, int k) {
  const std::size_t n = graph.size();
  if (n > kBruteForceMaxRoster) {
    throw Error(ErrorCode::size_error, "brute force limited to " + std::to_string(kBruteForceMaxRoster) +
                                           " users, got " + std::to_string(n));
  }
  check_team_size(n, k);
  if (n % static_cast<std::size_t>(k) != 0) {
    input_error("brute force needs a roster divisible by the team size");
  }

  std::vector<bool> used(n, false);
  std::vector<std::vector<std::size_t>> current;
  std::vector<std::vector<std::size_t>> best;
  int best_halves = -1;
  int current_halves = 0;

  // Each level fixes the lowest unplaced user and tries every completion of
  // its team in lexicographic order, so the first optimum found is the
  // lexicographically smallest partition.
  auto recurse = [&](auto&& self) -> void {
    std::size_t first = 0;
    while (first < n && used[first]) ++first;
    if (first == n) {
      if (current_halves > best_halves) {
        best_halves = current_halves;
        best = current;
      }
      return;
    }
    std::vector<std::size_t> rest;
    for (std::size_t i = first + 1; i < n; ++i) {
      if (!used[i]) rest.push_back(i);
    }
    used[first] = true;
    for_each_combination(rest.size(), static_cast<std::size_t>(k - 1), [&](std::span<const std::size_t> pick) {
      std::vector<std::size_t> team{first};
      for (auto p : pick) team.push_back(rest[p]);
      for (auto m : team) used[m] = true;
      const int h = team_halves(graph, team);
      current_halves += h;
      current.push_back(team);
      self(self);
      current.pop_back();
      current_halves -= h;
      for (std::size_t i = 1; i < team.size(); ++i) used[team[i]] = false;
    });
    used[first] = false;
  };
  recurse(recurse);

  TeamAssignment out;
  for (const auto& team : best) out.teams.push_back(to_ids(graph, team));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void to_json(nlohmann::json& j, const PreferenceBallot& ballot) {
  j = nlohmann::json{{"voter", ballot.voter}, {"chosen", ballot.chosen}};
  if (ballot.previous_teammate) j["previous_teammate"] = *ballot.previous_teammate;
  if (ballot.stay_with_previous) j["stay_with_previous"] = *ballot.stay_with_previous;
}

void from_json(const nlohmann::json& j, PreferenceBallot& ballot) {
  ballot = {};
  ballot.voter = j.at("voter").get<UserId>();
  if (j.contains("previous_teammate")) ballot.previous_teammate = j.at("previous_teammate").get<UserId>();
  if (j.contains("stay_with_previous")) ballot.stay_with_previous = j.at("stay_with_previous").get<bool>();
  if (j.contains("chosen")) ballot.chosen = j.at("chosen").get<std::vector<UserId>>();
}

void to_json(nlohmann::json& j, const DirectedWeightVector& vector) {
  nlohmann::json weights = nlohmann::json::object();
  for (const auto& [id, w] : vector.weights) weights[id.str()] = w;
  j = nlohmann::json{{"voter", vector.voter}, {"weights", std::move(weights)}};
}

void from_json(const nlohmann::json& j, DirectedWeightVector& vector) {
  vector = {};
  vector.voter = j.at("voter").get<UserId>();
  for (const auto& [id, w] : j.at("weights").items()) vector.weights[UserId(id)] = w.get<int>();
}

void to_json(nlohmann::json& j, const AffinityGraph& graph) {
  nlohmann::json edges = nlohmann::json::array();
  const auto& nodes = graph.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t k = i + 1; k < nodes.size(); ++k) {
      edges.push_back({{"u", nodes[i]}, {"v", nodes[k]}, {"weight", graph.edge_weight(i, k).str()}});
    }
  }
  j = nlohmann::json{{"nodes", nodes}, {"edge_weight", std::move(edges)}};
}

void from_json(const nlohmann::json& j, AffinityGraph& graph) {
  graph = AffinityGraph(j.at("nodes").get<std::vector<UserId>>());
  for (const auto& e : j.at("edge_weight")) {
    const Rational w = Rational::parse(e.at("weight").get<std::string>());
    const Rational halves = w * Rational(2);
    if (!halves.is_integer() || halves.num() < 0 || halves.num() > 6) {
      throw Error(ErrorCode::malformed, "edge weight " + w.str() + " is not a half-integer in [0,3]");
    }
    graph.set_halves(graph.index_of(e.at("u").get<UserId>()), graph.index_of(e.at("v").get<UserId>()),
                     static_cast<int>(halves.num()));
  }
}

void to_json(nlohmann::json& j, const TeamAssignment& assignment) {
  nlohmann::json residual = nlohmann::json::array();
  for (const auto& r : assignment.residual) {
    residual.push_back({{"user", r.user}, {"team", r.team}, {"mean_weight", r.mean_weight.str()}});
  }
  j = nlohmann::json{{"teams", assignment.teams}, {"residual", std::move(residual)}};
}

void from_json(const nlohmann::json& j, TeamAssignment& assignment) {
  assignment = {};
  assignment.teams = j.at("teams").get<std::vector<std::vector<UserId>>>();
  if (j.contains("residual")) {
    for (const auto& r : j.at("residual")) {
      assignment.residual.push_back({r.at("user").get<UserId>(), r.at("team").get<TeamIndex>(),
                                     Rational::parse(r.at("mean_weight").get<std::string>())});
    }
  }
}

void to_json(nlohmann::json& j, const CandidateTeam& team) {
  j = nlohmann::json{{"members", team.members}, {"score", team.score.str()}};
}

}  // namespace sot::affinity
