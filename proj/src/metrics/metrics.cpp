#include "sot/metrics/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <sstream>

#include "sot/error.hpp"
#include "sot/rng.hpp"
#include "sot/session/shared_text.hpp"
#include "sot/utf8.hpp"

namespace sot::metrics {

using session::LogRecord;

namespace {

SessionLog::Round& round_at(SessionLog& log, int index) {
  if (index < 1) throw Error(ErrorCode::malformed, "record outside any round in session " + log.id);
  if (log.rounds.size() < static_cast<std::size_t>(index)) {
    const auto old = log.rounds.size();
    log.rounds.resize(static_cast<std::size_t>(index));
    for (auto i = old; i < log.rounds.size(); ++i) log.rounds[i].index = static_cast<int>(i + 1);
  }
  return log.rounds[static_cast<std::size_t>(index - 1)];
}

/// Ballot restricted to `roster`, as the engine does before encoding.
affinity::PreferenceBallot restrict_to(affinity::PreferenceBallot b, const std::set<UserId>& roster) {
  if (b.previous_teammate && !roster.contains(*b.previous_teammate)) {
    b.previous_teammate.reset();
    b.stay_with_previous.reset();
  }
  std::erase_if(b.chosen, [&](const UserId& c) { return !roster.contains(c); });
  return b;
}

std::vector<affinity::DirectedWeightVector> round_vectors(const SessionLog::Round& round) {
  const std::set<UserId> roster(round.roster.begin(), round.roster.end());
  std::vector<affinity::DirectedWeightVector> out;
  for (const auto& voter : round.roster) {
    auto it = round.ballots.find(voter);
    const auto ballot = it != round.ballots.end() ? restrict_to(it->second, roster) : affinity::default_ballot(voter, std::nullopt);
    out.push_back(affinity::encode_ballot(ballot, round.roster));
  }
  return out;
}

nlohmann::json rational_json(const Rational& r) { return {{"exact", r.str()}, {"value", r.to_double()}}; }

std::string csv_field(const nlohmann::json& v) {
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (s.find_first_of(",\"\n") != std::string::npos) {
    std::string quoted = "\"";
    for (char c : s) {
      if (c == '"') quoted += '"';
      quoted += c;
    }
    return quoted + "\"";
  }
  return s;
}

}  // namespace

std::vector<SessionLog> load_sessions(std::span<const LogRecord> records) {
  std::vector<SessionLog> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto [it, inserted] = index.emplace(r.session, out.size());
    if (inserted) {
      if (r.type != "session_created") {
        throw Error(ErrorCode::malformed, "session " + r.session + " does not start with session_created");
      }
      SessionLog log;
      log.id = r.session;
      log.config = r.payload.at("config").get<session::SessionConfig>();
      out.push_back(std::move(log));
    }
    auto& log = out[it->second];
    if (!inserted && r.type == "session_created") {
      throw Error(ErrorCode::malformed, "session id " + r.session + " appears in more than one log");
    }
    log.records.push_back(r);
    const auto& p = r.payload;
    if (r.type == "teams_formed") {
      auto& round = round_at(log, p.at("round").get<int>());
      round.roster = p.at("roster").get<std::vector<UserId>>();
      round.teams = p.at("assignment").get<affinity::TeamAssignment>();
      round.ops.assign(round.teams.teams.size(), {});
      round.chat_chars.assign(round.teams.teams.size(), 0);
    } else if (r.type == "submit_ballot" || r.type == "ballot_defaulted") {
      const auto ballot = p.at("ballot").get<affinity::PreferenceBallot>();
      round_at(log, r.round).ballots[ballot.voter] = ballot;
    } else if (r.type == "edit_op") {
      auto& round = round_at(log, r.round);
      auto op = p.at("op").get<session::EditOperation>();
      const auto team = static_cast<std::size_t>(op.team);
      if (team >= round.ops.size()) throw Error(ErrorCode::malformed, "edit for unknown team in " + log.id);
      round.ops[team].push_back(std::move(op));
    } else if (r.type == "chat") {
      auto& round = round_at(log, r.round);
      const auto team = p.at("team").get<std::size_t>();
      if (team < round.chat_chars.size()) round.chat_chars[team] += utf8::length(p.at("text").get<std::string>());
    } else if (r.type == "winner_announced") {
      round_at(log, p.at("round").get<int>()).winner = p.at("winner").get<TeamIndex>();
    } else if (r.type == "session_finalized") {
      log.finalized = true;
    } else if (r.type == "session_aborted") {
      log.aborted = true;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

AuthorSequence author_sequence(std::span<const session::EditOperation> ops, std::optional<Millis> gap_threshold) {
  AuthorSequence out;
  const session::EditOperation* prev = nullptr;
  for (const auto& op : ops) {
    const bool new_author = prev == nullptr || op.author != prev->author;
    const bool paused = prev != nullptr && gap_threshold && op.at - prev->at > *gap_threshold;
    if (new_author || paused) out.sequence.push_back(op.author);
    prev = &op;
  }
  return out;
}

TurnTakingScore turn_taking_score(const AuthorSequence& seq, const std::optional<UserId>& a_label) {
  TurnTakingScore out;
  out.length = seq.sequence.size();
  std::set<UserId> authors(seq.sequence.begin(), seq.sequence.end());
  if (a_label) authors.insert(*a_label);
  if (authors.size() > 2) {
    throw Error(ErrorCode::unsupported_arity, "turn taking is defined for two authors, got " + std::to_string(authors.size()));
  }
  if (seq.sequence.empty()) {
    out.a_label = a_label;
    return out;
  }
  const UserId a = a_label.value_or(seq.sequence.front());
  out.a_label = a;
  std::int64_t a_count = 0;
  std::int64_t b_count = 0;
  for (const auto& author : seq.sequence) {
    const auto value = author == a ? -(++a_count) : ++b_count;
    out.encoding.push_back(value);
    out.raw_sum += value;
  }
  const auto n = static_cast<std::int64_t>(out.length);
  out.normalized = Rational(2 * out.raw_sum, n * (n + 1));
  out.per_length = Rational(out.raw_sum, n);
  return out;
}

// ---------------------------------------------------------------------------

std::size_t CumulativeAffinityNetwork::index_of(const std::string& node) const {
  auto it = std::find(nodes.begin(), nodes.end(), node);
  if (it == nodes.end()) throw Error(ErrorCode::input_error, "unknown node " + node);
  return static_cast<std::size_t>(it - nodes.begin());
}

Rational CumulativeAffinityNetwork::weight(std::size_t i, std::size_t j) const {
  auto get = [&](std::size_t a, std::size_t b) {
    auto it = edges.find({a, b});
    return it == edges.end() ? Rational(0) : it->second;
  };
  if (directed) return get(i, j) + get(j, i);
  return get(std::min(i, j), std::max(i, j));
}

CumulativeAffinityNetwork cumulative_affinity(std::span<const SessionLog> logs, const AffinityOptions& options) {
  CumulativeAffinityNetwork net;
  net.directed = options.directed;
  const bool qualify = logs.size() > 1;
  std::map<std::string, std::size_t> index;
  auto node = [&](const std::string& session, const UserId& user) {
    const auto name = qualify ? session + "/" + user.str() : user.str();
    auto [it, inserted] = index.emplace(name, net.nodes.size());
    if (inserted) net.nodes.push_back(name);
    return it->second;
  };

  std::set<std::string> conditions;
  for (const auto& log : logs) conditions.insert(std::string(session::to_string(log.config.condition)));
  if (conditions.size() > 1 && !options.allow_mixed) {
    std::string list;
    for (const auto& c : conditions) list += (list.empty() ? "" : ", ") + c;
    net.warnings.push_back("logs mix conditions (" + list + ")");
  }

  for (const auto& log : logs) {
    for (const auto& user : [&] {
           std::vector<UserId> all;
           for (const auto& r : log.rounds) all.insert(all.end(), r.roster.begin(), r.roster.end());
           return all;
         }()) {
      node(log.id, user);
    }
    bool skipped = false;
    for (const auto& round : log.rounds) {
      if (options.up_to_round && round.index > *options.up_to_round) break;
      if (round.roster.empty()) continue;
      if (round.ballots.empty()) {
        skipped = true;
        continue;
      }
      RoundGraph rg{log.id, round.index, {}, round_vectors(round)};
      rg.graph = affinity::build_affinity_graph(rg.vectors, round.roster);
      const auto n = round.roster.size();
      for (std::size_t i = 0; i < n; ++i) {
        const auto ni = node(log.id, round.roster[i]);
        if (options.directed) {
          for (const auto& [target, w] : rg.vectors[i].weights) net.edges[{ni, node(log.id, target)}] += Rational(w);
          continue;
        }
        for (std::size_t j = i + 1; j < n; ++j) {
          const auto nj = node(log.id, round.roster[j]);
          net.edges[{std::min(ni, nj), std::max(ni, nj)}] += rg.graph.edge_weight(i, j);
        }
      }
      net.rounds.push_back(std::move(rg));
    }
    if (skipped) net.warnings.push_back("session " + log.id + " has rounds without ballots; they add no edges");
  }
  return net;
}

Clustering detect_clusters(const CumulativeAffinityNetwork& net, std::uint64_t seed) {
  const auto n = net.nodes.size();
  Clustering out;
  if (n == 0) return out;

  // Node pairs that shared a session; only these can be linked.
  auto session_of = [&](const std::string& name) {
    const auto slash = name.find('/');
    return slash == std::string::npos ? std::string() : name.substr(0, slash);
  };
  Rational total(0);
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (session_of(net.nodes[i]) != session_of(net.nodes[j])) continue;
      total += net.weight(i, j);
      ++pairs;
    }
  }
  out.threshold = pairs > 0 ? total / Rational(pairs) : Rational(0);

  std::vector<std::vector<std::pair<std::size_t, Rational>>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (session_of(net.nodes[i]) != session_of(net.nodes[j])) continue;
      const auto w = net.weight(i, j);
      if (w > Rational(0) && w >= out.threshold) {
        adj[i].push_back({j, w});
        adj[j].push_back({i, w});
      }
    }
  }

  std::vector<std::size_t> labels(n);
  std::iota(labels.begin(), labels.end(), 0);
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  constexpr int kMaxSweeps = 200;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    rng.shuffle(order);
    bool changed = false;
    for (const auto i : order) {
      if (adj[i].empty()) continue;
      std::map<std::size_t, Rational> score;
      for (const auto& [j, w] : adj[i]) score[labels[j]] += w;
      Rational best(0);
      for (const auto& [label, s] : score) best = std::max(best, s);
      std::vector<std::size_t> tied;
      for (const auto& [label, s] : score)
        if (s == best) tied.push_back(label);
      if (std::find(tied.begin(), tied.end(), labels[i]) != tied.end()) continue;
      labels[i] = tied.size() == 1 ? tied.front() : rng.pick(tied);
      changed = true;
    }
    if (!changed) break;
  }

  std::map<std::size_t, int> renumber;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, inserted] = renumber.emplace(labels[i], static_cast<int>(renumber.size()));
    out.labels[i] = it->second;
  }
  out.count = static_cast<int>(renumber.size());
  return out;
}

// ---------------------------------------------------------------------------

std::pair<Rational, Rational> StabilityWinTable::pooled_votes(std::span<const VoteRow> rows) {
  std::int64_t ws = 0, wc = 0, ns = 0, nc = 0;
  for (const auto& r : rows) {
    ws += r.winner_vote_sum;
    wc += r.prior_winners;
    ns += r.non_winner_vote_sum;
    nc += r.non_winners;
  }
  return {wc ? Rational(ws, wc) : Rational(0), nc ? Rational(ns, nc) : Rational(0)};
}

StabilityWinTable stability_win_table(std::span<const SessionLog> logs) {
  StabilityWinTable table;
  auto cohort = [&](int together) -> CohortRow& {
    if (table.cohorts.size() < static_cast<std::size_t>(together)) {
      const auto old = table.cohorts.size();
      table.cohorts.resize(static_cast<std::size_t>(together));
      for (auto i = old; i < table.cohorts.size(); ++i) table.cohorts[i].rounds_together = static_cast<int>(i + 1);
    }
    return table.cohorts[static_cast<std::size_t>(together - 1)];
  };

  for (const auto& log : logs) {
    if (!log.finalized) {
      table.partial = true;
      table.notes.push_back("session " + log.id + " is incomplete; counted rounds with a winner only");
    }
    struct Run {
      int length = 0;
      int wins = 0;
    };
    std::map<std::vector<UserId>, Run> open;
    auto close = [&](const Run& run) {
      auto& row = cohort(run.length);
      row.teams += 1;
      row.wins += run.wins;
      table.teams += 1;
    };
    for (const auto& round : log.rounds) {
      if (round.teams.teams.empty() || !round.winner) break;
      table.rounds += 1;
      std::map<std::vector<UserId>, Run> next;
      for (std::size_t t = 0; t < round.teams.teams.size(); ++t) {
        auto members = round.teams.teams[t];
        std::sort(members.begin(), members.end());
        Run run;
        if (auto it = open.find(members); it != open.end()) {
          run = it->second;
          open.erase(it);
        }
        run.length += 1;
        if (static_cast<std::size_t>(*round.winner) == t) run.wins += 1;
        next.emplace(std::move(members), run);
      }
      for (const auto& [members, run] : open) close(run);
      open = std::move(next);
    }
    for (const auto& [members, run] : open) close(run);

    // selection votes towards earlier winners
    std::set<UserId> winners;
    for (const auto& round : log.rounds) {
      if (round.index >= 2 && !round.ballots.empty() && !round.roster.empty()) {
        const std::set<UserId> roster(round.roster.begin(), round.roster.end());
        std::map<UserId, int> votes;
        std::map<UserId, int> weight;
        for (const auto& [voter, raw] : round.ballots) {
          if (!roster.contains(voter)) continue;
          const auto b = restrict_to(raw, roster);
          for (const auto& c : b.chosen) votes[c] += 1;
          if (b.previous_teammate && b.stay_with_previous == true) votes[*b.previous_teammate] += 1;
          for (const auto& [target, w] : affinity::encode_ballot(b, round.roster).weights) weight[target] += w;
        }
        VoteRow row;
        row.session = log.id;
        row.round = round.index;
        int winner_weight = 0, other_weight = 0;
        for (const auto& u : round.roster) {
          if (winners.contains(u)) {
            row.prior_winners += 1;
            row.winner_vote_sum += votes[u];
            winner_weight += weight[u];
          } else {
            row.non_winners += 1;
            row.non_winner_vote_sum += votes[u];
            other_weight += weight[u];
          }
        }
        if (row.prior_winners > 0) {
          row.winner_votes = Rational(row.winner_vote_sum, row.prior_winners);
          row.winner_weight = Rational(winner_weight, row.prior_winners);
        }
        if (row.non_winners > 0) {
          row.non_winner_votes = Rational(row.non_winner_vote_sum, row.non_winners);
          row.non_winner_weight = Rational(other_weight, row.non_winners);
        }
        table.votes.push_back(row);
      }
      if (round.winner && static_cast<std::size_t>(*round.winner) < round.teams.teams.size()) {
        for (const auto& m : round.teams.teams[static_cast<std::size_t>(*round.winner)]) winners.insert(m);
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------

nlohmann::json build_report(std::span<const SessionLog> logs, const ReportOptions& options) {
  nlohmann::json report;
  report["definitions"] = {
      {"segment", "maximal run of consecutive edit operations (server order) by one author"},
      {"gap_threshold_ms", options.gap_threshold ? nlohmann::json(options.gap_threshold->count()) : nlohmann::json(nullptr)},
      {"normalization", "2*raw_sum/(n*(n+1))"},
      {"selection_vote", "a user named in chosen, or the previous teammate of a stay ballot (submitted or defaulted)"},
      {"clusters", "edges below the mean pair weight dropped, then seeded label propagation"},
  };
  report["warnings"] = nlohmann::json::array();

  auto sessions = nlohmann::json::array();
  std::map<std::string, std::vector<int>> cluster_counts;
  for (const auto& log : logs) {
    nlohmann::json s{{"session", log.id},
                     {"condition", session::to_string(log.config.condition)},
                     {"finalized", log.finalized},
                     {"aborted", log.aborted},
                     {"rounds", log.rounds.size()}};
    auto rows = nlohmann::json::array();
    for (const auto& round : log.rounds) {
      for (std::size_t t = 0; t < round.ops.size(); ++t) {
        nlohmann::json row{{"round", round.index}, {"team", t}, {"members", round.teams.teams[t]}};
        const auto seq = author_sequence(round.ops[t], options.gap_threshold);
        row["sequence"] = seq.sequence;
        session::SharedText text(static_cast<TeamIndex>(t));
        try {
          for (const auto& op : round.ops[t]) text.apply(op);
          row["story_chars"] = text.length();
        } catch (const Error&) {
          row["story_chars"] = nullptr;
        }
        row["chat_chars"] = round.chat_chars[t];
        try {
          // sign convention: the first listed team member is A
          const auto score = turn_taking_score(seq, round.teams.teams[t].front());
          row["encoding"] = score.encoding;
          row["raw_sum"] = score.raw_sum;
          row["length"] = score.length;
          row["normalized"] = rational_json(score.normalized);
          row["per_length"] = rational_json(score.per_length);
          row["a_label"] = *score.a_label;
        } catch (const Error& e) {
          row["error"] = std::string(to_string(e.code())) + ": " + e.what();
        }
        rows.push_back(std::move(row));
      }
    }
    s["turn_taking"] = std::move(rows);

    const SessionLog single[] = {log};
    const auto net = cumulative_affinity(single, {options.directed, true, std::nullopt});
    if (!net.rounds.empty()) {
      const auto clusters = detect_clusters(net, options.cluster_seed);
      nlohmann::json labels = nlohmann::json::object();
      for (std::size_t i = 0; i < net.nodes.size(); ++i) labels[net.nodes[i]] = clusters.labels[i];
      s["clusters"] = {{"count", clusters.count}, {"labels", labels}, {"threshold", rational_json(clusters.threshold)}};
      cluster_counts[std::string(session::to_string(log.config.condition))].push_back(clusters.count);
    } else {
      s["clusters"] = nullptr;
    }
    sessions.push_back(std::move(s));
  }
  report["sessions"] = std::move(sessions);

  nlohmann::json by_condition = nlohmann::json::object();
  for (const auto& [condition, counts] : cluster_counts) {
    const auto sum = std::accumulate(counts.begin(), counts.end(), 0);
    by_condition[condition] = {{"sessions", counts.size()},
                               {"counts", counts},
                               {"mean_count", rational_json(Rational(sum, static_cast<std::int64_t>(counts.size())))}};
  }
  report["clusters_by_condition"] = std::move(by_condition);

  const auto table = stability_win_table(logs);
  auto cohorts = nlohmann::json::array();
  for (const auto& c : table.cohorts) {
    cohorts.push_back({{"rounds_together", c.rounds_together},
                       {"teams", c.teams},
                       {"wins", c.wins},
                       {"win_share", c.teams ? rational_json(Rational(c.wins, c.teams)) : nlohmann::json(nullptr)}});
  }
  report["stability"] = {{"cohorts", cohorts},
                         {"teams", table.teams},
                         {"rounds", table.rounds},
                         {"partial", table.partial},
                         {"notes", table.notes}};
  auto votes = nlohmann::json::array();
  for (const auto& v : table.votes) {
    votes.push_back({{"session", v.session},
                     {"round", v.round},
                     {"prior_winners", v.prior_winners},
                     {"non_winners", v.non_winners},
                     {"winner_vote_sum", v.winner_vote_sum},
                     {"non_winner_vote_sum", v.non_winner_vote_sum},
                     {"winner_mean_votes", rational_json(v.winner_votes)},
                     {"non_winner_mean_votes", rational_json(v.non_winner_votes)},
                     {"winner_mean_weight", rational_json(v.winner_weight)},
                     {"non_winner_mean_weight", rational_json(v.non_winner_weight)}});
  }
  const auto [pw, pn] = StabilityWinTable::pooled_votes(table.votes);
  report["vote_concentration"] = {{"rows", votes},
                                  {"pooled", {{"winner_mean_votes", rational_json(pw)}, {"non_winner_mean_votes", rational_json(pn)}}}};

  const auto all = cumulative_affinity(logs, {options.directed, false, std::nullopt});
  for (const auto& w : all.warnings) report["warnings"].push_back(w);
  return report;
}

std::map<std::string, std::string> csv_tables(const nlohmann::json& report) {
  std::map<std::string, std::string> out;
  auto value = [](const nlohmann::json& j) { return j.is_object() && j.contains("exact") ? j.at("exact") : j; };
  {
    std::ostringstream csv;
    csv << "session,condition,round,team,length,raw_sum,normalized,normalized_value,per_length,story_chars,chat_chars,sequence\n";
    for (const auto& s : report.at("sessions")) {
      for (const auto& r : s.at("turn_taking")) {
        if (r.contains("error")) continue;
        std::string seq;
        for (const auto& a : r.at("sequence")) seq += (seq.empty() ? "" : " ") + a.get<std::string>();
        csv << csv_field(s.at("session")) << ',' << csv_field(s.at("condition")) << ',' << r.at("round") << ','
            << r.at("team") << ',' << r.at("length") << ',' << r.at("raw_sum") << ',' << csv_field(value(r.at("normalized")))
            << ',' << r.at("normalized").at("value") << ',' << csv_field(value(r.at("per_length"))) << ','
            << csv_field(r.at("story_chars")) << ',' << r.at("chat_chars") << ',' << csv_field(seq) << '\n';
      }
    }
    out["turn_taking"] = csv.str();
  }
  {
    std::ostringstream csv;
    csv << "rounds_together,teams,wins\n";
    for (const auto& c : report.at("stability").at("cohorts")) {
      csv << c.at("rounds_together") << ',' << c.at("teams") << ',' << c.at("wins") << '\n';
    }
    out["stability"] = csv.str();
  }
  {
    std::ostringstream csv;
    csv << "session,round,prior_winners,non_winners,winner_mean_votes,non_winner_mean_votes,winner_mean_weight,non_winner_mean_weight\n";
    for (const auto& v : report.at("vote_concentration").at("rows")) {
      csv << csv_field(v.at("session")) << ',' << v.at("round") << ',' << v.at("prior_winners") << ','
          << v.at("non_winners") << ',' << v.at("winner_mean_votes").at("value") << ','
          << v.at("non_winner_mean_votes").at("value") << ',' << v.at("winner_mean_weight").at("value") << ','
          << v.at("non_winner_mean_weight").at("value") << '\n';
    }
    out["votes"] = csv.str();
  }
  {
    std::ostringstream csv;
    csv << "session,condition,clusters\n";
    for (const auto& s : report.at("sessions")) {
      if (s.at("clusters").is_null()) continue;
      csv << csv_field(s.at("session")) << ',' << csv_field(s.at("condition")) << ',' << s.at("clusters").at("count") << '\n';
    }
    out["clusters"] = csv.str();
  }
  return out;
}

std::string text_report(const nlohmann::json& report) {
  std::ostringstream out;
  auto exact = [](const nlohmann::json& j) { return j.is_object() ? j.at("exact").get<std::string>() : j.dump(); };
  auto row = [&](std::initializer_list<std::pair<std::string, int>> cells) {
    for (const auto& [text, width] : cells) {
      out << text;
      for (int pad = width - static_cast<int>(text.size()); pad > 0; --pad) out << ' ';
      out << ' ';
    }
    out << '\n';
  };

  out << "Turn taking (segments of consecutive edits by one author)\n";
  row({{"session", 12}, {"round", 5}, {"team", 4}, {"n", 4}, {"raw", 6}, {"normalized", 10}, {"sequence", 0}});
  for (const auto& s : report.at("sessions")) {
    for (const auto& r : s.at("turn_taking")) {
      std::string seq;
      for (const auto& a : r.at("sequence")) seq += (seq.empty() ? "" : " ") + a.get<std::string>();
      if (r.contains("error")) {
        row({{s.at("session").get<std::string>(), 12}, {std::to_string(r.at("round").get<int>()), 5},
             {std::to_string(r.at("team").get<int>()), 4}, {r.at("error").get<std::string>(), 0}});
        continue;
      }
      row({{s.at("session").get<std::string>(), 12},
           {std::to_string(r.at("round").get<int>()), 5},
           {std::to_string(r.at("team").get<int>()), 4},
           {std::to_string(r.at("length").get<std::size_t>()), 4},
           {std::to_string(r.at("raw_sum").get<std::int64_t>()), 6},
           {exact(r.at("normalized")), 10},
           {seq, 0}});
    }
  }

  const auto& st = report.at("stability");
  out << "\nStability and wins (" << st.at("teams") << " teams, " << st.at("rounds") << " rounds"
      << (st.at("partial").get<bool>() ? ", partial" : "") << ")\n";
  row({{"rounds_together", 15}, {"teams", 5}, {"wins", 4}, {"win_share", 0}});
  for (const auto& c : st.at("cohorts")) {
    row({{std::to_string(c.at("rounds_together").get<int>()), 15},
         {std::to_string(c.at("teams").get<int>()), 5},
         {std::to_string(c.at("wins").get<int>()), 4},
         {c.at("win_share").is_null() ? "-" : exact(c.at("win_share")), 0}});
  }
  for (const auto& n : st.at("notes")) out << "note: " << n.get<std::string>() << '\n';

  const auto& vc = report.at("vote_concentration");
  out << "\nSelection votes received (rounds >= 2)\n";
  row({{"session", 12}, {"round", 5}, {"winners", 7}, {"others", 6}, {"winner_mean", 11}, {"other_mean", 0}});
  for (const auto& v : vc.at("rows")) {
    row({{v.at("session").get<std::string>(), 12},
         {std::to_string(v.at("round").get<int>()), 5},
         {std::to_string(v.at("prior_winners").get<int>()), 7},
         {std::to_string(v.at("non_winners").get<int>()), 6},
         {exact(v.at("winner_mean_votes")), 11},
         {exact(v.at("non_winner_mean_votes")), 0}});
  }
  out << "pooled: winners " << exact(vc.at("pooled").at("winner_mean_votes")) << ", others "
      << exact(vc.at("pooled").at("non_winner_mean_votes")) << '\n';

  out << "\nClusters per condition\n";
  row({{"condition", 10}, {"sessions", 8}, {"mean", 0}});
  for (const auto& [condition, c] : report.at("clusters_by_condition").items()) {
    row({{condition, 10}, {std::to_string(c.at("sessions").get<std::size_t>()), 8}, {exact(c.at("mean_count")), 0}});
  }
  for (const auto& w : report.at("warnings")) out << "warning: " << w.get<std::string>() << '\n';
  return out.str();
}

}  // namespace sot::metrics
