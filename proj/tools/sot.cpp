// sot: serve sessions, run headless simulations, replay logs, compute metrics.

#include <csignal>
#include <fstream>
#include <iostream>
#include <pthread.h>
#include <thread>

#include "CLI11.hpp"
#include "sot/error.hpp"
#include "sot/gateway/config.hpp"
#include "sot/gateway/gateway.hpp"
#include "sot/gateway/log_store.hpp"
#include "sot/gateway/ws_server.hpp"
#include "sot/metrics/metrics.hpp"
#include "sot/sim/simulation.hpp"

namespace {

using namespace sot;

std::map<sim::Strategy, int> parse_mix(const std::string& text) {
  // "play_to_win=6,random=2"
  std::map<sim::Strategy, int> mix;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::validation_error, "strategy mix entries look like name=count");
    mix[sim::strategy_from_string(item.substr(0, eq))] += std::stoi(item.substr(eq + 1));
  }
  return mix;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::input_error, "cannot write " + path.string());
  out << text;
}

int serve(const std::string& config_path, const std::optional<std::string>& bind, const std::optional<std::string>& log_dir,
          const std::optional<std::string>& static_dir) {
  gateway::ServeConfig config;
  if (!config_path.empty()) config = gateway::load_serve_config(config_path);
  gateway::apply_env_overrides(config, gateway::process_env);
  if (bind) config.bind = *bind;
  if (log_dir) config.log_dir = *log_dir;
  if (static_dir) config.static_dir = *static_dir;
  config.session.validate();
  std::filesystem::create_directories(config.log_dir);

  gateway::GatewayOptions options;
  options.session = config.session;
  options.log_dir = config.log_dir;
  options.durable = config.durable;
  options.leave_grace = config.leave_grace;
  gateway::Gateway gw(options);

  gateway::ServerOptions server_options;
  std::tie(server_options.address, server_options.port) = gateway::parse_bind(config.bind, 8080);
  server_options.static_dir = config.static_dir;
  server_options.tick_interval = config.tick;

  // SIGINT/SIGTERM are handled by a dedicated thread that stops the server
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  gateway::WebSocketServer server(gw, server_options);
  std::cerr << "listening on " << server_options.address << ':' << server.port() << ", logs in " << config.log_dir.string()
            << '\n';
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
  });
  server.run();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

struct SimulateArgs {
  std::string plan_path;
  std::string condition = "SOT";
  int batch = 8;
  int rounds = 3;
  std::uint64_t seed = 1;
  std::string mix;
  double vote_bias = 0.5;
  double time_scale = 0;
  std::string session_id;
  std::string out;
  std::string report;
};

int simulate(const SimulateArgs& a, const CLI::App& cmd) {
  sim::SimulationPlan plan;
  if (!a.plan_path.empty()) {
    std::ifstream in(a.plan_path);
    if (!in) throw Error(ErrorCode::input_error, "cannot read plan " + a.plan_path);
    try {
      plan = nlohmann::json::parse(in).get<sim::SimulationPlan>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::malformed, a.plan_path + ": " + e.what());
    }
  }
  auto given = [&](const char* name) { return cmd.get_option(name)->count() > 0; };
  if (a.plan_path.empty() || given("--condition")) plan.config.condition = session::condition_from_string(a.condition);
  if (a.plan_path.empty() || given("--batch")) {
    plan.config.batch_max = a.batch;
    plan.config.batch_min = std::min(plan.config.batch_min, a.batch);
  }
  if (a.plan_path.empty() || given("--rounds")) plan.config.rounds = a.rounds;
  if (a.plan_path.empty() || given("--seed")) {
    plan.config.seed = a.seed;
    plan.master_seed = a.seed;
    plan.text_seed = derive_seed(a.seed, "text_seed");
  }
  if (given("--mix")) {
    plan.strategy_mix = parse_mix(a.mix);
  } else if (plan.strategy_mix.empty()) {
    plan.strategy_mix[sim::Strategy::random] = plan.config.batch_max;
  }
  if (!a.session_id.empty()) {
    plan.session_id = a.session_id;
  } else if (a.plan_path.empty()) {
    // distinct ids let several simulated logs feed one metrics run
    std::string name(session::to_string(plan.config.condition));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    plan.session_id = name + "-" + std::to_string(plan.master_seed);
  }
  if (a.plan_path.empty() || given("--vote-bias")) plan.vote_bias = a.vote_bias;
  if (a.plan_path.empty() || given("--time-scale")) plan.time_scale = a.time_scale;

  const auto result = sim::run_simulation(plan);
  if (!a.out.empty()) {
    const std::filesystem::path out(a.out);
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    gateway::write_log_file(out, result.log);
  }
  nlohmann::json summary{{"session", result.session_id},
                         {"condition", session::to_string(plan.config.condition)},
                         {"records", result.log.size()},
                         {"rejections", result.rejections},
                         {"report", result.report}};
  auto agents = nlohmann::json::array();
  for (std::size_t i = 0; i < result.users.size(); ++i) {
    agents.push_back({{"user", result.users[i]}, {"strategy", sim::to_string(result.strategies[i])}});
  }
  summary["agents"] = agents;
  if (!a.report.empty()) write_file(a.report, summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return result.rejections.empty() ? 0 : 3;
}

int replay(const std::string& path, const std::string& config_path) {
  const auto read = gateway::read_log_file(path);
  std::optional<session::SessionConfig> config;
  if (!config_path.empty()) config = gateway::load_serve_config(config_path).session;
  const auto report = gateway::replay_event_log(read.records, config, read.truncated_tail);
  std::cout << report.to_json().dump(2) << '\n';
  return report.divergence ? 2 : 0;
}

int metrics_cmd(const std::vector<std::string>& paths, const std::string& json_out, const std::string& csv_dir,
                std::uint64_t seed, std::optional<std::int64_t> gap_ms, bool directed, bool json_stdout) {
  std::vector<session::LogRecord> records;
  for (const auto& p : paths) {
    auto read = gateway::read_log_file(p);
    if (read.truncated_tail) std::cerr << p << ": ignoring a torn last line\n";
    records.insert(records.end(), read.records.begin(), read.records.end());
  }
  const auto logs = metrics::load_sessions(records);
  metrics::ReportOptions options;
  options.cluster_seed = seed;
  if (gap_ms) options.gap_threshold = session::Millis(*gap_ms);
  options.directed = directed;
  const auto report = metrics::build_report(logs, options);
  if (!json_out.empty()) write_file(json_out, report.dump(2) + "\n");
  if (!csv_dir.empty()) {
    for (const auto& [stem, csv] : metrics::csv_tables(report)) write_file(std::filesystem::path(csv_dir) / (stem + ".csv"), csv);
  }
  std::cout << (json_stdout ? report.dump(2) + "\n" : metrics::text_report(report));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-organizing team sessions: server, simulator and analysis"};
  app.require_subcommand(1);

  auto* serve_cmd = app.add_subcommand("serve", "host sessions over WebSocket");
  std::string config_path;
  std::optional<std::string> bind, log_dir, static_dir;
  serve_cmd->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  serve_cmd->add_option("--bind", bind, "host:port (overrides SOT_BIND and the config)");
  serve_cmd->add_option("--log-dir", log_dir, "event log directory (overrides SOT_LOG_DIR and the config)");
  serve_cmd->add_option("--static", static_dir, "directory served over HTTP");

  auto* sim_cmd = app.add_subcommand("simulate", "run one headless agent session");
  SimulateArgs sim_args;
  sim_cmd->add_option("--plan", sim_args.plan_path, "SimulationPlan JSON; flags given explicitly override it")
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--condition", sim_args.condition, "SOT, Placebo or NoAgency");
  sim_cmd->add_option("--batch", sim_args.batch, "batch size");
  sim_cmd->add_option("--rounds", sim_args.rounds, "rounds");
  sim_cmd->add_option("--seed", sim_args.seed, "master seed");
  sim_cmd->add_option("--mix", sim_args.mix, "strategy counts, e.g. play_to_win=6,random=2");
  sim_cmd->add_option("--vote-bias", sim_args.vote_bias, "chance of voting for the longest story");
  sim_cmd->add_option("--time-scale", sim_args.time_scale, "virtual ms per wall ms; 0 runs flat out");
  sim_cmd->add_option("--session-id", sim_args.session_id, "session id (default: <condition>-<seed>)");
  sim_cmd->add_option("--out", sim_args.out, "write the event log here");
  sim_cmd->add_option("--report", sim_args.report, "write the summary JSON here");

  auto* replay_cmd = app.add_subcommand("replay", "rebuild a session from its log and check it");
  std::string replay_path, replay_config;
  replay_cmd->add_option("log", replay_path, "event log")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--config", replay_config, "expected serve config")->check(CLI::ExistingFile);

  auto* metrics_sub = app.add_subcommand("metrics", "analyse one or more event logs");
  std::vector<std::string> metric_paths;
  std::string json_out, csv_dir;
  std::uint64_t cluster_seed = 1;
  std::optional<std::int64_t> gap_ms;
  bool directed = false, json_stdout = false;
  metrics_sub->add_option("logs", metric_paths, "event logs")->required()->check(CLI::ExistingFile);
  metrics_sub->add_option("--json", json_out, "write the full JSON report here");
  metrics_sub->add_option("--csv", csv_dir, "write plot-ready CSV tables into this directory");
  metrics_sub->add_option("--seed", cluster_seed, "label propagation seed");
  metrics_sub->add_option("--gap-ms", gap_ms, "also split segments at pauses longer than this");
  metrics_sub->add_flag("--directed", directed, "keep in- and out-weights apart in the affinity network");
  metrics_sub->add_flag("--print-json", json_stdout, "print JSON instead of text tables");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*serve_cmd) return serve(config_path, bind, log_dir, static_dir);
    if (*sim_cmd) return simulate(sim_args, *sim_cmd);
    if (*replay_cmd) return replay(replay_path, replay_config);
    if (*metrics_sub) return metrics_cmd(metric_paths, json_out, csv_dir, cluster_seed, gap_ms, directed, json_stdout);
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
