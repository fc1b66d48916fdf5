// facevalue: run experiments, serve live mode, replay event logs, export
// aggregates.
//
//   facevalue run --config configs/grid_2x2.cfg --out results/
//   facevalue serve --config configs/grid_2x2.cfg --port 8765 --event-log session.log
//   facevalue replay session.log
//   facevalue export results/

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "facevalue/config.hpp"
#include "facevalue/live_service.hpp"
#include "facevalue/rl_core.hpp"
#include "facevalue/session.hpp"

namespace fs = std::filesystem;
using namespace facevalue;

namespace {

LiveServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->request_stop();
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("facevalue");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
  const char* env = std::getenv("FACEVALUE_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") spdlog::set_level(spdlog::level::err);
  else if (level == "debug") spdlog::set_level(spdlog::level::debug);
  else spdlog::set_level(spdlog::level::info);
  if (level != "error" && level != "info" && level != "debug")
    spdlog::warn("FACEVALUE_LOG_LEVEL={} not recognised; using info", level);
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string agent;
};

ExperimentConfig load_with_overrides(const std::string& path, const Overrides& o) {
  ExperimentConfig c = load_config(path);
  if (o.seed) {
    const std::size_t runs = c.seeds.size();
    c.seeds.clear();
    for (std::size_t i = 0; i < runs; ++i) c.seeds.push_back(*o.seed + i);
  }
  if (!o.agent.empty()) apply_config_key(c, "agent", o.agent);
  c.validate();
  return c;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const Overrides& o) {
  const ExperimentConfig config = load_with_overrides(config_path, o);
  spdlog::info("running {} seeds x {} episodes, {} agent", config.runs(), config.episodes, to_string(config.agent));
  ExperimentLog log;
  log.config_echo = format_config(config);
  log.seeds = config.seeds;
  fs::create_directories(out_dir);
  for (std::size_t r = 0; r < config.seeds.size(); ++r) {
    const RunResult run = run_single(config, config.seeds[r]);
    log.runs.push_back(run.episodes);
    auto out = open_output(fs::path(out_dir) / ("weights_run" + std::to_string(r) + ".txt"));
    save_weights(out, run.trained_learner(config));
    spdlog::debug("seed {} done", config.seeds[r]);
  }
  write_experiment_outputs(out_dir, log);
  const Aggregate a = aggregate(log);
  spdlog::info("mean total presses {}, mean total steps {}", a.mean_total_presses, a.mean_total_steps);
  std::cout << "wrote " << (fs::path(out_dir) / "log.csv").string() << '\n';
  return 0;
}

int cmd_serve(const std::string& config_path, std::uint16_t port, const std::string& event_log, bool loopback,
              const Overrides& o) {
  const ExperimentConfig config = load_with_overrides(config_path, o);
  LiveSession live(config, config.seeds.front());
  std::ofstream log_out;
  if (!event_log.empty()) {
    log_out.open(event_log);
    if (!log_out) throw std::runtime_error("cannot write event log '" + event_log + "'");
  }
  ServeOptions opts;
  opts.port = port;
  opts.loopback_only = loopback;
  LiveServer server(live, opts, event_log.empty() ? nullptr : &log_out);
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  server.run();
  g_server = nullptr;
  spdlog::info("stopped after {} ticks", server.ticks());
  return 0;
}

int cmd_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open event log '" + path + "'");
  const ReplayResult r = replay(in);
  if (!r.ok) {
    std::cerr << "REPLAY MISMATCH: " << r.message << '\n';
    return 1;
  }
  std::cout << r.message << '\n';
  return 0;
}

int cmd_export(const std::string& dir) {
  const fs::path log_path = fs::path(dir) / "log.csv";
  std::ifstream in(log_path);
  if (!in) throw std::runtime_error("cannot open '" + log_path.string() + "'");
  ExperimentLog log = read_log_csv(in);
  {
    auto out = open_output(fs::path(dir) / "aggregate.csv");
    write_aggregate_csv(out, aggregate(log));
  }
  {
    auto out = open_output(fs::path(dir) / "totals.csv");
    write_totals_csv(out, log);
  }
  std::cout << "wrote aggregate.csv and totals.csv in " << dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face-valuing Sarsa(lambda) agent: experiments, live mode, replay"};
  app.require_subcommand(1);

  Overrides o;
  std::string agent;
  std::uint64_t seed = 0;
  const auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", seed, "Base seed; overrides the config seeds (run r uses seed + r)");
    sub->add_option("--agent", agent, "Agent kind; overrides the config")->check(CLI::IsMember({"task", "face"}));
  };

  std::string config_path, out_dir, event_log, replay_path, export_dir;
  std::uint16_t port = 8765;
  bool loopback = false;

  auto* run = app.add_subcommand("run", "Run a headless experiment and write CSVs");
  run->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  add_overrides(run);

  auto* serve = app.add_subcommand("serve", "Serve live mode over WebSocket at 10 ticks per second");
  serve->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "TCP port");
  serve->add_option("--event-log", event_log, "Write the replayable event log here");
  serve->add_flag("--loopback", loopback, "Listen on 127.0.0.1 only");
  add_overrides(serve);

  auto* rep = app.add_subcommand("replay", "Re-run a live event log and verify it bit for bit");
  rep->add_option("log", replay_path, "Event log file")->required()->check(CLI::ExistingFile);

  auto* exp = app.add_subcommand("export", "Recompute aggregate.csv and totals.csv from log.csv");
  exp->add_option("dir", export_dir, "Directory containing log.csv")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  setup_logging();
  if (run->count("--seed") || serve->count("--seed")) o.seed = seed;
  o.agent = agent;

  try {
    if (*run) return cmd_run(config_path, out_dir, o);
    if (*serve) return cmd_serve(config_path, port, event_log, loopback, o);
    if (*rep) return cmd_replay(replay_path);
    if (*exp) return cmd_export(export_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
