#pragma once

// Tick loop, experiment runner and result aggregation.
//
// One tick, in order:
//   1. the user (simulated or live) supplies this tick's presses and face frame
//   2. features of the current observation (task ids or face tiles)
//   3. epsilon-greedy choice over the actions left after the presses latch
//   4. environment step; presses cost -5 each
//   5. Sarsa update of the previous tick's (features, action) pair with the
//      reward that tick's step earned, bootstrapping from the pair chosen in 3
// A tick's reward belongs to the pair that was acted on in that tick, so the
// -5 of a press lands on the forced Back taken under it. The first tick of
// an episode has no previous pair. When the step in 4 terminates, the pair
// chosen in 3 is closed with a terminal update carrying that step's reward.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "facevalue/config.hpp"
#include "facevalue/errors.hpp"
#include "facevalue/face_pipeline.hpp"
#include "facevalue/gripworld.hpp"
#include "facevalue/random.hpp"
#include "facevalue/rl_core.hpp"
#include "facevalue/sim_user.hpp"

namespace facevalue {

struct TickOutcome {
  std::size_t tick = 0;  ///< index within the episode
  Action action = Action::back();
  int presses = 0;
  double reward = 0.0;
  bool terminal = false;
  EnvState state;  ///< after the step
};

/// One run's agent and environment. Drives ticks; knows nothing about
/// where presses and frames come from.
class Session {
 public:
  Session(const ExperimentConfig& config, std::uint64_t seed)
      : config_(config),
        seed_(seed),
        learner_((config.validate(), config.resolved_learner())),
        agent_rng_(make_rng(seed, stream::agent)) {}

  const ExperimentConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Learner& learner() noexcept { return learner_; }
  const Learner& learner() const noexcept { return learner_; }
  const EnvState& state() const noexcept { return state_; }
  std::size_t episode() const noexcept { return episode_; }
  std::size_t ticks() const noexcept { return tick_; }
  bool in_episode() const noexcept { return in_episode_; }

  void begin_episode(std::size_t episode_index) {
    episode_ = episode_index;
    state_ = reset(config_.env, episode_index, seed_);
    tick_ = 0;
    prev_.reset();
    in_episode_ = true;
    facevalue::begin_episode(learner_);
  }

  SparseFeatures observe(const EnvState& s, const LandmarkFrame& frame) const {
    if (config_.agent == AgentKind::task_state)
      return encode_task_state(s, config_.object_budget(), config_.env.n_grips);
    return frame_features(frame, config_.tiles);
  }

  TickOutcome tick(int presses, const LandmarkFrame& frame) {
    if (!in_episode_) throw contract_error("Session::tick outside an episode");
    const SparseFeatures feats = observe(apply_presses(state_, presses), frame);
    const auto avail = available_indices(config_.env, state_, presses);
    const std::size_t a = select_action(learner_, feats, avail, config_.learner.epsilon, agent_rng_);
    const Action action = Action::from_index(a, config_.env.n_grips);

    const StepResult r = step(config_.env, state_, action, presses);
    if (prev_) sarsa_update(learner_, prev_->feats, prev_->action, prev_->reward, feats, a);

    TickOutcome out{tick_, action, presses, r.reward, r.terminal, r.state};
    state_ = r.state;
    ++tick_;
    if (r.terminal) {
      sarsa_update_terminal(learner_, feats, a, r.reward);
      prev_.reset();
      in_episode_ = false;
    } else {
      prev_ = Pending{feats, a, r.reward};
    }
    return out;
  }

  /// Abandon the current episode without a terminal update.
  void abort_episode() {
    prev_.reset();
    in_episode_ = false;
  }

 private:
  struct Pending {
    SparseFeatures feats;
    std::size_t action;
    double reward;
  };

  ExperimentConfig config_;
  std::uint64_t seed_;
  Learner learner_;
  Rng agent_rng_;
  EnvState state_;
  std::size_t episode_ = 0;
  std::size_t tick_ = 0;
  bool in_episode_ = false;
  std::optional<Pending> prev_;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  std::size_t steps = 0;
  int presses = 0;
  bool success = false;
  double ret = 0.0;
  friend bool operator==(const EpisodeRecord&, const EpisodeRecord&) = default;
};

/// Simulated user for one run.
class SimUser {
 public:
  SimUser(const ExperimentConfig& config, std::uint64_t seed)
      : config_(config.user),
        distance_(config.env.distance),
        rng_(make_rng(seed, stream::user)),
        pref_rng_(make_rng(seed, stream::preferences)),
        pref_(PreferenceModel::width_match(config.env.grip_widths)),
        schedule_(config.schedule) {}

  void begin_episode(std::size_t episode_index) {
    pref_ = resample_preferences(pref_, schedule_, episode_index, pref_rng_);
    state_.reset();
  }

  UserTick tick(const EnvState& s) { return user_tick(s, pref_, config_, distance_, state_, rng_); }
  const PreferenceModel& preferences() const noexcept { return pref_; }

 private:
  UserConfig config_;
  int distance_;
  Rng rng_;
  Rng pref_rng_;
  PreferenceModel pref_;
  PreferenceSchedule schedule_;
  UserState state_;
};

inline EpisodeRecord run_episode(Session& session, SimUser& user, std::size_t episode_index) {
  user.begin_episode(episode_index);
  session.begin_episode(episode_index);
  EpisodeRecord rec;
  rec.episode = episode_index;
  while (session.in_episode()) {
    if (session.ticks() >= session.config().max_ticks) {
      session.abort_episode();
      break;
    }
    const UserTick u = user.tick(session.state());
    const TickOutcome t = session.tick(u.presses, u.frame);
    ++rec.steps;
    rec.presses += t.presses;
    rec.ret += t.reward;
    if (t.terminal) rec.success = t.state.grip && user.preferences().accepts(t.state.object, *t.state.grip);
  }
  return rec;
}

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<EpisodeRecord> episodes;
  /// Action-major weight table after the last episode.
  std::vector<double> final_weights;

  /// A learner carrying the trained weights, for probing q-values.
  Learner trained_learner(const ExperimentConfig& config) const {
    Learner l(config.resolved_learner());
    l.restore(final_weights);
    return l;
  }
};

inline RunResult run_single(const ExperimentConfig& config, std::uint64_t seed) {
  Session session(config, seed);
  SimUser user(config, seed);
  RunResult r;
  r.seed = seed;
  for (std::size_t e = 0; e < config.episodes; ++e) r.episodes.push_back(run_episode(session, user, e));
  r.final_weights = session.learner().snapshot();
  return r;
}

struct ExperimentLog {
  std::string config_echo;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<EpisodeRecord>> runs;

  struct RunTotals {
    long total_presses = 0;
    long total_steps = 0;
  };
  std::vector<RunTotals> totals() const {
    std::vector<RunTotals> out;
    for (const auto& run : runs) {
      RunTotals t;
      for (const auto& e : run) {
        t.total_presses += e.presses;
        t.total_steps += static_cast<long>(e.steps);
      }
      out.push_back(t);
    }
    return out;
  }
  std::size_t record_count() const {
    std::size_t n = 0;
    for (const auto& r : runs) n += r.size();
    return n;
  }
};

inline ExperimentLog run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentLog log;
  log.config_echo = format_config(config);
  log.seeds = config.seeds;
  for (std::uint64_t seed : config.seeds) log.runs.push_back(run_single(config, seed).episodes);
  return log;
}

struct Aggregate {
  std::vector<double> mean_steps;    ///< per episode index
  std::vector<double> mean_presses;  ///< per episode index
  double mean_total_presses = 0.0;
  double mean_total_steps = 0.0;

  /// Mean over episode indices [first, last] of a per-episode curve.
  static double window(const std::vector<double>& curve, std::size_t first, std::size_t last) {
    double s = 0.0;
    for (std::size_t i = first; i <= last; ++i) s += curve.at(i);
    return s / static_cast<double>(last - first + 1);
  }
};

inline Aggregate aggregate(const ExperimentLog& log) {
  if (log.runs.empty()) throw contract_error("aggregate: empty log");
  std::size_t episodes = 0;
  for (const auto& r : log.runs) episodes = std::max(episodes, r.size());
  Aggregate a;
  a.mean_steps.assign(episodes, 0.0);
  a.mean_presses.assign(episodes, 0.0);
  std::vector<std::size_t> count(episodes, 0);
  for (const auto& run : log.runs) {
    for (std::size_t e = 0; e < run.size(); ++e) {
      a.mean_steps[e] += static_cast<double>(run[e].steps);
      a.mean_presses[e] += run[e].presses;
      ++count[e];
    }
  }
  for (std::size_t e = 0; e < episodes; ++e) {
    a.mean_steps[e] /= static_cast<double>(count[e]);
    a.mean_presses[e] /= static_cast<double>(count[e]);
  }
  for (const auto& t : log.totals()) {
    a.mean_total_presses += static_cast<double>(t.total_presses);
    a.mean_total_steps += static_cast<double>(t.total_steps);
  }
  a.mean_total_presses /= static_cast<double>(log.runs.size());
  a.mean_total_steps /= static_cast<double>(log.runs.size());
  return a;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

inline void write_log_csv(std::ostream& out, const ExperimentLog& log) {
  out << "run,episode,steps,presses,success,return\n";
  for (std::size_t r = 0; r < log.runs.size(); ++r)
    for (const auto& e : log.runs[r])
      out << r << ',' << e.episode << ',' << e.steps << ',' << e.presses << ',' << (e.success ? 1 : 0) << ','
          << format_number(e.ret) << '\n';
}

inline void write_aggregate_csv(std::ostream& out, const Aggregate& a) {
  out << "episode,mean_steps,mean_presses\n";
  for (std::size_t e = 0; e < a.mean_steps.size(); ++e)
    out << e << ',' << format_number(a.mean_steps[e]) << ',' << format_number(a.mean_presses[e]) << '\n';
}

inline void write_totals_csv(std::ostream& out, const ExperimentLog& log) {
  out << "run,total_presses,total_steps\n";
  const auto totals = log.totals();
  for (std::size_t r = 0; r < totals.size(); ++r)
    out << r << ',' << totals[r].total_presses << ',' << totals[r].total_steps << '\n';
}

inline ExperimentLog read_log_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "run,episode,steps,presses,success,return")
    throw parse_error("log csv: missing or unexpected header");
  ExperimentLog log;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> cells;
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw parse_error("log csv line " + std::to_string(lineno) + ": expected 6 columns");
    const auto run = detail::parse_number<std::size_t>("run", cells[0]);
    EpisodeRecord e;
    e.episode = detail::parse_number<std::size_t>("episode", cells[1]);
    e.steps = detail::parse_number<std::size_t>("steps", cells[2]);
    e.presses = detail::parse_number<int>("presses", cells[3]);
    e.success = detail::parse_number<int>("success", cells[4]) != 0;
    e.ret = detail::parse_number<double>("return", cells[5]);
    if (run >= log.runs.size()) log.runs.resize(run + 1);
    log.runs[run].push_back(e);
  }
  if (log.runs.empty()) throw parse_error("log csv: no records");
  return log;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

/// Writes log.csv, aggregate.csv, totals.csv and config.cfg into dir.
inline void write_experiment_outputs(const std::filesystem::path& dir, const ExperimentLog& log) {
  std::filesystem::create_directories(dir);
  {
    auto out = open_output(dir / "log.csv");
    write_log_csv(out, log);
  }
  {
    auto out = open_output(dir / "aggregate.csv");
    write_aggregate_csv(out, aggregate(log));
  }
  {
    auto out = open_output(dir / "totals.csv");
    write_totals_csv(out, log);
  }
  if (!log.config_echo.empty()) {
    auto out = open_output(dir / "config.cfg");
    out << log.config_echo;
  }
}

}  // namespace facevalue
