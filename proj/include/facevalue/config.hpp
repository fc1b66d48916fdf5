#pragma once

// Experiment configuration and its flat `key = value` file format.
// Lines starting with '#' are comments. Every key is optional; see
// README.md for the key table and defaults.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "facevalue/errors.hpp"
#include "facevalue/face_pipeline.hpp"
#include "facevalue/gripworld.hpp"
#include "facevalue/rl_core.hpp"
#include "facevalue/sim_user.hpp"

namespace facevalue {

enum class AgentKind { task_state, face_state };

struct ExperimentConfig {
  AgentKind agent = AgentKind::task_state;
  EnvConfig env;
  UserConfig user;
  /// num_actions and dim are filled in per run from env and agent kind.
  AgentConfig learner = default_learner();
  TileConfig tiles;
  PreferenceSchedule schedule;
  std::size_t episodes = 15;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// Episodes that exceed this many ticks are cut off and logged as failures.
  std::size_t max_ticks = 5000;

  /// Every q starts one press below zero. With gamma = 1 and no step cost,
  /// zero-initialized values give no reason to ever leave the station.
  static AgentConfig default_learner() {
    AgentConfig a;
    a.initial_value = kPressReward;
    return a;
  }

  std::size_t runs() const { return seeds.size(); }

  /// Number of object ids the task-state encoding reserves.
  std::size_t object_budget() const {
    return env.object_mode == ObjectMode::finite ? env.num_objects : episodes;
  }

  std::size_t feature_dim() const {
    return agent == AgentKind::task_state ? env.n_grips + object_budget() + 1 : tiles.dim();
  }

  AgentConfig resolved_learner() const {
    AgentConfig a = learner;
    a.num_actions = num_actions(env.n_grips);
    a.dim = feature_dim();
    return a;
  }

  void validate() const {
    env.validate();
    user.validate(env.distance);
    tiles.validate();
    resolved_learner().validate();
    if (episodes < 1) throw contract_error("ExperimentConfig: episodes must be >= 1");
    if (seeds.empty()) throw contract_error("ExperimentConfig: seed list is empty");
    if (max_ticks < 1) throw contract_error("ExperimentConfig: max_ticks must be >= 1");
  }
};

inline std::string to_string(AgentKind k) { return k == AgentKind::task_state ? "task" : "face"; }

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T v{};
  if (!(is >> v)) throw parse_error("config key '" + key + "': cannot parse '" + value + "'");
  std::string rest;
  if (is >> rest) throw parse_error("config key '" + key + "': trailing text in '" + value + "'");
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
  std::vector<T> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw parse_error("config key '" + key + "': expected boolean, got '" + v + "'");
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace detail

/// Parse `key = value` lines. Unknown keys are errors.
inline std::map<std::string, std::string> read_key_values(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw parse_error("config line " + std::to_string(lineno) + ": expected key = value");
    kv[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

/// Apply one key; returns false for an unknown key.
inline bool apply_config_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using detail::parse_bool;
  using detail::parse_list;
  using detail::parse_number;
  if (key == "agent") {
    if (v == "task" || v == "task_state") c.agent = AgentKind::task_state;
    else if (v == "face" || v == "face_state") c.agent = AgentKind::face_state;
    else throw parse_error("config key 'agent': expected task or face, got '" + v + "'");
  } else if (key == "grips") {
    c.env.n_grips = parse_number<std::size_t>(key, v);
    c.env.grip_widths = EnvConfig::default_widths(c.env.n_grips);
  } else if (key == "grip_widths") {
    c.env.grip_widths = parse_list<int>(key, v);
  } else if (key == "distance") {
    c.env.distance = parse_number<int>(key, v);
  } else if (key == "objects") {
    if (v == "infinite") {
      c.env.object_mode = ObjectMode::infinite;
    } else {
      c.env.object_mode = ObjectMode::finite;
      c.env.num_objects = parse_number<std::size_t>(key, v);
    }
  } else if (key == "episodes") {
    c.episodes = parse_number<std::size_t>(key, v);
  } else if (key == "runs") {
    const auto runs = parse_number<std::size_t>(key, v);
    const std::uint64_t base = c.seeds.empty() ? 1 : c.seeds.front();
    c.seeds.clear();
    for (std::size_t i = 0; i < runs; ++i) c.seeds.push_back(base + i);
  } else if (key == "seed") {
    const auto base = parse_number<std::uint64_t>(key, v);
    const std::size_t runs = c.seeds.size();
    c.seeds.clear();
    for (std::size_t i = 0; i < runs; ++i) c.seeds.push_back(base + i);
  } else if (key == "seeds") {
    c.seeds = parse_list<std::uint64_t>(key, v);
  } else if (key == "max_ticks") {
    c.max_ticks = parse_number<std::size_t>(key, v);
  } else if (key == "alpha") {
    c.learner.alpha = parse_number<double>(key, v);
  } else if (key == "alpha_per_active") {
    c.learner.alpha_per_active = parse_bool(key, v);
  } else if (key == "initial_value") {
    c.learner.initial_value = parse_number<double>(key, v);
  } else if (key == "gamma") {
    c.learner.gamma = parse_number<double>(key, v);
  } else if (key == "lambda") {
    c.learner.lambda = parse_number<double>(key, v);
  } else if (key == "epsilon") {
    c.learner.epsilon = parse_number<double>(key, v);
  } else if (key == "trace") {
    if (v == "replacing") c.learner.trace_kind = TraceKind::replacing;
    else if (v == "accumulating") c.learner.trace_kind = TraceKind::accumulating;
    else throw parse_error("config key 'trace': expected replacing or accumulating");
  } else if (key == "reaction_delay") {
    c.user.reaction_delay = parse_number<int>(key, v);
  } else if (key == "press_prob") {
    c.user.press_prob = parse_number<double>(key, v);
  } else if (key == "failsafe") {
    c.user.failsafe = parse_bool(key, v);
  } else if (key == "failsafe_position") {
    c.user.failsafe_position = parse_number<int>(key, v);
  } else if (key == "expression_delay") {
    c.user.expression_delay = parse_number<int>(key, v);
  } else if (key == "noise_sigma") {
    c.user.noise_sigma = parse_number<double>(key, v);
  } else if (key == "preference_schedule") {
    if (v == "never") {
      c.schedule = {PreferenceSchedule::Kind::never, 1};
    } else if (v == "per_episode") {
      c.schedule = {PreferenceSchedule::Kind::per_episode, 1};
    } else if (v.rfind("every:", 0) == 0) {
      c.schedule = {PreferenceSchedule::Kind::every_k, parse_number<std::size_t>(key, v.substr(6))};
    } else {
      throw parse_error("config key 'preference_schedule': expected never, per_episode or every:K");
    }
  } else if (key == "tilings") {
    c.tiles.tilings = parse_number<std::size_t>(key, v);
  } else if (key == "grid") {
    c.tiles.grid = parse_number<std::size_t>(key, v);
  } else if (key == "landmarks") {
    c.tiles.selected_indices = parse_list<std::size_t>(key, v);
  } else if (key == "normalization") {
    if (v == "per_axis") c.tiles.normalization = NormalizationMode::per_axis;
    else if (v == "uniform") c.tiles.normalization = NormalizationMode::uniform;
    else throw parse_error("config key 'normalization': expected per_axis or uniform");
  } else {
    return false;
  }
  return true;
}

// "runs" and "seed" interact, so they are applied after the other keys and
// an explicit "seeds" list wins over both.
inline ExperimentConfig config_from_key_values(const std::map<std::string, std::string>& kv) {
  ExperimentConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "runs" || key == "seed" || key == "seeds" || key == "grip_widths") continue;
    if (!apply_config_key(c, key, value)) throw parse_error("unknown config key '" + key + "'");
  }
  for (const char* key : {"grip_widths", "runs", "seed", "seeds"}) {
    auto it = kv.find(key);
    if (it != kv.end()) apply_config_key(c, key, it->second);
  }
  if (kv.count("seeds") && kv.count("runs") &&
      c.seeds.size() != detail::parse_number<std::size_t>("runs", kv.at("runs")))
    throw parse_error("config: runs does not match the length of seeds");
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(std::istream& in) { return config_from_key_values(read_key_values(in)); }

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  try {
    return parse_config(in);
  } catch (const std::exception& e) {
    throw parse_error(path + ": " + e.what());
  }
}

/// Full key = value echo; parse_config(format_config(c)) reproduces c.
inline std::string format_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << "agent = " << to_string(c.agent) << '\n';
  os << "grips = " << c.env.n_grips << '\n';
  os << "grip_widths = " << detail::join(c.env.grip_widths) << '\n';
  os << "distance = " << c.env.distance << '\n';
  os << "objects = "
     << (c.env.object_mode == ObjectMode::infinite ? std::string("infinite") : std::to_string(c.env.num_objects))
     << '\n';
  os << "episodes = " << c.episodes << '\n';
  os << "seeds = " << detail::join(c.seeds) << '\n';
  os << "max_ticks = " << c.max_ticks << '\n';
  os << "alpha = " << c.learner.alpha << '\n';
  os << "alpha_per_active = " << (c.learner.alpha_per_active ? "true" : "false") << '\n';
  os << "initial_value = " << c.learner.initial_value << '\n';
  os << "gamma = " << c.learner.gamma << '\n';
  os << "lambda = " << c.learner.lambda << '\n';
  os << "epsilon = " << c.learner.epsilon << '\n';
  os << "trace = " << (c.learner.trace_kind == TraceKind::replacing ? "replacing" : "accumulating") << '\n';
  os << "reaction_delay = " << c.user.reaction_delay << '\n';
  os << "press_prob = " << c.user.press_prob << '\n';
  os << "failsafe = " << (c.user.failsafe ? "true" : "false") << '\n';
  if (c.user.failsafe_position) os << "failsafe_position = " << *c.user.failsafe_position << '\n';
  os << "expression_delay = " << c.user.expression_delay << '\n';
  os << "noise_sigma = " << c.user.noise_sigma << '\n';
  os << "preference_schedule = ";
  switch (c.schedule.kind) {
    case PreferenceSchedule::Kind::never:
      os << "never";
      break;
    case PreferenceSchedule::Kind::every_k:
      os << "every:" << c.schedule.k;
      break;
    case PreferenceSchedule::Kind::per_episode:
      os << "per_episode";
      break;
  }
  os << '\n';
  os << "tilings = " << c.tiles.tilings << '\n';
  os << "grid = " << c.tiles.grid << '\n';
  os << "landmarks = " << detail::join(c.tiles.selected_indices) << '\n';
  os << "normalization = " << (c.tiles.normalization == NormalizationMode::per_axis ? "per_axis" : "uniform") << '\n';
  return os.str();
}

}  // namespace facevalue
