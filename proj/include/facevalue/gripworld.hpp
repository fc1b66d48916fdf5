#pragma once

// Grip-selection task: the agent starts at a grip-changing station
// (position 0), must hold a grip before moving, and walks `distance` steps
// to the object. A button press costs -5 and latches a forced return to
// the station during which only Back is legal.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "facevalue/errors.hpp"
#include "facevalue/random.hpp"
#include "facevalue/sparse_features.hpp"

namespace facevalue {

inline constexpr double kPressReward = -5.0;

class Action {
 public:
  enum class Kind { grip, forward, back };

  static constexpr Action grip(std::size_t i) { return Action(Kind::grip, i); }
  static constexpr Action forward() { return Action(Kind::forward, 0); }
  static constexpr Action back() { return Action(Kind::back, 0); }

  /// Learner action index: grips occupy [0, n), then Forward = n, Back = n + 1.
  static Action from_index(std::size_t index, std::size_t n_grips) {
    if (index < n_grips) return grip(index);
    if (index == n_grips) return forward();
    if (index == n_grips + 1) return back();
    throw contract_error("action index " + std::to_string(index) + " out of range");
  }

  constexpr Kind kind() const noexcept { return kind_; }
  constexpr std::size_t grip_index() const noexcept { return grip_; }
  constexpr std::size_t index(std::size_t n_grips) const noexcept {
    switch (kind_) {
      case Kind::grip:
        return grip_;
      case Kind::forward:
        return n_grips;
      case Kind::back:
        break;
    }
    return n_grips + 1;
  }

  /// Short name used on the wire and in logs: g<i>, up, down.
  std::string name() const {
    switch (kind_) {
      case Kind::grip:
        return "g" + std::to_string(grip_);
      case Kind::forward:
        return "up";
      case Kind::back:
        break;
    }
    return "down";
  }

  friend constexpr bool operator==(const Action&, const Action&) = default;

 private:
  constexpr Action(Kind k, std::size_t g) : kind_(k), grip_(g) {}
  Kind kind_;
  std::size_t grip_;
};

inline constexpr std::size_t num_actions(std::size_t n_grips) { return n_grips + 2; }

struct ObjectSpec {
  std::size_t id = 0;
  int width = 0;
  friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

enum class ObjectMode { finite, infinite };

struct EnvConfig {
  std::size_t n_grips = 2;
  std::vector<int> grip_widths{1, 2};
  int distance = 10;
  ObjectMode object_mode = ObjectMode::finite;
  /// Number of fixed objects in finite mode.
  std::size_t num_objects = 2;

  /// Grip widths 1..n.
  static std::vector<int> default_widths(std::size_t n) {
    std::vector<int> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = static_cast<int>(i) + 1;
    return w;
  }

  void validate() const {
    if (n_grips < 2) throw contract_error("EnvConfig: need at least 2 grips");
    if (grip_widths.size() != n_grips) throw contract_error("EnvConfig: grip_widths length must equal n_grips");
    if (distance < 1) throw contract_error("EnvConfig: distance must be >= 1");
    if (object_mode == ObjectMode::finite && num_objects == 0)
      throw contract_error("EnvConfig: finite mode needs at least one object");
  }

  /// Fixed object table for finite mode; object i takes the width of grip i mod n.
  ObjectSpec finite_object(std::size_t id) const {
    if (id >= num_objects) throw contract_error("object id " + std::to_string(id) + " out of range");
    return ObjectSpec{id, grip_widths[id % n_grips]};
  }
};

struct EnvState {
  int position = 0;
  std::optional<std::size_t> grip;
  ObjectSpec object;
  bool latched = false;
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
  bool terminal = false;
};

/// Fresh episode state. The object is a pure function of (seed, episode_index).
inline EnvState reset(const EnvConfig& config, std::size_t episode_index, std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed, (stream::env << 32) ^ episode_index);
  EnvState s;
  if (config.object_mode == ObjectMode::finite) {
    s.object = config.finite_object(uniform_index(rng, config.num_objects));
  } else {
    s.object = ObjectSpec{episode_index, config.grip_widths[uniform_index(rng, config.n_grips)]};
  }
  return s;
}

/// The latch after this tick's presses are applied. A press at the station
/// does not latch.
inline EnvState apply_presses(EnvState s, int presses) {
  if (presses > 0 && s.position > 0) s.latched = true;
  if (s.position == 0) s.latched = false;
  return s;
}

/// Legal actions for the state after `presses` this tick. A press at the
/// station makes the tick a no-move tick (grips only).
inline std::vector<Action> available_actions(const EnvConfig& config, const EnvState& raw, int presses = 0) {
  const EnvState s = apply_presses(raw, presses);
  std::vector<Action> out;
  if (s.position >= config.distance) return out;
  if (s.latched) {
    out.push_back(Action::back());
    return out;
  }
  if (s.position == 0) {
    for (std::size_t i = 0; i < config.n_grips; ++i) out.push_back(Action::grip(i));
    if (s.grip && presses == 0) out.push_back(Action::forward());
    return out;
  }
  out.push_back(Action::forward());
  out.push_back(Action::back());
  return out;
}

inline std::vector<std::size_t> available_indices(const EnvConfig& config, const EnvState& s, int presses = 0) {
  std::vector<std::size_t> out;
  for (const Action& a : available_actions(config, s, presses)) out.push_back(a.index(config.n_grips));
  return out;
}

inline StepResult step(const EnvConfig& config, const EnvState& state, Action action, int presses) {
  if (presses < 0) throw contract_error("step: negative press count");
  const auto legal = available_actions(config, state, presses);
  if (std::find(legal.begin(), legal.end(), action) == legal.end())
    throw contract_error("step: action " + action.name() + " not available at position " +
                         std::to_string(state.position));

  StepResult r;
  r.state = apply_presses(state, presses);
  switch (action.kind()) {
    case Action::Kind::grip:
      if (action.grip_index() >= config.n_grips) throw contract_error("step: grip index out of range");
      r.state.grip = action.grip_index();
      break;
    case Action::Kind::forward:
      ++r.state.position;
      break;
    case Action::Kind::back:
      if (r.state.position > 0) --r.state.position;
      break;
  }
  if (r.state.position == 0) r.state.latched = false;
  r.reward = kPressReward * presses;
  r.terminal = r.state.position == config.distance;
  return r;
}

/// Task-identity features: [grip one-hot (n) | object one-hot (m) | bias].
inline SparseFeatures encode_task_state(const EnvState& s, std::size_t m, std::size_t n) {
  if (s.object.id >= m)
    throw contract_error("encode_task_state: object id " + std::to_string(s.object.id) + " >= " + std::to_string(m));
  std::vector<std::size_t> active;
  active.reserve(3);
  if (s.grip) {
    if (*s.grip >= n) throw contract_error("encode_task_state: grip index out of range");
    active.push_back(*s.grip);
  }
  active.push_back(n + s.object.id);
  active.push_back(n + m);
  return SparseFeatures(std::move(active), n + m + 1);
}

}  // namespace facevalue
