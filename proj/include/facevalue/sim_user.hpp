#pragma once

// Simulated user: knows which grips it wants for each object, shows a
// (delayed) happy or unhappy face, and presses the button when the agent
// carries a wrong grip towards the object.

#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "facevalue/errors.hpp"
#include "facevalue/face_pipeline.hpp"
#include "facevalue/gripworld.hpp"
#include "facevalue/random.hpp"

namespace facevalue {

/// Hidden ground truth: acceptable grips per object width.
class PreferenceModel {
 public:
  enum class Derivation { width_match, explicit_choice };

  PreferenceModel() = default;

  static PreferenceModel width_match(std::vector<int> grip_widths) {
    PreferenceModel p;
    p.derivation_ = Derivation::width_match;
    p.grip_widths_ = std::move(grip_widths);
    return p;
  }

  static PreferenceModel explicit_choice(std::vector<int> grip_widths, std::map<int, std::set<std::size_t>> chosen) {
    PreferenceModel p;
    p.derivation_ = Derivation::explicit_choice;
    p.grip_widths_ = std::move(grip_widths);
    for (const auto& [width, grips] : chosen) {
      if (grips.empty()) throw contract_error("PreferenceModel: empty acceptable set for width " + std::to_string(width));
      for (std::size_t g : grips)
        if (g >= p.grip_widths_.size()) throw contract_error("PreferenceModel: grip index out of range");
    }
    p.chosen_ = std::move(chosen);
    return p;
  }

  Derivation derivation() const noexcept { return derivation_; }
  const std::vector<int>& grip_widths() const noexcept { return grip_widths_; }

  std::set<std::size_t> acceptable(const ObjectSpec& object) const {
    if (derivation_ == Derivation::explicit_choice) {
      auto it = chosen_.find(object.width);
      if (it != chosen_.end()) return it->second;
    }
    return matching(object.width);
  }

  bool accepts(const ObjectSpec& object, std::size_t grip) const { return acceptable(object).count(grip) > 0; }

  std::set<std::size_t> matching(int width) const {
    std::set<std::size_t> out;
    for (std::size_t g = 0; g < grip_widths_.size(); ++g)
      if (grip_widths_[g] == width) out.insert(g);
    return out;
  }

  bool widths_unique() const {
    std::set<int> seen(grip_widths_.begin(), grip_widths_.end());
    return seen.size() == grip_widths_.size();
  }

  friend bool operator==(const PreferenceModel&, const PreferenceModel&) = default;

 private:
  Derivation derivation_ = Derivation::width_match;
  std::vector<int> grip_widths_;
  std::map<int, std::set<std::size_t>> chosen_;
};

struct PreferenceSchedule {
  enum class Kind { never, every_k, per_episode };
  Kind kind = Kind::never;
  std::size_t k = 1;

  bool due(std::size_t episode_index) const {
    switch (kind) {
      case Kind::never:
        return false;
      case Kind::every_k:
        return k > 0 && episode_index % k == 0;
      case Kind::per_episode:
        break;
    }
    return true;
  }
};

/// With unique widths every acceptable set is a singleton and nothing
/// changes. With shared widths, one preferred grip is drawn per width.
inline PreferenceModel resample_preferences(const PreferenceModel& pref, const PreferenceSchedule& schedule,
                                            std::size_t episode_index, Rng& rng) {
  if (!schedule.due(episode_index) || pref.widths_unique()) return pref;
  std::map<int, std::set<std::size_t>> chosen;
  std::set<int> widths(pref.grip_widths().begin(), pref.grip_widths().end());
  for (int w : widths) {
    const auto candidates = pref.matching(w);
    std::vector<std::size_t> v(candidates.begin(), candidates.end());
    chosen[w] = {v[uniform_index(rng, v.size())]};
  }
  return PreferenceModel::explicit_choice(pref.grip_widths(), std::move(chosen));
}

struct UserConfig {
  int reaction_delay = 3;
  double press_prob = 0.5;
  bool failsafe = true;
  /// Position at which a wrong grip is always pressed; unset means distance - 2.
  std::optional<int> failsafe_position;
  int expression_delay = 0;
  double noise_sigma = 0.005;

  int resolved_failsafe(int distance) const { return failsafe_position.value_or(distance - 2); }

  void validate(int distance) const {
    if (reaction_delay < 0) throw contract_error("UserConfig: reaction_delay must be >= 0");
    if (!(press_prob > 0.0 && press_prob <= 1.0)) throw contract_error("UserConfig: press_prob outside (0,1]");
    if (expression_delay < 0) throw contract_error("UserConfig: expression_delay must be >= 0");
    if (!(noise_sigma >= 0.0)) throw contract_error("UserConfig: noise_sigma must be >= 0");
    if (failsafe && resolved_failsafe(distance) >= distance)
      throw contract_error("UserConfig: failsafe_position must be < distance");
  }
};

/// Per-episode memory of the simulated user.
struct UserState {
  std::deque<double> valence_history;
  /// Ticks spent carrying a wrong grip away from the station; -1 when none.
  int violation_ticks = -1;

  void reset() {
    valence_history.clear();
    violation_ticks = -1;
  }
};

struct UserTick {
  int presses = 0;
  double valence = 0.0;
  LandmarkFrame frame;
};

inline double target_valence(const EnvState& s, const PreferenceModel& pref) {
  if (!s.grip) return 0.0;
  return pref.accepts(s.object, *s.grip) ? 1.0 : -1.0;
}

inline UserTick user_tick(const EnvState& s, const PreferenceModel& pref, const UserConfig& config, int distance,
                          UserState& state, Rng& rng) {
  UserTick out;

  // The face shows how the user felt expression_delay ticks ago; before
  // the episode had that many ticks it shows the first tick's feeling.
  state.valence_history.push_back(target_valence(s, pref));
  while (state.valence_history.size() > static_cast<std::size_t>(config.expression_delay) + 1)
    state.valence_history.pop_front();
  out.valence = state.valence_history.front();

  const bool wrong = s.grip && !pref.accepts(s.object, *s.grip);
  if (s.latched || s.position < 1 || !wrong) {
    state.violation_ticks = -1;
  } else {
    ++state.violation_ticks;
    const bool reacted = state.violation_ticks >= config.reaction_delay && bernoulli(rng, config.press_prob);
    const bool forced = config.failsafe && s.position == config.resolved_failsafe(distance);
    if (reacted || forced) out.presses = 1;
  }

  out.frame = synthesize_expression(out.valence, config.noise_sigma, rng);
  return out;
}

}  // namespace facevalue
