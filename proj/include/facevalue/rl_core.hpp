#pragma once

// Linear on-policy Sarsa(lambda) over sparse binary features.
//
// Weights and traces are stored action-major: entry (a, i) lives at
// a * dim + i. q(s, a) is the sum of the action's weights over the active
// features of s.

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "facevalue/errors.hpp"
#include "facevalue/random.hpp"
#include "facevalue/sparse_features.hpp"

namespace facevalue {

enum class TraceKind { replacing, accumulating };

/// Traces that decay below this magnitude are zeroed and dropped.
inline constexpr double kTracePrune = 1e-10;

struct AgentConfig {
  double alpha = 0.1;
  /// When set, the effective step size is alpha / |active features|.
  bool alpha_per_active = true;
  double gamma = 1.0;
  double lambda = 0.9;
  double epsilon = 0.1;
  /// Starting value of every q(s, a), carried by the bias weight (the last
  /// feature index of both encodings); all other weights start at zero.
  double initial_value = 0.0;
  TraceKind trace_kind = TraceKind::replacing;
  std::size_t num_actions = 0;
  std::size_t dim = 0;

  void validate() const {
    if (!(alpha > 0.0)) throw contract_error("AgentConfig: alpha must be > 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw contract_error("AgentConfig: gamma outside [0,1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw contract_error("AgentConfig: lambda outside [0,1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw contract_error("AgentConfig: epsilon outside [0,1]");
    if (num_actions == 0) throw contract_error("AgentConfig: num_actions must be > 0");
    if (dim == 0) throw contract_error("AgentConfig: dim must be > 0");
  }
};

/// Weights plus eligibility traces. Owned by exactly one session loop.
class Learner {
 public:
  explicit Learner(const AgentConfig& config)
      : config_(config),
        weights_((config.validate(), config.num_actions * config.dim), 0.0),
        traces_(config.num_actions * config.dim, 0.0),
        is_live_(config.num_actions * config.dim, 0) {
    for (std::size_t a = 0; a < num_actions(); ++a) weights_[a * dim() + dim() - 1] = config.initial_value;
  }

  const AgentConfig& config() const noexcept { return config_; }
  std::size_t num_actions() const noexcept { return config_.num_actions; }
  std::size_t dim() const noexcept { return config_.dim; }

  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const double> traces() const noexcept { return traces_; }
  std::span<const double> weights(std::size_t action) const {
    check_action(action);
    return std::span<const double>(weights_).subspan(action * dim(), dim());
  }

  double& weight(std::size_t action, std::size_t i) {
    check_action(action);
    check_index(i);
    return weights_[action * dim() + i];
  }
  double weight(std::size_t action, std::size_t i) const {
    check_action(action);
    check_index(i);
    return weights_[action * dim() + i];
  }
  void set_trace(std::size_t action, std::size_t i, double value) {
    check_action(action);
    check_index(i);
    traces_[action * dim() + i] = value;
    if (value != 0.0) mark_live(action * dim() + i);
  }
  double trace(std::size_t action, std::size_t i) const {
    check_action(action);
    check_index(i);
    return traces_[action * dim() + i];
  }

  /// Copy of the weights, safe to hand to another thread.
  std::vector<double> snapshot() const { return weights_; }

  void restore(std::span<const double> weights) {
    if (weights.size() != weights_.size())
      throw contract_error("Learner::restore: expected " + std::to_string(weights_.size()) +
                           " weights, got " + std::to_string(weights.size()));
    weights_.assign(weights.begin(), weights.end());
  }

  void check_action(std::size_t action) const {
    if (action >= num_actions())
      throw contract_error("action " + std::to_string(action) + " out of range (" +
                           std::to_string(num_actions()) + " actions)");
  }
  void check_features(const SparseFeatures& feats) const {
    if (feats.dim() != dim())
      throw contract_error("feature dim " + std::to_string(feats.dim()) + " does not match learner dim " +
                           std::to_string(dim()));
  }

 private:
  friend void begin_episode(Learner&);
  friend double sarsa_update(Learner&, const SparseFeatures&, std::size_t, double, const SparseFeatures*,
                             std::size_t, bool);

  void check_index(std::size_t i) const {
    if (i >= dim()) throw contract_error("feature index " + std::to_string(i) + " out of range");
  }

  void mark_live(std::size_t k) {
    if (!is_live_[k]) {
      is_live_[k] = 1;
      live_.push_back(k);
    }
  }

  AgentConfig config_;
  std::vector<double> weights_;
  std::vector<double> traces_;
  // Indices of the non-zero traces, so decay and the weight update cost
  // O(live traces) instead of O(actions * dim).
  std::vector<std::size_t> live_;
  std::vector<char> is_live_;
};

inline double q_value(const Learner& learner, const SparseFeatures& feats, std::size_t action) {
  learner.check_action(action);
  learner.check_features(feats);
  const auto w = learner.weights(action);
  double q = 0.0;
  for (std::size_t i : feats.active()) q += w[i];
  return q;
}

/// Epsilon-greedy over the available actions; argmax ties are broken
/// uniformly at random. A singleton set is returned without consuming rng.
inline std::size_t select_action(const Learner& learner, const SparseFeatures& feats,
                                 std::span<const std::size_t> available, double epsilon, Rng& rng) {
  if (available.empty()) throw contract_error("select_action: no available actions");
  if (available.size() == 1) {
    learner.check_action(available[0]);
    return available[0];
  }
  if (uniform01(rng) < epsilon) return available[uniform_index(rng, available.size())];

  std::vector<std::size_t> best;
  double best_q = -std::numeric_limits<double>::infinity();
  for (std::size_t a : available) {
    const double q = q_value(learner, feats, a);
    if (q > best_q) {
      best_q = q;
      best.assign(1, a);
    } else if (q == best_q) {
      best.push_back(a);
    }
  }
  return best.size() == 1 ? best[0] : best[uniform_index(rng, best.size())];
}

inline void begin_episode(Learner& learner) {
  for (std::size_t k : learner.live_) {
    learner.traces_[k] = 0.0;
    learner.is_live_[k] = 0;
  }
  learner.live_.clear();
}

/// One Sarsa(lambda) step for the transition (feats_t, a_t) -> reward ->
/// (feats_next, a_next). feats_next may be null only when terminal.
/// Returns the TD error.
inline double sarsa_update(Learner& learner, const SparseFeatures& feats_t, std::size_t a_t, double reward,
                           const SparseFeatures* feats_next, std::size_t a_next, bool terminal) {
  const AgentConfig& cfg = learner.config();
  learner.check_features(feats_t);
  learner.check_action(a_t);

  double next_q = 0.0;
  if (!terminal) {
    if (feats_next == nullptr) throw contract_error("sarsa_update: non-terminal update needs next features");
    next_q = q_value(learner, *feats_next, a_next);
  }
  const double delta = reward + cfg.gamma * next_q - q_value(learner, feats_t, a_t);

  const double decay = cfg.gamma * cfg.lambda;
  auto& z = learner.traces_;
  auto& live = learner.live_;
  std::size_t kept = 0;
  for (std::size_t k : live) {
    z[k] *= decay;
    if (std::abs(z[k]) < kTracePrune) {
      z[k] = 0.0;
      learner.is_live_[k] = 0;
    } else {
      live[kept++] = k;
    }
  }
  live.resize(kept);
  const std::size_t base = a_t * learner.dim();
  for (std::size_t i : feats_t.active()) {
    const std::size_t k = base + i;
    if (cfg.trace_kind == TraceKind::replacing)
      z[k] = 1.0;
    else
      z[k] += 1.0;
    learner.mark_live(k);
  }

  const double step = cfg.alpha_per_active ? cfg.alpha / static_cast<double>(feats_t.size()) : cfg.alpha;
  const double scale = step * delta;
  if (scale != 0.0) {
    auto& w = learner.weights_;
    for (std::size_t k : live) w[k] += scale * z[k];
  }
  return delta;
}

inline double sarsa_update(Learner& learner, const SparseFeatures& feats_t, std::size_t a_t, double reward,
                           const SparseFeatures& feats_next, std::size_t a_next) {
  return sarsa_update(learner, feats_t, a_t, reward, &feats_next, a_next, false);
}

inline double sarsa_update_terminal(Learner& learner, const SparseFeatures& feats_t, std::size_t a_t,
                                    double reward) {
  return sarsa_update(learner, feats_t, a_t, reward, nullptr, 0, true);
}

// Weight snapshot text format:
//
//   facevalue-weights 1 <num_actions> <dim>
//   <dim values for action 0>
//   ...
//   <dim values for action num_actions-1>
//
// Values are whitespace separated and printed with 17 significant digits,
// so a save/load cycle is exact.

inline void save_weights(std::ostream& out, const Learner& learner) {
  out << "facevalue-weights 1 " << learner.num_actions() << ' ' << learner.dim() << '\n';
  out << std::setprecision(17);
  for (std::size_t a = 0; a < learner.num_actions(); ++a) {
    const auto w = learner.weights(a);
    for (std::size_t i = 0; i < w.size(); ++i) out << (i ? " " : "") << w[i];
    out << '\n';
  }
}

inline void load_weights(std::istream& in, Learner& learner) {
  std::string magic;
  int version = 0;
  std::size_t actions = 0, dim = 0;
  if (!(in >> magic >> version >> actions >> dim) || magic != "facevalue-weights" || version != 1)
    throw parse_error("weight snapshot: bad header");
  if (actions != learner.num_actions() || dim != learner.dim())
    throw contract_error("weight snapshot: shape " + std::to_string(actions) + "x" + std::to_string(dim) +
                         " does not match learner");
  std::vector<double> w(actions * dim);
  for (double& v : w)
    if (!(in >> v)) throw parse_error("weight snapshot: truncated table");
  learner.restore(w);
}

/// FNV-1a over the raw weight bytes; used to compare learning trajectories.
inline std::uint64_t weights_fingerprint(std::span<const double> weights) {
  std::uint64_t h = 1469598103934665603ULL;
  for (double v : weights) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFu;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

}  // namespace facevalue
