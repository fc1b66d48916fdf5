#pragma once

// Live mode: the session loop paced at a fixed tick against a remote user.
//
// LiveSession is the socket-free core. Each tick it consumes one TickInput
// (button presses counted, face input latest-wins and retained) and emits
// at most one OutFrame. The event log records every consumed TickInput and
// every emitted frame, so replay() can re-run the session and compare.
//
// LiveServer adds the transport: one WebSocket client, a reader thread
// feeding a bounded queue, and the tick loop on the calling thread.

#include <poll.h>

#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <istream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "facevalue/config.hpp"
#include "facevalue/errors.hpp"
#include "facevalue/face_pipeline.hpp"
#include "facevalue/gripworld.hpp"
#include "facevalue/random.hpp"
#include "facevalue/rl_core.hpp"
#include "facevalue/session.hpp"
#include "facevalue/websocket.hpp"
#include "facevalue/wire.hpp"

namespace facevalue {

/// Face input retained between ticks: a valence preset or a raw frame.
using FaceInput = std::variant<double, LandmarkFrame>;

struct TickInput {
  int presses = 0;
  std::optional<FaceInput> face;
  bool start = false;
  std::map<std::string, std::string> patch;

  bool empty() const { return presses == 0 && !face && !start && patch.empty(); }
  friend bool operator==(const TickInput&, const TickInput&) = default;
};

class LiveSession {
 public:
  enum class Phase { idle, running, finished };

  LiveSession(ExperimentConfig config, std::uint64_t seed)
      : config_(std::move(config)), seed_(seed), session_(config_, seed_), face_rng_(make_rng(seed_, stream::live_face)) {}

  const ExperimentConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Phase phase() const noexcept { return phase_; }
  const Session& session() const noexcept { return session_; }
  bool object_visible = true;

  /// Why an event cannot be accepted right now, or nullopt if it can.
  std::optional<std::string> reject_reason(const wire::InEvent& e) const {
    switch (e.kind) {
      case wire::InEvent::Kind::landmarks:
        try {
          (void)normalize_landmarks(e.points, config_.tiles.normalization);
        } catch (const std::exception& ex) {
          return std::string("landmarks rejected: ") + ex.what();
        }
        return std::nullopt;
      case wire::InEvent::Kind::start:
        if (phase_ == Phase::running) return "already running";
        if (phase_ == Phase::finished) return "session finished; restart the server for a new one";
        return std::nullopt;
      case wire::InEvent::Kind::config_patch:
        if (phase_ != Phase::idle) return "config_patch is only accepted before start";
        return patch_error(e.values);
      case wire::InEvent::Kind::button:
      case wire::InEvent::Kind::valence:
        break;
    }
    return std::nullopt;
  }

  /// Error message if applying `patch` to the current config would fail.
  std::optional<std::string> patch_error(const std::map<std::string, std::string>& patch) const {
    try {
      (void)patched(patch);
    } catch (const std::exception& ex) {
      return std::string("config_patch rejected: ") + ex.what();
    }
    return std::nullopt;
  }

  /// One tick. Returns the frame to broadcast, if the session is running.
  std::optional<wire::OutFrame> step(const TickInput& in) {
    if (!in.patch.empty()) {
      if (phase_ != Phase::idle) throw contract_error("LiveSession: config_patch after start");
      config_ = patched(in.patch);
      session_ = Session(config_, seed_);
    }
    if (in.face) face_ = in.face;
    if (in.start && phase_ == Phase::idle) {
      phase_ = Phase::running;
      session_.begin_episode(0);
    }
    if (phase_ != Phase::running) return std::nullopt;

    if (!session_.in_episode() || session_.ticks() >= config_.max_ticks) {
      const std::size_t next = session_.episode() + 1;
      if (next >= config_.episodes) {
        phase_ = Phase::finished;
        return std::nullopt;
      }
      session_.begin_episode(next);
    }

    const TickOutcome t = session_.tick(in.presses, current_frame());
    wire::OutFrame f;
    f.episode = session_.episode();
    f.tick = t.tick;
    f.pos = t.state.position;
    f.grip = t.state.grip;
    if (object_visible) f.object = t.state.object;
    for (const Action& a : available_actions(config_.env, t.state)) f.avail.push_back(a.name());
    f.reward = t.reward;
    f.terminal = t.terminal;
    f.latched = t.state.latched;
    if (t.terminal && session_.episode() + 1 >= config_.episodes) phase_ = Phase::finished;
    return f;
  }

  std::uint64_t fingerprint() const { return weights_fingerprint(session_.learner().weights()); }

 private:
  ExperimentConfig patched(const std::map<std::string, std::string>& patch) const {
    ExperimentConfig c = config_;
    for (const auto& [k, v] : patch) {
      if (k == "seed" || k == "seeds" || k == "runs") throw parse_error("'" + k + "' is fixed for a live session");
      if (!apply_config_key(c, k, v)) throw parse_error("unknown config key '" + k + "'");
    }
    c.validate();
    return c;
  }

  LandmarkFrame current_frame() {
    if (!face_) return canonical::face();
    if (const double* v = std::get_if<double>(&*face_)) return synthesize_expression(*v, config_.user.noise_sigma, face_rng_);
    return std::get<LandmarkFrame>(*face_);
  }

  ExperimentConfig config_;
  std::uint64_t seed_;
  Session session_;
  Rng face_rng_;
  std::optional<FaceInput> face_;
  Phase phase_ = Phase::idle;
};

/// Fold drained events into one tick's input. Rejected events are reported
/// through `on_reject` and left out.
template <class OnReject>
TickInput collect_input(const LiveSession& live, const std::vector<wire::InEvent>& events, OnReject&& on_reject) {
  TickInput in;
  for (const auto& e : events) {
    if (auto why = live.reject_reason(e)) {
      on_reject(*why);
      continue;
    }
    switch (e.kind) {
      case wire::InEvent::Kind::button:
        ++in.presses;
        break;
      case wire::InEvent::Kind::valence:
        in.face = e.value;
        break;
      case wire::InEvent::Kind::landmarks:
        in.face = e.points;
        break;
      case wire::InEvent::Kind::start:
        in.start = true;
        break;
      case wire::InEvent::Kind::config_patch: {
        auto merged = in.patch;
        for (const auto& [k, v] : e.values) merged[k] = v;
        if (auto why = live.patch_error(merged)) {
          on_reject(*why);
        } else {
          in.patch = std::move(merged);
        }
        break;
      }
    }
  }
  return in;
}

// ---------------------------------------------------------------------------
// Event log: JSON lines.
//   {"v":1,"kind":"header","seed":S,"config":"<config file text>"}
//   {"v":1,"kind":"input","n":N,"presses":K,"start":B,"face":null|V|[[x,y]...],"patch":{...}}
//   {"v":1,"kind":"frame",...}                      when the tick emitted one
//   {"v":1,"kind":"summary","ticks":N,"weights":"<16 hex digits>"}
// Ticks whose input is empty and that emit no frame are not logged.

namespace eventlog {

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

inline std::string header_line(const LiveSession& live) {
  return nlohmann::json{{"v", wire::kVersion}, {"kind", "header"}, {"seed", live.seed()}, {"config", format_config(live.config())}}
      .dump();
}

inline std::string input_line(std::uint64_t n, const TickInput& in) {
  nlohmann::json j{{"v", wire::kVersion}, {"kind", "input"}, {"n", n}, {"presses", in.presses}, {"start", in.start}};
  if (!in.face) j["face"] = nullptr;
  else if (const double* v = std::get_if<double>(&*in.face)) j["face"] = *v;
  else j["face"] = wire::points_json(std::get<LandmarkFrame>(*in.face));
  j["patch"] = in.patch;
  return j.dump();
}

inline TickInput input_from_json(const nlohmann::json& j) {
  TickInput in;
  in.presses = j.at("presses").get<int>();
  in.start = j.at("start").get<bool>();
  const auto& face = j.at("face");
  if (face.is_number()) in.face = face.get<double>();
  else if (face.is_array()) in.face = wire::points_from_json(face);
  else if (!face.is_null()) throw parse_error("event log: bad face input");
  in.patch = j.at("patch").get<std::map<std::string, std::string>>();
  return in;
}

inline std::string summary_line(std::uint64_t ticks, std::uint64_t fingerprint) {
  return nlohmann::json{{"v", wire::kVersion}, {"kind", "summary"}, {"ticks", ticks}, {"weights", hex64(fingerprint)}}
      .dump();
}

class Writer {
 public:
  Writer(std::ostream& out, const LiveSession& live) : out_(out) { emit(header_line(live)); }

  void record(std::uint64_t n, const TickInput& in, const std::optional<wire::OutFrame>& frame) {
    if (in.empty() && !frame) return;
    emit(input_line(n, in));
    if (frame) emit(wire::encode(*frame));
  }

  void finish(std::uint64_t ticks, std::uint64_t fingerprint) { emit(summary_line(ticks, fingerprint)); }

 private:
  void emit(const std::string& line) { out_ << line << '\n' << std::flush; }
  std::ostream& out_;
};

}  // namespace eventlog

struct ReplayResult {
  bool ok = false;
  std::size_t frames = 0;
  std::string message;
};

/// Re-runs a logged live session from its header and inputs and checks
/// every frame and the final weights against the log.
inline ReplayResult replay(std::istream& log) {
  ReplayResult r;
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& what) {
    r.ok = false;
    r.message = "line " + std::to_string(lineno) + ": " + what;
    return r;
  };
  const auto parse = [&](const std::string& text) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw parse_error("event log line " + std::to_string(lineno) + ": " + e.what());
    }
  };

  if (!std::getline(log, line)) throw parse_error("event log is empty");
  ++lineno;
  const auto header = parse(line);
  if (header.value("kind", "") != "header") throw parse_error("event log: first line is not a header");
  std::istringstream cfg_text(header.at("config").get<std::string>());
  LiveSession live(parse_config(cfg_text), header.at("seed").get<std::uint64_t>());

  std::optional<wire::OutFrame> pending;  // produced by replay, awaiting its logged line
  while (std::getline(log, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = parse(line);
    const std::string kind = j.value("kind", "");
    if (kind == "frame") {
      if (!pending) return fail("logged frame has no replayed counterpart");
      if (wire::encode(*pending) != line) return fail("frame differs: replayed " + wire::encode(*pending));
      pending.reset();
      ++r.frames;
    } else {
      if (pending) return fail("replay emitted a frame that the log does not have");
      if (kind == "input") {
        pending = live.step(eventlog::input_from_json(j));
      } else if (kind == "summary") {
        const std::string want = j.at("weights").get<std::string>();
        const std::string got = eventlog::hex64(live.fingerprint());
        if (want != got) return fail("weights fingerprint " + got + " != logged " + want);
        r.ok = true;
        r.message = "REPLAY OK (" + std::to_string(r.frames) + " frames, weights " + got + ")";
        return r;
      } else {
        return fail("unexpected record kind '" + kind + "'");
      }
    }
  }
  if (pending) return fail("replay emitted a frame that the log does not have");
  return fail("log ends without a summary line");
}

// ---------------------------------------------------------------------------
// Server

struct ServeOptions {
  std::uint16_t port = 8765;
  bool loopback_only = false;
  std::chrono::milliseconds tick{100};
  std::size_t queue_capacity = 1024;
  /// Most events consumed per tick; the rest wait for later ticks.
  std::size_t drain_limit = 256;
};

/// Bounded multi-producer queue of decoded events.
class EventQueue {
 public:
  explicit EventQueue(std::size_t capacity) : capacity_(capacity) {}

  bool push(wire::InEvent e) {
    std::lock_guard lock(mu_);
    if (q_.size() >= capacity_) return false;
    q_.push_back(std::move(e));
    return true;
  }

  std::vector<wire::InEvent> drain(std::size_t limit) {
    std::lock_guard lock(mu_);
    std::vector<wire::InEvent> out;
    while (!q_.empty() && out.size() < limit) {
      out.push_back(std::move(q_.front()));
      q_.pop_front();
    }
    return out;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return q_.size();
  }

 private:
  mutable std::mutex mu_;
  std::deque<wire::InEvent> q_;
  std::size_t capacity_;
};

class LiveServer {
 public:
  LiveServer(LiveSession& live, ServeOptions options, std::ostream* event_log = nullptr)
      : live_(live), options_(options), queue_(options.queue_capacity), listener_(ws::listen_tcp(options.port, options.loopback_only)) {
    if (event_log) writer_.emplace(*event_log, live_);
  }

  std::uint16_t port() const { return ws::local_port(listener_); }
  void request_stop() { stop_ = true; }
  std::uint64_t ticks() const { return tick_; }

  /// Serves clients one at a time until request_stop(). The tick loop runs
  /// only while a client is connected.
  void run() {
    spdlog::info("live server listening on port {}", port());
    while (!stop_) {
      pollfd p{listener_.fd(), POLLIN, 0};
      if (::poll(&p, 1, 100) <= 0) continue;
      ws::Socket client(::accept(listener_.fd(), nullptr, nullptr));
      if (!client.valid()) continue;
      std::string rest;
      try {
        const std::string head = ws::read_http_head(client, rest);
        client.send_all(ws::handshake_response(head));
      } catch (const std::exception& e) {
        spdlog::warn("handshake failed: {}", e.what());
        client.send_all("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n");
        continue;
      }
      spdlog::info("client connected");
      serve_client(client, rest);
      spdlog::info("client disconnected; tick loop paused");
      if (live_.phase() == LiveSession::Phase::finished) spdlog::info("all episodes finished");
    }
    if (writer_) writer_->finish(tick_, live_.fingerprint());
  }

 private:
  void send_text(ws::Socket& s, const std::string& text) {
    std::lock_guard lock(send_mu_);
    s.send_all(ws::encode_frame(ws::Opcode::text, text));
  }

  void reader(ws::Socket& s, std::string rest, std::atomic<bool>& connected) {
    ws::Decoder dec(true);
    dec.feed(rest);
    try {
      for (;;) {
        while (auto f = dec.next()) {
          switch (f->opcode) {
            case ws::Opcode::text:
              try {
                wire::InEvent e = wire::decode_event(f->payload);
                e.received_tick = tick_.load();
                spdlog::debug("event {} at tick {}", wire::kind_name(e.kind), *e.received_tick);
                if (!queue_.push(std::move(e))) send_text(s, wire::encode_error("input queue full; event dropped"));
              } catch (const parse_error& ex) {
                spdlog::debug("rejected message: {}", ex.what());
                send_text(s, wire::encode_error(ex.what()));
              }
              break;
            case ws::Opcode::ping: {
              std::lock_guard lock(send_mu_);
              s.send_all(ws::encode_frame(ws::Opcode::pong, f->payload));
              break;
            }
            case ws::Opcode::close: {
              std::lock_guard lock(send_mu_);
              s.send_all(ws::encode_frame(ws::Opcode::close, ""));
              connected = false;
              return;
            }
            case ws::Opcode::binary:
              send_text(s, wire::encode_error("binary messages are not supported"));
              break;
            default:
              break;
          }
        }
        const std::string chunk = s.recv_some();
        if (chunk.empty()) break;
        dec.feed(chunk);
      }
    } catch (const ws::protocol_error& e) {
      spdlog::warn("protocol error: {}", e.what());
    }
    connected = false;
  }

  void serve_client(ws::Socket& client, std::string rest) {
    std::atomic<bool> connected{true};
    std::thread rd([&] { reader(client, std::move(rest), connected); });
    auto next = std::chrono::steady_clock::now() + options_.tick;
    while (connected && !stop_) {
      std::this_thread::sleep_until(next);
      next += options_.tick;
      const auto now = std::chrono::steady_clock::now();
      if (now > next) next = now + options_.tick;  // overran a whole tick; resynchronise

      const auto events = queue_.drain(options_.drain_limit);
      const TickInput in = collect_input(live_, events, [&](const std::string& why) {
        spdlog::debug("rejected event: {}", why);
        send_text(client, wire::encode_error(why));
      });
      std::optional<wire::OutFrame> frame;
      try {
        frame = live_.step(in);
      } catch (const std::exception& e) {
        spdlog::error("tick failed: {}", e.what());
        send_text(client, wire::encode_error(e.what()));
        continue;
      }
      if (writer_) writer_->record(tick_, in, frame);
      if (frame) {
        spdlog::debug("tick {} presses {} face {} -> ep {} t {} pos {} reward {}", tick_.load(), in.presses,
                      in.face ? (std::holds_alternative<double>(*in.face) ? "valence" : "landmarks") : "-",
                      frame->episode, frame->tick, frame->pos, frame->reward);
        send_text(client, wire::encode(*frame));
      }
      ++tick_;
    }
    client.shutdown();
    rd.join();
  }

  LiveSession& live_;
  ServeOptions options_;
  EventQueue queue_;
  ws::Socket listener_;
  std::optional<eventlog::Writer> writer_;
  std::mutex send_mu_;
  std::atomic<bool> stop_{false};
  std::atomic<std::uint64_t> tick_{0};
};

}  // namespace facevalue
