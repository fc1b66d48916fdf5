#include <gtest/gtest.h>

#include <chrono>
#include <sstream>
#include <thread>

#include "facevalue/live_service.hpp"

using namespace facevalue;
using namespace std::chrono_literals;

namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

wire::InEvent event(wire::InEvent::Kind k) {
  wire::InEvent e;
  e.kind = k;
  return e;
}

TickInput start_input() {
  TickInput in;
  in.start = true;
  return in;
}

/// Runs `ticks` live ticks with a scripted input pattern, logging everything.
std::string scripted_log(const ExperimentConfig& c, std::uint64_t seed, int ticks) {
  LiveSession live(c, seed);
  std::ostringstream log;
  eventlog::Writer w(log, live);
  Rng rng = make_rng(1234, 0);
  for (int n = 0; n < ticks; ++n) {
    TickInput in;
    if (n == 0) in.start = true;
    if (n % 7 == 3) in.presses = 1 + (n % 2);
    if (n % 11 == 5) in.face = uniform01(rng) * 2.0 - 1.0;
    if (n % 23 == 9) in.face = synthesize_expression(0.5, 0.01, rng);
    w.record(static_cast<std::uint64_t>(n), in, live.step(in));
  }
  w.finish(static_cast<std::uint64_t>(ticks), live.fingerprint());
  return log.str();
}

}  // namespace

TEST(LiveSession, IdleUntilStart) {
  LiveSession live(parse("runs = 1\n"), 1);
  TickInput in;
  in.presses = 3;
  EXPECT_FALSE(live.step(in));
  EXPECT_EQ(live.phase(), LiveSession::Phase::idle);
  const auto f = live.step(start_input());
  ASSERT_TRUE(f);
  EXPECT_EQ(f->episode, 0u);
  EXPECT_EQ(f->tick, 0u);
  EXPECT_EQ(f->reward, 0.0);
  EXPECT_EQ(live.phase(), LiveSession::Phase::running);
}

TEST(LiveSession, NeutralFaceWhenNoInput) {
  const auto c = parse("agent = face\nruns = 1\n");
  LiveSession live(c, 5);
  Session ref(c, 5);
  ref.begin_episode(0);
  live.step(start_input());
  ref.tick(0, canonical::face());
  for (int k = 0; k < 40; ++k) {
    const auto f = live.step({});
    const auto t = ref.tick(0, canonical::face());
    ASSERT_TRUE(f);
    EXPECT_EQ(f->pos, t.state.position);
  }
  EXPECT_EQ(live.fingerprint(), weights_fingerprint(ref.learner().weights()));
}

TEST(LiveSession, ValenceGoesThroughSynthesis) {
  const auto c = parse("agent = face\nruns = 1\n");
  LiveSession live(c, 5);
  Session ref(c, 5);
  Rng face_rng = make_rng(5, stream::live_face);
  ref.begin_episode(0);
  TickInput in = start_input();
  in.face = 1.0;
  live.step(in);
  ref.tick(0, synthesize_expression(1.0, c.user.noise_sigma, face_rng));
  for (int k = 0; k < 30; ++k) {
    live.step({});
    ref.tick(0, synthesize_expression(1.0, c.user.noise_sigma, face_rng));
  }
  EXPECT_EQ(live.fingerprint(), weights_fingerprint(ref.learner().weights()));
}

TEST(LiveSession, TwoPressesInOneTick) {
  LiveSession live(parse("runs = 1\n"), 1);
  live.step(start_input());
  std::vector<wire::InEvent> events{event(wire::InEvent::Kind::button), event(wire::InEvent::Kind::button)};
  const TickInput in = collect_input(live, events, [](const std::string&) { FAIL(); });
  EXPECT_EQ(in.presses, 2);
  const auto f = live.step(in);
  ASSERT_TRUE(f);
  EXPECT_EQ(f->reward, -10.0);
}

TEST(LiveSession, LatestFaceWins) {
  LiveSession live(parse("runs = 1\n"), 1);
  auto a = event(wire::InEvent::Kind::valence);
  a.value = -1.0;
  auto b = event(wire::InEvent::Kind::landmarks);
  b.points = canonical::face();
  auto c = event(wire::InEvent::Kind::valence);
  c.value = 0.5;
  const auto in = collect_input(live, {a, b, c}, [](const std::string&) { FAIL(); });
  ASSERT_TRUE(in.face);
  EXPECT_EQ(std::get<double>(*in.face), 0.5);
}

TEST(LiveSession, Rejections) {
  LiveSession live(parse("runs = 1\n"), 1);
  auto flat = event(wire::InEvent::Kind::landmarks);
  EXPECT_TRUE(live.reject_reason(flat));  // all points at the origin
  auto bad_patch = event(wire::InEvent::Kind::config_patch);
  bad_patch.values = {{"nonsense", "1"}};
  EXPECT_TRUE(live.reject_reason(bad_patch));
  bad_patch.values = {{"seed", "4"}};
  EXPECT_TRUE(live.reject_reason(bad_patch));
  auto good_patch = event(wire::InEvent::Kind::config_patch);
  good_patch.values = {{"agent", "face"}};
  EXPECT_FALSE(live.reject_reason(good_patch));
  live.step(start_input());
  EXPECT_TRUE(live.reject_reason(event(wire::InEvent::Kind::start)));
  EXPECT_TRUE(live.reject_reason(good_patch));
  int rejected = 0;
  const auto in = collect_input(live, {flat, good_patch, event(wire::InEvent::Kind::button)},
                                [&](const std::string&) { ++rejected; });
  EXPECT_EQ(rejected, 2);
  EXPECT_EQ(in.presses, 1);
}

TEST(LiveSession, ConfigPatchBeforeStart) {
  LiveSession live(parse("runs = 1\n"), 1);
  TickInput in;
  in.patch = {{"agent", "face"}, {"grips", "3"}};
  EXPECT_FALSE(live.step(in));
  EXPECT_EQ(live.config().agent, AgentKind::face_state);
  EXPECT_EQ(live.session().learner().dim(), 9201u);
  EXPECT_EQ(live.session().learner().num_actions(), 5u);
}

TEST(LiveSession, TicksIncreaseWithinEpisodeAndSessionFinishes) {
  LiveSession live(parse("runs = 1\nepisodes = 3\n"), 2);
  auto f = live.step(start_input());
  std::size_t last_tick = 0, episode = 0;
  int frames = 1;
  while (live.phase() == LiveSession::Phase::running && frames < 100000) {
    const auto g = live.step({});
    if (!g) break;
    if (g->episode == episode) {
      EXPECT_EQ(g->tick, last_tick + 1);
    } else {
      EXPECT_EQ(g->episode, episode + 1);
      EXPECT_EQ(g->tick, 0u);
    }
    last_tick = g->tick;
    episode = g->episode;
    ++frames;
  }
  EXPECT_EQ(live.phase(), LiveSession::Phase::finished);
  EXPECT_EQ(episode, 2u);
  EXPECT_FALSE(live.step({}));
}

TEST(EventLog, ReplayReproducesLiveRun) {
  for (const char* cfg : {"runs = 1\n", "agent = face\nruns = 1\n", "agent = face\ngrips = 5\nobjects = infinite\nruns = 1\n"}) {
    const std::string log = scripted_log(parse(cfg), 9, 400);
    std::istringstream in(log);
    const auto r = replay(in);
    EXPECT_TRUE(r.ok) << cfg << r.message;
    EXPECT_EQ(r.message.rfind("REPLAY OK", 0), 0u);
    EXPECT_GT(r.frames, 300u);
  }
}

TEST(EventLog, TamperedLogDetected) {
  std::string log = scripted_log(parse("runs = 1\n"), 9, 200);
  // Drop a press from the inputs: the trajectory diverges.
  const auto pos = log.find("\"presses\":1");
  ASSERT_NE(pos, std::string::npos);
  log.replace(pos, 11, "\"presses\":0");
  std::istringstream in(log);
  const auto r = replay(in);
  EXPECT_FALSE(r.ok);
  EXPECT_NE(r.message.find("line"), std::string::npos);
}

TEST(EventLog, MissingSummaryIsAFailure) {
  std::string log = scripted_log(parse("runs = 1\n"), 9, 50);
  log.erase(log.rfind("{\"kind\":\"summary\""));
  std::istringstream in(log);
  EXPECT_FALSE(replay(in).ok);
}

TEST(EventLog, TamperedWeightsDetected) {
  std::string log = scripted_log(parse("runs = 1\n"), 9, 50);
  const auto pos = log.rfind("\"weights\":\"");
  log[pos + 11] = log[pos + 11] == '0' ? '1' : '0';
  std::istringstream in(log);
  const auto r = replay(in);
  EXPECT_FALSE(r.ok);
  EXPECT_NE(r.message.find("fingerprint"), std::string::npos);
}

// ---------------------------------------------------------------------------
// End to end over a real socket

namespace {

class Client {
 public:
  explicit Client(std::uint16_t port) : sock_(ws::connect_tcp("127.0.0.1", port)) {
    std::string rest;
    ws::client_handshake(sock_, "127.0.0.1", port, rest);
    dec_.feed(rest);
  }

  void send(const std::string& text) {
    ASSERT_TRUE(sock_.send_all(ws::encode_frame(ws::Opcode::text, text, std::array<std::uint8_t, 4>{1, 2, 3, 4})));
  }

  /// Next text message, waiting up to `timeout`.
  std::optional<std::string> recv(std::chrono::milliseconds timeout = 2000ms) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto f = dec_.next()) {
        if (f->opcode == ws::Opcode::text) return f->payload;
        continue;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{sock_.fd(), POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
      const std::string chunk = sock_.recv_some();
      if (chunk.empty()) return std::nullopt;
      dec_.feed(chunk);
    }
  }

  void close() {
    sock_.send_all(ws::encode_frame(ws::Opcode::close, "", std::array<std::uint8_t, 4>{0, 0, 0, 0}));
    sock_.close();
  }

 private:
  ws::Socket sock_;
  ws::Decoder dec_{false};
};

}  // namespace

TEST(LiveServer, EndToEnd) {
  LiveSession live(parse("agent = face\nruns = 1\n"), 3);
  std::ostringstream log;
  ServeOptions opts;
  opts.port = 0;
  opts.loopback_only = true;
  opts.tick = 20ms;
  LiveServer server(live, opts, &log);
  std::thread th([&] { server.run(); });

  {
    Client c(server.port());
    c.send(R"({"v":1,"kind":"nonsense"})");
    auto err = c.recv();
    ASSERT_TRUE(err);
    EXPECT_NE(err->find("\"error\""), std::string::npos);

    c.send(R"({"v":1,"kind":"valence","value":0.8})");
    c.send(R"({"v":1,"kind":"start"})");
    std::vector<wire::OutFrame> frames;
    while (frames.size() < 5) {
      auto m = c.recv();
      ASSERT_TRUE(m);
      frames.push_back(wire::decode_frame(*m));
    }
    c.send(R"({"v":1,"kind":"button"})");
    bool penalised = false;
    for (int k = 0; k < 3 && !penalised; ++k) {
      auto m = c.recv();
      ASSERT_TRUE(m);
      penalised = wire::decode_frame(*m).reward == -5.0;
    }
    EXPECT_TRUE(penalised) << "button not reflected within 2 ticks";
    c.close();
  }

  // Disconnected: the loop pauses.
  std::this_thread::sleep_for(100ms);
  const auto paused_at = server.ticks();
  std::this_thread::sleep_for(150ms);
  EXPECT_EQ(server.ticks(), paused_at);

  {
    Client c(server.port());
    auto m = c.recv();
    ASSERT_TRUE(m);
    EXPECT_EQ(nlohmann::json::parse(*m)["kind"], "frame");
    c.close();
  }
  server.request_stop();
  th.join();

  std::istringstream in(log.str());
  const auto r = replay(in);
  EXPECT_TRUE(r.ok) << r.message;
}

TEST(LiveServer, TickCadence) {
  LiveSession live(parse("runs = 1\nepisodes = 1000\n"), 1);
  ServeOptions opts;
  opts.port = 0;
  opts.loopback_only = true;
  opts.tick = 50ms;
  LiveServer server(live, opts);
  std::thread th([&] { server.run(); });
  Client c(server.port());
  c.send(R"({"v":1,"kind":"start"})");
  ASSERT_TRUE(c.recv());
  const auto t0 = std::chrono::steady_clock::now();
  int frames = 0;
  while (std::chrono::steady_clock::now() - t0 < 2000ms) {
    if (c.recv(200ms)) ++frames;
  }
  c.close();
  server.request_stop();
  th.join();
  // 2 s at 20 Hz
  EXPECT_NEAR(frames, 40, 3);
}
