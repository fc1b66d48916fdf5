#include <gtest/gtest.h>

#include <vector>

#include "facevalue/sim_user.hpp"

using namespace facevalue;

namespace {

EnvState at(int pos, std::optional<std::size_t> grip, ObjectSpec obj = {0, 1}, bool latched = false) {
  EnvState s;
  s.position = pos;
  s.grip = grip;
  s.object = obj;
  s.latched = latched;
  return s;
}

UserConfig quiet() {
  UserConfig c;
  c.noise_sigma = 0.0;
  return c;
}

}  // namespace

TEST(PreferenceModel, WidthMatch) {
  const auto p = PreferenceModel::width_match({1, 2, 2});
  EXPECT_EQ(p.acceptable({0, 1}), (std::set<std::size_t>{0}));
  EXPECT_EQ(p.acceptable({1, 2}), (std::set<std::size_t>{1, 2}));
  EXPECT_FALSE(p.widths_unique());
  EXPECT_TRUE(PreferenceModel::width_match({1, 2}).widths_unique());
}

TEST(PreferenceModel, ExplicitChoiceValidated) {
  EXPECT_THROW(PreferenceModel::explicit_choice({1, 2}, {{1, {}}}), contract_error);
  EXPECT_THROW(PreferenceModel::explicit_choice({1, 2}, {{1, {5}}}), contract_error);
  const auto p = PreferenceModel::explicit_choice({1, 2, 2}, {{2, {2}}});
  EXPECT_EQ(p.acceptable({3, 2}), (std::set<std::size_t>{2}));
}

TEST(ResamplePreferences, NeverKeepsModel) {
  const auto p = PreferenceModel::width_match({1, 1, 2});
  Rng rng = make_rng(1, 0);
  for (std::size_t ep = 0; ep < 10; ++ep) EXPECT_EQ(resample_preferences(p, {}, ep, rng), p);
}

TEST(ResamplePreferences, UniqueWidthsUnchanged) {
  const auto p = PreferenceModel::width_match({1, 2, 3});
  Rng rng = make_rng(1, 0);
  const PreferenceSchedule every{PreferenceSchedule::Kind::per_episode, 1};
  for (std::size_t ep = 0; ep < 10; ++ep) EXPECT_EQ(resample_preferences(p, every, ep, rng), p);
}

TEST(ResamplePreferences, DuplicatedWidthsReproducible) {
  const auto p = PreferenceModel::width_match({1, 1, 1, 2});
  const PreferenceSchedule every{PreferenceSchedule::Kind::per_episode, 1};
  const auto seq = [&] {
    Rng rng = make_rng(5, stream::preferences);
    std::vector<std::set<std::size_t>> out;
    for (std::size_t ep = 0; ep < 20; ++ep) out.push_back(resample_preferences(p, every, ep, rng).acceptable({0, 1}));
    return out;
  };
  const auto a = seq();
  EXPECT_EQ(a, seq());
  std::set<std::size_t> seen;
  for (const auto& s : a) {
    ASSERT_EQ(s.size(), 1u);
    EXPECT_LT(*s.begin(), 3u);
    seen.insert(*s.begin());
  }
  EXPECT_GT(seen.size(), 1u);
}

TEST(ResamplePreferences, EveryK) {
  const PreferenceSchedule s{PreferenceSchedule::Kind::every_k, 3};
  EXPECT_TRUE(s.due(0));
  EXPECT_FALSE(s.due(1));
  EXPECT_FALSE(s.due(2));
  EXPECT_TRUE(s.due(3));
}

TEST(UserConfig, Validation) {
  UserConfig c;
  EXPECT_NO_THROW(c.validate(10));
  c.press_prob = 0.0;
  EXPECT_THROW(c.validate(10), contract_error);
  c = UserConfig{};
  c.failsafe_position = 10;
  EXPECT_THROW(c.validate(10), contract_error);
  c = UserConfig{};
  c.reaction_delay = -1;
  EXPECT_THROW(c.validate(10), contract_error);
}

TEST(UserTick, AcceptableGripNeverPressedAndSmiles) {
  auto c = quiet();
  c.expression_delay = 2;
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  std::vector<double> valence;
  for (int pos = 0; pos < 10; ++pos) {
    const auto t = user_tick(at(pos, 0), pref, c, 10, st, rng);
    EXPECT_EQ(t.presses, 0);
    valence.push_back(t.valence);
  }
  EXPECT_EQ(valence.front(), 1.0);
  EXPECT_EQ(valence.back(), 1.0);
}

TEST(UserTick, ValenceIsDelayed) {
  auto c = quiet();
  c.expression_delay = 2;
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  const std::vector<EnvState> states{at(0, {}), at(0, 1), at(0, 1), at(0, 0), at(0, 0), at(0, 0)};
  std::vector<double> got;
  for (const auto& s : states) got.push_back(user_tick(s, pref, c, 10, st, rng).valence);
  // targets: 0, -1, -1, +1, +1, +1 shifted by two ticks
  EXPECT_EQ(got, (std::vector<double>{0, 0, 0, -1, -1, 1}));
}

TEST(UserTick, FrameFollowsDelayedValence) {
  auto c = quiet();
  c.expression_delay = 0;
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  Rng ref = make_rng(1, 0);
  const auto t = user_tick(at(0, 1), pref, c, 10, st, rng);
  EXPECT_EQ(t.valence, -1.0);
  EXPECT_EQ(t.frame, synthesize_expression(-1.0, 0.0, ref));
}

TEST(UserTick, WrongGripAtStationNotPressed) {
  auto c = quiet();
  c.reaction_delay = 0;
  c.press_prob = 1.0;
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  for (int k = 0; k < 10; ++k) {
    const auto t = user_tick(at(0, 1), pref, c, 10, st, rng);
    EXPECT_EQ(t.presses, 0);
  }
}

TEST(UserTick, FailsafeAtDMinusTwo) {
  auto c = quiet();
  c.reaction_delay = 100;
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  for (int pos = 1; pos < 8; ++pos) EXPECT_EQ(user_tick(at(pos, 1), pref, c, 10, st, rng).presses, 0);
  EXPECT_EQ(user_tick(at(8, 1), pref, c, 10, st, rng).presses, 1);
}

TEST(UserTick, ReactionDelayCountsViolationTicks) {
  auto c = quiet();
  c.reaction_delay = 3;
  c.press_prob = 1.0;
  c.failsafe = false;
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  std::vector<int> presses;
  for (int pos = 1; pos <= 5; ++pos) presses.push_back(user_tick(at(pos, 1), pref, c, 10, st, rng).presses);
  EXPECT_EQ(presses, (std::vector<int>{0, 0, 0, 1, 1}));
}

TEST(UserTick, NoPressWhileLatched) {
  auto c = quiet();
  c.reaction_delay = 0;
  c.press_prob = 1.0;
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  for (int pos = 8; pos >= 1; --pos) EXPECT_EQ(user_tick(at(pos, 1, {0, 1}, true), pref, c, 10, st, rng).presses, 0);
}

TEST(UserTick, NoiselessFramesRepeat) {
  auto c = quiet();
  const auto pref = PreferenceModel::width_match({1, 2});
  UserState st;
  Rng rng = make_rng(1, 0);
  const auto a = user_tick(at(0, 0), pref, c, 10, st, rng);
  const auto b = user_tick(at(0, 0), pref, c, 10, st, rng);
  EXPECT_EQ(a.frame, b.frame);
}
