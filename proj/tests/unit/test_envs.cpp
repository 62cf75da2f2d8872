#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "offrl/envs.hpp"
#include "offrl/error.hpp"
#include "offrl/render.hpp"
#include "offrl/rollout.hpp"
#include "offrl/stats.hpp"

using namespace offrl;

namespace {

EnvState at(std::vector<double> v, int t = 0) { return EnvState{std::move(v), t}; }

}  // namespace

TEST(EnvSpec, DimensionsMatchEnv) {
  const auto pm = EnvSpec::make(EnvId::PointMass2D);
  EXPECT_EQ(pm.state_dim, 4);
  EXPECT_EQ(pm.action_dim, 2);
  EXPECT_EQ(pm.horizon, 50);
  EXPECT_DOUBLE_EQ(pm.success_threshold, 0.05);
  const auto cp = EnvSpec::make(EnvId::CartPoleBalance);
  EXPECT_EQ(cp.state_dim, 4);
  EXPECT_EQ(cp.action_dim, 1);
  EXPECT_EQ(cp.horizon, 200);
  const auto ch = EnvSpec::make(EnvId::ChainMDP);
  EXPECT_EQ(ch.state_dim, 1);
  EXPECT_EQ(ch.action_dim, 1);
  EXPECT_EQ(ch.horizon, 20);
  for (const auto& s : {pm, cp, ch}) {
    EXPECT_NO_THROW(s.validate());
    for (int i = 0; i < s.action_dim; ++i) EXPECT_LT(s.action_low[i], s.action_high[i]);
  }
}

TEST(EnvSpec, NamesRoundTrip) {
  for (EnvId id : {EnvId::PointMass2D, EnvId::CartPoleBalance, EnvId::ChainMDP}) {
    EXPECT_EQ(parseEnvId(toString(id)), id);
  }
  EXPECT_THROW(parseEnvId("Hopper"), ContractError);
  EXPECT_THROW(parseOptimalityLevel("Great"), ContractError);
}

TEST(Step, PointMassAtGoalHasZeroReward) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  const auto r = step(spec, at({0, 0, 0, 0}), Action{0, 0});
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_EQ(r.next.t, 1);
  EXPECT_FALSE(r.done);
}

TEST(Step, ChainEntersTerminal) {
  const auto spec = EnvSpec::make(EnvId::ChainMDP);
  const auto r = step(spec, at({3}), Action{1});
  EXPECT_EQ(r.next.values[0], 4.0);
  EXPECT_EQ(r.reward, 1.0);
  EXPECT_TRUE(r.done);
  EXPECT_TRUE(isTerminalState(spec, r.next.values));
}

TEST(Step, ChainLowerWall) {
  const auto spec = EnvSpec::make(EnvId::ChainMDP);
  const auto r = step(spec, at({0}), Action{-1});
  EXPECT_EQ(r.next.values[0], 0.0);
  EXPECT_EQ(r.reward, 0.0);
  EXPECT_FALSE(r.done);
}

TEST(Step, CartPoleMatchesHandIntegratedEulerStep) {
  const auto spec = EnvSpec::make(EnvId::CartPoleBalance);
  const double theta = 0.1;
  // Standard cart-pole equations, written out independently.
  const double mc = 1.0, mp = 0.1, l = 0.5, g = 9.8, dt = 0.02;
  const double temp = 0.0;
  const double theta_acc =
      (g * std::sin(theta) - std::cos(theta) * temp) / (l * (4.0 / 3.0 - mp * std::pow(std::cos(theta), 2) / (mc + mp)));
  const auto r = step(spec, at({0, 0, theta, 0}), Action{0});
  EXPECT_GT(r.next.values[3], 0.0);
  EXPECT_NEAR(r.next.values[3], dt * theta_acc, 1e-12);
  EXPECT_NEAR(r.next.values[2], theta, 1e-15);
}

TEST(Step, DimensionMismatchThrows) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  EXPECT_THROW(step(spec, at({0, 0, 0}), Action{0, 0}), ContractError);
  EXPECT_THROW(step(spec, at({0, 0, 0, 0}), Action{0}), ContractError);
}

TEST(Step, IsPure) {
  const auto spec = EnvSpec::make(EnvId::CartPoleBalance);
  const auto s = at({0.1, -0.2, 0.03, 0.4}, 7);
  const auto a = step(spec, s, Action{0.3});
  const auto b = step(spec, s, Action{0.3});
  EXPECT_EQ(a.next, b.next);
  EXPECT_EQ(a.reward, b.reward);
}

TEST(Step, HorizonEndsEpisode) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  EXPECT_TRUE(step(spec, at({0.5, 0.5, 0, 0}, 49), Action{0, 0}).done);
  EXPECT_FALSE(step(spec, at({0.5, 0.5, 0, 0}, 48), Action{0, 0}).done);
}

TEST(GtReward, Examples) {
  EXPECT_NEAR(gtReward(EnvSpec::make(EnvId::PointMass2D), at({0.3, 0.4, 0, 0}), Action{0, 0}), -0.5, 1e-15);
  EXPECT_EQ(gtReward(EnvSpec::make(EnvId::CartPoleBalance), at({0, 0, 0, 0}), Action{0}), 0.0);
  EXPECT_EQ(gtReward(EnvSpec::make(EnvId::ChainMDP), at({0}), Action{-1}), 0.0);
  EXPECT_NEAR(gtReward(EnvSpec::make(EnvId::CartPoleBalance), at({0, 0, 0.2, 0}), Action{0.5}),
              -(0.04 + 0.01 * 0.25), 1e-15);
}

TEST(GtReward, Bounds) {
  Rng rng(3);
  const auto pm = EnvSpec::make(EnvId::PointMass2D);
  const auto cp = EnvSpec::make(EnvId::CartPoleBalance);
  for (int i = 0; i < 1000; ++i) {
    const auto s = at({rng.uniform(-1, 1), rng.uniform(-1, 1), 0, 0});
    const double r = gtReward(pm, s, Action{0, 0});
    EXPECT_LE(r, 0.0);
    EXPECT_GE(r, -2.0 * std::numbers::sqrt2);
    const double rc = gtReward(cp, at({0, 0, rng.uniform(-3, 3), 0}), Action{rng.uniform(-1, 1)});
    EXPECT_LE(rc, 0.0);
  }
}

TEST(Render, Deterministic) {
  for (EnvId id : {EnvId::PointMass2D, EnvId::CartPoleBalance, EnvId::ChainMDP}) {
    const auto spec = EnvSpec::make(id);
    Rng rng(11);
    const auto s = initialState(spec, rng);
    const Image a = render(spec, s.values);
    const Image b = render(spec, s.values);
    EXPECT_EQ(a.width, 64);
    EXPECT_EQ(a.height, 64);
    EXPECT_EQ(a.rgb, b.rgb);
  }
}

TEST(Render, PointMassAgentOverlapsGoal) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  const Image img = render(spec, std::vector<double>{0, 0, 0, 0});
  const auto [gx, gy] = pointMassPixel(0, 0);
  EXPECT_EQ(img.at(gx, gy), palette::kAgent);
  const Image apart = render(spec, std::vector<double>{0.8, 0.8, 0, 0});
  EXPECT_EQ(apart.at(gx, gy), palette::kGoal);
}

TEST(Render, CartPoleAngleChangesPixels) {
  const auto spec = EnvSpec::make(EnvId::CartPoleBalance);
  const Image a = render(spec, std::vector<double>{0, 0, 0.0, 0});
  const Image b = render(spec, std::vector<double>{0, 0, 0.3, 0});
  int diff = 0;
  for (std::size_t i = 0; i < a.rgb.size(); ++i) diff += a.rgb[i] != b.rgb[i];
  EXPECT_GE(diff, 1);
}

TEST(Render, PpmHeaderAndFileName) {
  Image img(2, 1, Rgb{1, 2, 3});
  const auto ppm = encodePpm(img);
  const std::string header(ppm.begin(), ppm.begin() + 11);
  EXPECT_EQ(header, "P6\n2 1\n255\n");
  EXPECT_EQ(ppm.size(), 11u + 6u);
  EXPECT_EQ(frameFileName(3, 12), "00003_0012.ppm");
}

TEST(ScriptedAction, PointMassExpert) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  Rng rng(0);
  const auto zero = scriptedAction(spec, OptimalityLevel::Expert, at({0, 0, 0, 0}), rng);
  EXPECT_EQ(zero, (Action{0, 0}));
  const auto push = scriptedAction(spec, OptimalityLevel::Expert, at({-1, -1, 0, 0}), rng);
  EXPECT_GT(push[0], 0.0);
  EXPECT_GT(push[1], 0.0);
}

TEST(ScriptedAction, RandomIsSeededAndInBox) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const auto x = scriptedAction(spec, OptimalityLevel::Random, at({0, 0, 0, 0}), a);
    const auto y = scriptedAction(spec, OptimalityLevel::Random, at({0, 0, 0, 0}), b);
    EXPECT_EQ(x, y);
    for (int k = 0; k < 2; ++k) {
      EXPECT_GE(x[k], -0.1);
      EXPECT_LE(x[k], 0.1);
    }
  }
}

TEST(ScriptedAction, ChainActionsAreDiscrete) {
  const auto spec = EnvSpec::make(EnvId::ChainMDP);
  Rng rng(5);
  for (auto level : {OptimalityLevel::Random, OptimalityLevel::Medium, OptimalityLevel::Expert}) {
    for (int i = 0; i < 50; ++i) {
      const double a = scriptedAction(spec, level, at({2}), rng)[0];
      EXPECT_TRUE(a == 1.0 || a == -1.0);
    }
  }
}

TEST(GenerateDataset, PointMassShape) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  const auto d = generateDataset(spec, OptimalityLevel::Random, 10, 1);
  EXPECT_EQ(d.trajectoryCount(), 10u);
  EXPECT_EQ(d.size(), 500u);
  EXPECT_EQ(d.reward_status, RewardStatus::Unlabeled);
  for (const auto& tr : d.transitions) EXPECT_FALSE(tr.r.has_value());
  const auto offsets = d.trajectoryOffsets();
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) EXPECT_EQ(offsets[k + 1] - offsets[k], 50u);
}

TEST(GenerateDataset, SameSeedSameData) {
  const auto spec = EnvSpec::make(EnvId::CartPoleBalance);
  EXPECT_EQ(generateDataset(spec, OptimalityLevel::Medium, 4, 9), generateDataset(spec, OptimalityLevel::Medium, 4, 9));
  EXPECT_NE(generateDataset(spec, OptimalityLevel::Medium, 4, 9), generateDataset(spec, OptimalityLevel::Medium, 4, 10));
}

TEST(GenerateDataset, ExpertPointMassReachesGoal) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  const auto d = generateDataset(spec, OptimalityLevel::Expert, 50, 123);
  const auto offsets = d.trajectoryOffsets();
  int reached = 0;
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const auto& last = d.transitions[offsets[k + 1] - 1].s_next;
    reached += std::hypot(last[0], last[1]) < spec.success_threshold;
  }
  EXPECT_GE(reached, 45);
}

TEST(GenerateDataset, ChainEndsEarlyAtTerminal) {
  const auto spec = EnvSpec::make(EnvId::ChainMDP);
  const auto d = generateDataset(spec, OptimalityLevel::Expert, 3, 0);
  EXPECT_EQ(d.size(), 12u);
  EXPECT_TRUE(d.transitions.back().done);
}

TEST(GenerateDataset, LevelsOrderedByReturn) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  auto meanReturn = [&](OptimalityLevel level) {
    const auto d = generateDataset(spec, level, 60, 2024);
    double total = 0;
    for (const auto& tr : d.transitions) total += stateReward(spec, toDouble(tr.s_next));
    return total / 60.0;
  };
  const double random = meanReturn(OptimalityLevel::Random);
  const double medium = meanReturn(OptimalityLevel::Medium);
  const double expert = meanReturn(OptimalityLevel::Expert);
  EXPECT_GT(expert, medium);
  EXPECT_GT(medium, random);
}

TEST(EvaluatePolicy, ExpertControllerSucceeds) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  const auto rep = evaluatePolicy(spec, scriptedPolicy(spec, OptimalityLevel::Expert, 0), 50, 7);
  ASSERT_TRUE(rep.success_rate.has_value());
  EXPECT_GE(*rep.success_rate, 0.9);
  EXPECT_EQ(rep.returns.size(), 50u);
}

TEST(EvaluatePolicy, RandomChainIsPartial) {
  const auto spec = EnvSpec::make(EnvId::ChainMDP);
  const auto rep = evaluatePolicy(spec, scriptedPolicy(spec, OptimalityLevel::Random, 3), 100, 1);
  ASSERT_TRUE(rep.success_rate.has_value());
  EXPECT_GT(*rep.success_rate, 0.0);
  EXPECT_LT(*rep.success_rate, 1.0);
}

TEST(EvaluatePolicy, RepeatIsIdentical) {
  const auto spec = EnvSpec::make(EnvId::CartPoleBalance);
  const auto policy = scriptedPolicy(spec, OptimalityLevel::Expert, 0);
  EXPECT_EQ(evaluatePolicy(spec, policy, 1, 77), evaluatePolicy(spec, policy, 1, 77));
  EXPECT_FALSE(evaluatePolicy(spec, policy, 1, 77).success_rate.has_value());
}

TEST(EvaluatePolicy, StatisticsMatchReturns) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  const auto rep = evaluatePolicy(spec, scriptedPolicy(spec, OptimalityLevel::Medium, 4), 10, 2);
  EXPECT_DOUBLE_EQ(rep.mean_return, stats::mean(rep.returns));
  EXPECT_DOUBLE_EQ(rep.std_return, stats::stddev(rep.returns));
}

TEST(EvaluatePolicy, RejectsZeroEpisodes) {
  const auto spec = EnvSpec::make(EnvId::PointMass2D);
  EXPECT_THROW(evaluatePolicy(spec, scriptedPolicy(spec, OptimalityLevel::Expert, 0), 0, 0), ContractError);
}
