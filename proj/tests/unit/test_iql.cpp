#include <algorithm>
#include <cmath>
#include <functional>

#include <gtest/gtest.h>

#include "offrl/envs.hpp"
#include "offrl/error.hpp"
#include "offrl/iql.hpp"
#include "offrl/losses.hpp"
#include "offrl/rollout.hpp"
#include "offrl/stats.hpp"
#include "oracles.hpp"
#include "tmpdir.hpp"

using namespace offrl;

namespace {

const EnvSpec kPm = EnvSpec::make(EnvId::PointMass2D);
const EnvSpec kChain = EnvSpec::make(EnvId::ChainMDP);

/// Linear head with only a bias and one input weight.
nn::MLPParams affine(int in, int input_index, double w, double b) {
  auto p = nn::MLPParams::zeros({in, 1}, nn::Activation::Identity);
  if (input_index >= 0) p.layers[0].weight(0, input_index) = w;
  p.layers[0].bias(0) = b;
  return p;
}

IQLBundle affineBundle(const EnvSpec& spec) {
  Rng rng(1);
  IQLBundle b = makeIQLBundle(spec, {8}, rng);
  const int sa = spec.state_dim + spec.action_dim;
  b.value = affine(spec.state_dim, -1, 0.0, 0.0);
  b.q1 = b.q2 = b.target_q1 = b.target_q2 = affine(sa, -1, 0.0, 0.0);
  return b;
}

TransitionTensors tensors(const EnvSpec& spec, const std::vector<std::vector<double>>& s,
                          const std::vector<std::vector<double>>& a, const std::vector<double>& r,
                          const std::vector<std::vector<double>>& s_next, const std::vector<double>& not_terminal) {
  const auto n = static_cast<Eigen::Index>(s.size());
  TransitionTensors t;
  t.s.resize(spec.state_dim, n);
  t.a.resize(spec.action_dim, n);
  t.s_next.resize(spec.state_dim, n);
  t.r.resize(n);
  t.not_terminal.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int k = 0; k < spec.state_dim; ++k) {
      t.s(k, i) = s[i][k];
      t.s_next(k, i) = s_next[i][k];
    }
    for (int k = 0; k < spec.action_dim; ++k) t.a(k, i) = a[i][k];
    t.r(i) = r[i];
    t.not_terminal(i) = not_terminal[i];
  }
  return t;
}

/// Two samples at the origin with target-Q values {1, 3} (Q = 2 + 1 * a_x).
std::pair<IQLBundle, TransitionTensors> twoPointProblem() {
  IQLBundle b = affineBundle(kPm);
  b.target_q1 = b.target_q2 = affine(6, 4, 1.0, 2.0);
  b.q1 = b.q2 = b.target_q1;
  const std::vector<double> origin(4, 0.0);
  auto t = tensors(kPm, {origin, origin}, {{-1.0, 0.0}, {1.0, 0.0}}, {0.0, 0.0}, {origin, origin}, {1.0, 1.0});
  return {b, t};
}

double fitTwoPointValue(double tau) {
  auto [b, t] = twoPointProblem();
  for (int i = 0; i < 4000; ++i) {
    const auto lg = valueLoss(b, t, tau);
    b.value.layers[0].bias(0) -= 0.5 * lg.grad.layers[0].bias(0);
  }
  return nn::mlpForward(b.value, Eigen::VectorXd::Zero(4))(0);
}

OfflineDataset singleTransition(const EnvSpec& spec, std::vector<float> s, std::vector<float> a, float r) {
  OfflineDataset d;
  d.spec = spec;
  Transition tr;
  tr.s = s;
  tr.a = std::move(a);
  tr.r = r;
  tr.s_next = std::move(s);
  tr.done = true;
  d.transitions.push_back(tr);
  d.reward_status = RewardStatus::GroundTruth;
  return d;
}

IQLConfig smallConfig(int steps, std::uint64_t seed) {
  IQLConfig cfg;
  cfg.steps = steps;
  cfg.hidden = {64, 64};
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST(Expectile, LossExamplesAndSymmetry) {
  EXPECT_DOUBLE_EQ(nn::expectileLoss(2.0, 0.5), 2.0);
  EXPECT_DOUBLE_EQ(nn::expectileLoss(1.0, 0.7), 0.7);
  EXPECT_NEAR(nn::expectileLoss(-1.0, 0.7), 0.3, 1e-15);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double tau = rng.uniform(0.01, 0.99), u = rng.uniform(-5.0, 5.0);
    EXPECT_NEAR(nn::expectileLoss(u, tau), nn::expectileLoss(-u, 1.0 - tau), 1e-12);
    EXPECT_NEAR(nn::expectileLoss(u, 0.5), 0.5 * u * u, 1e-12);
  }
}

TEST(Expectile, MinimizerBoundedAndMonotoneInTau) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> q(7);
    for (auto& v : q) v = rng.uniform(-3.0, 3.0);
    const auto [lo, hi] = std::minmax_element(q.begin(), q.end());
    double prev = -INFINITY;
    for (double tau : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
      const double e = offrl::testing::expectileOf(q, tau);
      EXPECT_GE(e, *lo);
      EXPECT_LE(e, *hi);
      EXPECT_GE(e, prev - 1e-12);
      prev = e;
      // The minimizer makes the loss stationary.
      double g = 0.0;
      for (double v : q) g += (v - e < 0.0 ? 1.0 - tau : tau) * (v - e);
      EXPECT_NEAR(g, 0.0, 1e-8);
    }
  }
}

TEST(ValueLoss, TwoPointProblem) {
  EXPECT_NEAR(fitTwoPointValue(0.5), 2.0, 1e-3);
  EXPECT_NEAR(fitTwoPointValue(0.9), 2.8, 1e-3);
  EXPECT_NEAR(offrl::testing::expectileOf(std::vector<double>{1.0, 3.0}, 0.9), 2.8, 1e-9);
}

TEST(ValueLoss, UsesMinOfTargetHeads) {
  auto [b, t] = twoPointProblem();
  b.target_q2 = affine(6, 4, 1.0, 10.0);  // larger everywhere, never the min
  b.q1 = b.q2 = affine(6, -1, 0.0, -50.0);  // online heads are not the target
  const auto lg = valueLoss(b, t, 0.9);
  // V = 0: u = {1, 3}, both positive -> 0.9 * (1 + 9) / 2.
  EXPECT_NEAR(lg.loss, 4.5, 1e-12);
}

TEST(QLoss, TerminalTargetIsReward) {
  IQLBundle b = affineBundle(kPm);
  b.value = affine(4, -1, 0.0, 5.0);  // V = 5 everywhere
  const std::vector<double> s(4, 0.1);
  // Q = 0, so the loss is the mean squared target.
  const auto done = tensors(kPm, {s}, {{0.0, 0.0}}, {1.0}, {s}, {0.0});
  EXPECT_NEAR(qLoss(b, done, 0.99).loss, 1.0, 1e-12);
  const auto live = tensors(kPm, {s}, {{0.0, 0.0}}, {1.0}, {s}, {1.0});
  EXPECT_NEAR(qLoss(b, live, 0.99).loss, std::pow(1.0 + 0.99 * 5.0, 2), 1e-9);
  EXPECT_NEAR(qLoss(b, live, 0.0).loss, 1.0, 1e-12);
}

TEST(QLoss, MeanOverHeads) {
  IQLBundle b = affineBundle(kPm);
  b.q1 = affine(6, -1, 0.0, 1.0);
  b.q2 = affine(6, -1, 0.0, 3.0);
  const std::vector<double> s(4, 0.0);
  const auto t = tensors(kPm, {s}, {{0.0, 0.0}}, {0.0}, {s}, {0.0});
  const auto res = qLoss(b, t, 0.9);
  EXPECT_NEAR(res.loss, (1.0 + 9.0) / 2.0, 1e-12);
  EXPECT_NE(res.grad_q1.layers[0].bias(0), res.grad_q2.layers[0].bias(0));
}

TEST(QLoss, RegressionConvergesToTarget) {
  Rng rng(4);
  IQLBundle b = makeIQLBundle(kPm, {32, 32}, rng);
  b.value = affine(4, -1, 0.0, 2.0);
  const std::vector<double> s{0.3, -0.2, 0.0, 0.0}, s2{0.2, -0.1, 0.0, 0.0};
  const auto t = tensors(kPm, {s}, {{0.5, -0.5}}, {0.25}, {s2}, {1.0});
  const double target = 0.25 + 0.9 * 2.0;
  auto adam1 = nn::makeAdam(b.q1, {1e-3});
  auto adam2 = nn::makeAdam(b.q2, {1e-3});
  for (int i = 0; i < 3000; ++i) {
    const auto res = qLoss(b, t, 0.9);
    nn::adamStep(adam1, b.q1, res.grad_q1);
    nn::adamStep(adam2, b.q2, res.grad_q2);
  }
  Eigen::VectorXd x(6);
  x << 0.3, -0.2, 0.0, 0.0, 0.5, -0.5;
  EXPECT_NEAR(nn::mlpForward(b.q1, x)(0), target, 1e-3);
  EXPECT_NEAR(nn::mlpForward(b.q2, x)(0), target, 1e-3);
}

TEST(Awr, WeightsClosedForm) {
  IQLBundle b = affineBundle(kPm);
  b.value = affine(4, -1, 0.0, 1.0);
  b.q1 = affine(6, -1, 0.0, 1.5);
  b.q2 = affine(6, -1, 0.0, 2.5);  // min head gives advantage 0.5
  const std::vector<double> s(4, 0.0);
  const auto t = tensors(kPm, {s}, {{0.1, 0.1}}, {0.0}, {s}, {1.0});
  EXPECT_NEAR(awrWeights(b, t, 3.0, 100.0)(0), std::exp(1.5), 1e-12);
  EXPECT_NEAR(awrWeights(b, t, 3.0, 100.0)(0), 4.4817, 1e-4);
  EXPECT_DOUBLE_EQ(awrWeights(b, t, 3.0, 2.0)(0), 2.0);
  EXPECT_DOUBLE_EQ(awrWeights(b, t, 0.0, 100.0)(0), 1.0);
  b.q1 = b.q2 = affine(6, -1, 0.0, 1.0);  // zero advantage
  for (double beta : {0.5, 3.0, 10.0}) EXPECT_DOUBLE_EQ(awrWeights(b, t, beta, 100.0)(0), 1.0);
}

TEST(Awr, WeightsInClipRange) {
  Rng rng(5);
  const IQLBundle b = makeIQLBundle(kPm, {16}, rng);
  const auto d = relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Random, 5, 6));
  const auto batch = sampleBatch(toTensors(d), 256, rng);
  const auto w = awrWeights(b, batch, 10.0, 100.0);
  EXPECT_GT(w.minCoeff(), 0.0);
  EXPECT_LE(w.maxCoeff(), 100.0);
}

TEST(Awr, BetaZeroEqualsBehaviorCloning) {
  Rng rng(7);
  const IQLBundle b = makeIQLBundle(kPm, {16, 16}, rng);
  const auto d = relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Medium, 5, 8));
  const auto batch = sampleBatch(toTensors(d), 64, rng);
  const auto awr = awrLoss(b, batch, 0.0, 100.0);
  const auto bc = nn::behaviorCloningNll(b.policy, batch.s, batch.a);
  EXPECT_EQ(awr.loss, bc.loss);
  EXPECT_EQ(awr.grad, bc.grad);
}

TEST(Awr, NoGradientThroughCritics) {
  Rng rng(9);
  IQLBundle b = makeIQLBundle(kPm, {16}, rng);
  const auto d = relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Medium, 3, 10));
  const auto batch = sampleBatch(toTensors(d), 32, rng);
  const auto w = awrWeights(b, batch, 3.0, 100.0);
  const auto awr = awrLoss(b, batch, 3.0, 100.0);
  const auto ref = nn::weightedNll(b.policy, batch.s, batch.a, w);
  EXPECT_EQ(awr.loss, ref.loss);
  EXPECT_EQ(awr.grad, ref.grad);
}

TEST(Tensors, TerminalMaskKeepsTimeouts) {
  const auto chain = relabelGroundTruth(generateDataset(kChain, OptimalityLevel::Expert, 2, 1));
  const auto t = toTensors(chain);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const bool terminal = std::lround(t.s_next(0, i)) == 4;
    EXPECT_EQ(t.not_terminal(i), terminal ? 0.0 : 1.0);
  }
  const auto pm = toTensors(relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Random, 2, 1)));
  const auto& last = pm.not_terminal(pm.size() - 1);
  EXPECT_EQ(last, 1.0);  // horizon timeout bootstraps
}

TEST(TrainIQL, UnlabeledDatasetIsRejected) {
  const auto d = generateDataset(kPm, OptimalityLevel::Random, 2, 1);
  try {
    trainIQL(d, smallConfig(10, 1));
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("relabel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(toTensors(d), ContractError);
}

TEST(TrainIQL, ConfigValidation) {
  IQLConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.gamma, 0.99);
  EXPECT_EQ(cfg.tau, 0.7);
  EXPECT_EQ(cfg.beta, 3.0);
  EXPECT_EQ(cfg.polyak, 0.005);
  EXPECT_EQ(cfg.adv_clip, 100.0);
  EXPECT_EQ(cfg.batch_size, 256);
  EXPECT_EQ(cfg.steps, 50000);
  for (auto mutate : std::vector<std::function<void(IQLConfig&)>>{
           [](IQLConfig& c) { c.gamma = 1.5; }, [](IQLConfig& c) { c.tau = 1.0; }, [](IQLConfig& c) { c.tau = 0.0; },
           [](IQLConfig& c) { c.beta = -1.0; }, [](IQLConfig& c) { c.polyak = 0.0; },
           [](IQLConfig& c) { c.batch_size = 0; }}) {
    IQLConfig bad;
    mutate(bad);
    EXPECT_THROW(bad.validate(), ConfigError);
  }
}

TEST(TrainIQL, DeterministicUnderSeed) {
  const auto d = relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Medium, 5, 11));
  auto cfg = smallConfig(200, 12);
  cfg.hidden = {16, 16};
  IQLTrainStats sa, sb;
  const auto a = trainIQL(d, cfg, &sa);
  EXPECT_EQ(a, trainIQL(d, cfg, &sb));
  EXPECT_EQ(sa.steps, 200);
  EXPECT_EQ(sa.q_loss, sb.q_loss);
  cfg.seed = 13;
  EXPECT_NE(a, trainIQL(d, cfg));
}

TEST(TrainIQL, TargetsTrackOnlineHeads) {
  const auto d = relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Medium, 5, 11));
  auto cfg = smallConfig(50, 12);
  cfg.hidden = {16};
  cfg.polyak = 1.0;
  const auto b = trainIQL(d, cfg);
  EXPECT_EQ(b.target_q1, b.q1);
  EXPECT_EQ(b.target_q2, b.q2);
}

TEST(TrainIQL, ChainMatchesValueIteration) {
  const auto d = relabelGroundTruth(generateDataset(kChain, OptimalityLevel::Medium, 300, 41));
  int counts[4][2] = {};
  for (const auto& tr : d.transitions) counts[std::lround(tr.s[0])][tr.a[0] > 0.0f ? 1 : 0]++;
  for (int s = 0; s < 4; ++s) {
    for (int k = 0; k < 2; ++k) ASSERT_GE(counts[s][k], 20) << "coverage of (" << s << ", " << k << ")";
  }
  auto cfg = smallConfig(20000, 42);
  cfg.gamma = 0.9;
  cfg.tau = 0.9;
  const auto b = trainIQL(d, cfg);
  const auto qstar = offrl::testing::chainQStar(0.9, 1000);
  const auto policy = meanPolicy(b.policy);
  for (int s = 0; s < 4; ++s) {
    for (int k = 0; k < 2; ++k) {
      Eigen::MatrixXd st(1, 1), ac(1, 1);
      st(0, 0) = s;
      ac(0, 0) = k == 0 ? -1.0 : 1.0;
      EXPECT_NEAR(minQ(b.q1, b.q2, st, ac)(0), qstar[s][k], 0.05) << "Q(" << s << ", " << ac(0, 0) << ")";
    }
    const std::vector<double> state{static_cast<double>(s)};
    EXPECT_GT(policy(state)[0], 0.0) << "greedy action at " << s;
  }
}

TEST(TrainBC, SingleTransitionMeanConverges) {
  const auto d = singleTransition(kPm, {0.3f, -0.4f, 0.0f, 0.0f}, {0.05f, -0.07f}, 0.0f);
  BCConfig cfg;
  cfg.steps = 3000;
  cfg.batch_size = 8;
  cfg.lr = 1e-3;
  cfg.hidden = {16, 16};
  cfg.seed = 1;
  const auto pi = trainBC(d, cfg);
  Eigen::VectorXd s(4);
  s << 0.3, -0.4, 0.0, 0.0;
  const auto mean = nn::policyMean(pi, s);
  EXPECT_NEAR(mean(0), 0.05, 1e-3);
  EXPECT_NEAR(mean(1), -0.07, 1e-3);
}

TEST(TrainBC, DeterministicAndRewardFree) {
  const auto d = generateDataset(kPm, OptimalityLevel::Medium, 5, 11);
  BCConfig cfg;
  cfg.steps = 100;
  cfg.hidden = {16};
  cfg.seed = 3;
  double la = 0.0, lb = 0.0;
  EXPECT_EQ(trainBC(d, cfg, &la), trainBC(d, cfg, &lb));
  EXPECT_EQ(la, lb);
  OfflineDataset empty;
  empty.spec = kPm;
  EXPECT_THROW(trainBC(empty, cfg), ContractError);
  const auto from = BCConfig::fromIQL(smallConfig(77, 5));
  EXPECT_EQ(from.steps, 77);
  EXPECT_EQ(from.hidden, (std::vector<int>{64, 64}));
}

TEST(TrainBC, ExpertAndRandomPointMass) {
  BCConfig cfg;
  cfg.steps = 5000;
  cfg.hidden = {64, 64};
  cfg.seed = 5;
  const auto expert = generateDataset(kPm, OptimalityLevel::Expert, 50, 51);
  const auto random = generateDataset(kPm, OptimalityLevel::Random, 50, 52);
  EXPECT_GE(*evaluatePolicy(kPm, trainBC(expert, cfg), 50, 53).success_rate, 0.8);
  EXPECT_LE(*evaluatePolicy(kPm, trainBC(random, cfg), 50, 53).success_rate, 0.2);
}

TEST(TrainIQL, ExpertPointMassSucceeds) {
  const auto d = relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Expert, 50, 61));
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto b = trainIQL(d, smallConfig(5000, seed));
    EXPECT_GE(*evaluatePolicy(kPm, b.policy, 50, 100 + seed).success_rate, 0.8) << "seed " << seed;
  }
}

TEST(TrainIQL, ConstantRewardMatchesBehaviorCloning) {
  const auto raw = generateDataset(kPm, OptimalityLevel::Medium, 30, 71);
  const auto d = labelConstantAverage(raw, [](std::span<const double> s, std::span<const double> a) {
    return gtReward(kPm, EnvState{{s.begin(), s.end()}, 0}, a);
  });
  std::vector<double> iql_returns, bc_returns;
  for (std::uint64_t seed : {1, 2, 3}) {
    IQLConfig cfg = smallConfig(3000, seed);
    cfg.gamma = 0.9;
    const auto b = trainIQL(d, cfg);
    Rng rng(seed);
    const auto w = awrWeights(b, sampleBatch(toTensors(d), 256, rng), cfg.beta, cfg.adv_clip);
    EXPECT_LT(w.maxCoeff() / w.minCoeff(), 1.25) << "seed " << seed;
    iql_returns.push_back(evaluatePolicy(kPm, b.policy, 20, 200 + seed).mean_return);
    bc_returns.push_back(evaluatePolicy(kPm, trainBC(d, BCConfig::fromIQL(cfg)), 20, 200 + seed).mean_return);

    // Same streams with unit weights.
    cfg.beta = 1e-9;
    const double unit = evaluatePolicy(kPm, trainIQL(d, cfg).policy, 20, 200 + seed).mean_return;
    EXPECT_NEAR(iql_returns.back(), unit, 0.2) << "seed " << seed;
  }
  const auto welch = offrl::testing::welchTest(iql_returns, bc_returns);
  EXPECT_FALSE(welch.significant) << "t = " << welch.t << ", df = " << welch.df;
}

TEST(Bundle, SaveLoadRoundTrip) {
  Rng rng(8);
  const auto b = makeIQLBundle(kPm, {8, 8}, rng);
  EXPECT_EQ(b.target_q1, b.q1);
  EXPECT_EQ(b.target_q2, b.q2);
  EXPECT_NE(b.q1, b.q2);
  offrl::testing::TempDir dir;
  saveBundle(dir / "bundle", b);
  EXPECT_TRUE(std::filesystem::exists(dir / "bundle" / "bundle.json"));
  EXPECT_EQ(loadBundle(dir / "bundle"), roundToF32(b));
}

TEST(WelchOracle, KnownValues) {
  const std::vector<double> a{1.0, 2.0, 3.0}, b{4.0, 5.0, 6.0};
  const auto r = offrl::testing::welchTest(a, b);
  EXPECT_NEAR(r.t, -3.0 / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(r.df, 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.critical, 2.776);
  EXPECT_TRUE(r.significant);
  const std::vector<double> c{1.0, 3.0, 5.0};
  EXPECT_FALSE(offrl::testing::welchTest(a, c).significant);
}
