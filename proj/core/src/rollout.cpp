#include "offrl/rollout.hpp"

#include <memory>

#include "offrl/error.hpp"
#include "offrl/stats.hpp"

namespace offrl {

namespace {

std::vector<float> toFloat(const std::vector<double>& xs) { return {xs.begin(), xs.end()}; }

}  // namespace

OfflineDataset generateDataset(const EnvSpec& spec, OptimalityLevel level, int n_traj, std::uint64_t seed) {
  if (n_traj < 1) throw ContractError("generateDataset: n_traj must be >= 1");
  spec.validate();
  OfflineDataset d;
  d.spec = spec;
  d.reward_status = RewardStatus::Unlabeled;
  d.transitions.reserve(static_cast<std::size_t>(n_traj) * spec.horizon);
  for (int i = 0; i < n_traj; ++i) {
    Rng rng(seed + static_cast<std::uint64_t>(i));
    EnvState s = initialState(spec, rng);
    // States are stored as f32; stepping from the rounded state keeps
    // s_next[t] == s[t+1] exact.
    for (double& v : s.values) v = static_cast<float>(v);
    while (true) {
      const Action a = scriptedAction(spec, level, s, rng);
      StepResult res = step(spec, s, a);
      for (double& v : res.next.values) v = static_cast<float>(v);
      Transition tr;
      tr.traj_id = static_cast<std::uint32_t>(i);
      tr.t = static_cast<std::uint32_t>(s.t);
      tr.s = toFloat(s.values);
      tr.a = toFloat(clipAction(spec, a));
      tr.s_next = toFloat(res.next.values);
      tr.done = res.done;
      d.transitions.push_back(std::move(tr));
      if (res.done) break;
      s = std::move(res.next);
    }
  }
  return d;
}

EvalReport evaluatePolicy(const EnvSpec& spec, const PolicyFn& policy, int n_episodes, std::uint64_t seed) {
  if (n_episodes < 1) throw ContractError("evaluatePolicy: n_episodes must be >= 1");
  EvalReport rep;
  int successes = 0;
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng(seed + static_cast<std::uint64_t>(e));
    EnvState s = initialState(spec, rng);
    double ret = 0.0;
    while (true) {
      const Action a = policy(s.values);
      if (a.size() != static_cast<std::size_t>(spec.action_dim)) {
        throw ContractError("evaluatePolicy: policy action dimension does not match env");
      }
      StepResult res = step(spec, s, a);
      ret += res.reward;
      s = std::move(res.next);
      if (res.done) break;
    }
    if (isSuccess(spec, s.values)) ++successes;
    rep.returns.push_back(ret);
  }
  rep.mean_return = stats::mean(rep.returns);
  rep.std_return = stats::stddev(rep.returns);
  if (hasSuccessMetric(spec)) rep.success_rate = static_cast<double>(successes) / n_episodes;
  return rep;
}

PolicyFn meanPolicy(const nn::GaussianPolicyParams& policy) {
  return [&policy](std::span<const double> state) {
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(state.data(), static_cast<Eigen::Index>(state.size()));
    const Eigen::VectorXd m = nn::policyMean(policy, x);
    return Action(m.data(), m.data() + m.size());
  };
}

EvalReport evaluatePolicy(const EnvSpec& spec, const nn::GaussianPolicyParams& policy, int n_episodes,
                          std::uint64_t seed) {
  if (policy.actionDim() != spec.action_dim || policy.stateDim() != spec.state_dim) {
    throw ContractError("evaluatePolicy: policy dimensions do not match env");
  }
  return evaluatePolicy(spec, meanPolicy(policy), n_episodes, seed);
}

PolicyFn scriptedPolicy(const EnvSpec& spec, OptimalityLevel level, std::uint64_t seed) {
  auto rng = std::make_shared<Rng>(seed);
  return [spec, level, rng](std::span<const double> state) {
    EnvState s{{state.begin(), state.end()}, 0};
    return scriptedAction(spec, level, s, *rng);
  };
}

}  // namespace offrl
