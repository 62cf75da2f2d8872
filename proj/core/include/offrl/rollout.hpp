#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "offrl/dataset.hpp"
#include "offrl/envs.hpp"
#include "offrl/nn.hpp"

namespace offrl {

/// Rolls out the scripted behavior policy. Trajectory i uses its own
/// generator seeded with seed + i, so trajectories are independent of order.
OfflineDataset generateDataset(const EnvSpec& spec, OptimalityLevel level, int n_traj, std::uint64_t seed);

struct EvalReport {
  double mean_return = 0.0;
  double std_return = 0.0;
  /// Absent for environments without a goal (CartPoleBalance).
  std::optional<double> success_rate;
  std::vector<double> returns;
  bool operator==(const EvalReport&) const = default;
};

using PolicyFn = std::function<Action(std::span<const double> state)>;

/// Ground-truth return statistics of `policy` over n_episodes rollouts.
/// Episode i starts from a state drawn with seed + i.
EvalReport evaluatePolicy(const EnvSpec& spec, const PolicyFn& policy, int n_episodes, std::uint64_t seed);

/// Deterministic evaluation using the policy mean.
EvalReport evaluatePolicy(const EnvSpec& spec, const nn::GaussianPolicyParams& policy, int n_episodes,
                          std::uint64_t seed);

PolicyFn meanPolicy(const nn::GaussianPolicyParams& policy);
/// Scripted behavior policy as a PolicyFn (Random/Medium draw from `seed`).
PolicyFn scriptedPolicy(const EnvSpec& spec, OptimalityLevel level, std::uint64_t seed);

}  // namespace offrl
