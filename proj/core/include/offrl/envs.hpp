#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "offrl/rng.hpp"

namespace offrl {

enum class EnvId { PointMass2D, CartPoleBalance, ChainMDP };
enum class OptimalityLevel { Random, Medium, Expert };

std::string_view toString(EnvId id);
std::string_view toString(OptimalityLevel level);
EnvId parseEnvId(std::string_view name);
OptimalityLevel parseOptimalityLevel(std::string_view name);

using Action = std::vector<double>;

struct EnvSpec {
  EnvId id = EnvId::PointMass2D;
  int state_dim = 0;
  int action_dim = 0;
  std::vector<double> action_low;
  std::vector<double> action_high;
  int horizon = 1;
  /// Distance to goal that counts as success (PointMass2D only).
  double success_threshold = 0.0;

  static EnvSpec make(EnvId id);
  void validate() const;
  bool operator==(const EnvSpec&) const = default;
};

struct EnvState {
  std::vector<double> values;
  int t = 0;
  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState next;
  double reward = 0.0;
  bool done = false;
};

namespace pointmass {
inline constexpr double kGoalX = 0.0;
inline constexpr double kGoalY = 0.0;
inline constexpr double kMaxSpeed = 0.1;
inline constexpr double kGain = 0.5;
inline constexpr int kHorizon = 50;
inline constexpr double kSuccessThreshold = 0.05;
}  // namespace pointmass

namespace cartpole {
inline constexpr double kGravity = 9.8;
inline constexpr double kMassCart = 1.0;
inline constexpr double kMassPole = 0.1;
inline constexpr double kHalfLength = 0.5;
inline constexpr double kForceScale = 10.0;
inline constexpr double kDt = 0.02;
inline constexpr int kHorizon = 200;
inline constexpr double kStartAngle = 0.05;
/// PD gains on (theta, theta_dot, x, x_dot) for the scripted expert.
inline constexpr double kGains[4] = {10.0, 2.0, 0.5, 1.0};
/// Half-width of the track shown by the renderer.
inline constexpr double kTrackHalfWidth = 2.4;
}  // namespace cartpole

namespace chain {
inline constexpr int kNumStates = 5;
inline constexpr int kTerminal = 4;
inline constexpr int kHorizon = 20;
}  // namespace chain

/// Clips to the action box; ChainMDP actions are snapped to {-1, +1}.
Action clipAction(const EnvSpec& spec, std::span<const double> action);

StepResult step(const EnvSpec& spec, const EnvState& s, std::span<const double> action);

/// Ground-truth reward of taking `action` in `s`.
double gtReward(const EnvSpec& spec, const EnvState& s, std::span<const double> action);

/// Ground-truth reward attached to a resulting state (the relabelling and
/// preference-oracle form). For ChainMDP it equals gtReward of the transition
/// that produced the state.
double stateReward(const EnvSpec& spec, std::span<const double> state);

bool isTerminalState(const EnvSpec& spec, std::span<const double> state);

/// Goal-reached test for PointMass2D and ChainMDP; always false for CartPole.
bool isSuccess(const EnvSpec& spec, std::span<const double> state);
bool hasSuccessMetric(const EnvSpec& spec);

EnvState initialState(const EnvSpec& spec, Rng& rng);

Action scriptedAction(const EnvSpec& spec, OptimalityLevel level, const EnvState& s, Rng& rng);

}  // namespace offrl
