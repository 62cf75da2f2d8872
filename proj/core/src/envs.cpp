#include "offrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "offrl/error.hpp"

namespace offrl {

std::string_view toString(EnvId id) {
  switch (id) {
    case EnvId::PointMass2D: return "PointMass2D";
    case EnvId::CartPoleBalance: return "CartPoleBalance";
    case EnvId::ChainMDP: return "ChainMDP";
  }
  return "?";
}

std::string_view toString(OptimalityLevel level) {
  switch (level) {
    case OptimalityLevel::Random: return "Random";
    case OptimalityLevel::Medium: return "Medium";
    case OptimalityLevel::Expert: return "Expert";
  }
  return "?";
}

EnvId parseEnvId(std::string_view name) {
  for (EnvId id : {EnvId::PointMass2D, EnvId::CartPoleBalance, EnvId::ChainMDP}) {
    if (toString(id) == name) return id;
  }
  throw ContractError("unknown env id '" + std::string(name) + "'");
}

OptimalityLevel parseOptimalityLevel(std::string_view name) {
  for (auto l : {OptimalityLevel::Random, OptimalityLevel::Medium, OptimalityLevel::Expert}) {
    if (toString(l) == name) return l;
  }
  throw ContractError("unknown optimality level '" + std::string(name) + "'");
}

EnvSpec EnvSpec::make(EnvId id) {
  EnvSpec s;
  s.id = id;
  switch (id) {
    case EnvId::PointMass2D:
      s.state_dim = 4;
      s.action_dim = 2;
      s.action_low = {-pointmass::kMaxSpeed, -pointmass::kMaxSpeed};
      s.action_high = {pointmass::kMaxSpeed, pointmass::kMaxSpeed};
      s.horizon = pointmass::kHorizon;
      s.success_threshold = pointmass::kSuccessThreshold;
      break;
    case EnvId::CartPoleBalance:
      s.state_dim = 4;
      s.action_dim = 1;
      s.action_low = {-1.0};
      s.action_high = {1.0};
      s.horizon = cartpole::kHorizon;
      break;
    case EnvId::ChainMDP:
      s.state_dim = 1;
      s.action_dim = 1;
      s.action_low = {-1.0};
      s.action_high = {1.0};
      s.horizon = chain::kHorizon;
      break;
  }
  return s;
}

void EnvSpec::validate() const {
  const EnvSpec ref = make(id);
  if (state_dim != ref.state_dim || action_dim != ref.action_dim) {
    throw InvariantError("EnvSpec dimensions do not match " + std::string(toString(id)));
  }
  if (horizon < 1) throw InvariantError("EnvSpec horizon must be >= 1");
  if (action_low.size() != static_cast<std::size_t>(action_dim) ||
      action_high.size() != static_cast<std::size_t>(action_dim)) {
    throw InvariantError("EnvSpec action bounds have wrong length");
  }
  for (int i = 0; i < action_dim; ++i) {
    if (!(action_low[i] < action_high[i])) throw InvariantError("EnvSpec action_low must be < action_high");
  }
}

namespace {

void checkState(const EnvSpec& spec, std::span<const double> s) {
  if (s.size() != static_cast<std::size_t>(spec.state_dim)) {
    throw ContractError("state has dimension " + std::to_string(s.size()) + ", expected " +
                        std::to_string(spec.state_dim));
  }
}

void checkAction(const EnvSpec& spec, std::span<const double> a) {
  if (a.size() != static_cast<std::size_t>(spec.action_dim)) {
    throw ContractError("action has dimension " + std::to_string(a.size()) + ", expected " +
                        std::to_string(spec.action_dim));
  }
}

double wrapAngle(double theta) {
  // (-pi, pi]
  double w = std::remainder(theta, 2.0 * std::numbers::pi);
  if (w <= -std::numbers::pi) w += 2.0 * std::numbers::pi;
  return w;
}

int chainIndex(double v) { return static_cast<int>(std::lround(v)); }

int chainNext(int s, double a) { return std::clamp(s + (a >= 0.0 ? 1 : -1), 0, chain::kNumStates - 1); }

}  // namespace

Action clipAction(const EnvSpec& spec, std::span<const double> action) {
  checkAction(spec, action);
  Action out(action.begin(), action.end());
  if (spec.id == EnvId::ChainMDP) {
    out[0] = out[0] >= 0.0 ? 1.0 : -1.0;
    return out;
  }
  for (int i = 0; i < spec.action_dim; ++i) out[i] = std::clamp(out[i], spec.action_low[i], spec.action_high[i]);
  return out;
}

double gtReward(const EnvSpec& spec, const EnvState& s, std::span<const double> action) {
  checkState(spec, s.values);
  checkAction(spec, action);
  switch (spec.id) {
    case EnvId::PointMass2D:
      return stateReward(spec, s.values);
    case EnvId::CartPoleBalance: {
      const double a = action[0];
      return -(s.values[2] * s.values[2] + 0.01 * a * a);
    }
    case EnvId::ChainMDP: {
      const int cur = chainIndex(s.values[0]);
      return cur != chain::kTerminal && chainNext(cur, action[0]) == chain::kTerminal ? 1.0 : 0.0;
    }
  }
  return 0.0;
}

double stateReward(const EnvSpec& spec, std::span<const double> state) {
  checkState(spec, state);
  switch (spec.id) {
    case EnvId::PointMass2D:
      return -std::hypot(state[0] - state[2], state[1] - state[3]);
    case EnvId::CartPoleBalance:
      return -(state[2] * state[2]);
    case EnvId::ChainMDP:
      return chainIndex(state[0]) == chain::kTerminal ? 1.0 : 0.0;
  }
  return 0.0;
}

bool isTerminalState(const EnvSpec& spec, std::span<const double> state) {
  checkState(spec, state);
  return spec.id == EnvId::ChainMDP && chainIndex(state[0]) == chain::kTerminal;
}

bool hasSuccessMetric(const EnvSpec& spec) { return spec.id != EnvId::CartPoleBalance; }

bool isSuccess(const EnvSpec& spec, std::span<const double> state) {
  checkState(spec, state);
  switch (spec.id) {
    case EnvId::PointMass2D:
      return std::hypot(state[0] - state[2], state[1] - state[3]) < spec.success_threshold;
    case EnvId::ChainMDP:
      return isTerminalState(spec, state);
    case EnvId::CartPoleBalance:
      return false;
  }
  return false;
}

StepResult step(const EnvSpec& spec, const EnvState& s, std::span<const double> action) {
  checkState(spec, s.values);
  const Action a = clipAction(spec, action);
  StepResult out;
  out.reward = gtReward(spec, s, a);
  out.next.t = s.t + 1;
  out.next.values = s.values;
  auto& v = out.next.values;
  bool terminal = false;
  switch (spec.id) {
    case EnvId::PointMass2D:
      v[0] = std::clamp(v[0] + a[0], -1.0, 1.0);
      v[1] = std::clamp(v[1] + a[1], -1.0, 1.0);
      break;
    case EnvId::CartPoleBalance: {
      using namespace cartpole;
      const double x = v[0], x_dot = v[1], theta = v[2], theta_dot = v[3];
      const double force = kForceScale * a[0];
      const double total_mass = kMassCart + kMassPole;
      const double pole_mass_length = kMassPole * kHalfLength;
      const double cos_t = std::cos(theta), sin_t = std::sin(theta);
      const double temp = (force + pole_mass_length * theta_dot * theta_dot * sin_t) / total_mass;
      const double theta_acc = (kGravity * sin_t - cos_t * temp) /
                               (kHalfLength * (4.0 / 3.0 - kMassPole * cos_t * cos_t / total_mass));
      const double x_acc = temp - pole_mass_length * theta_acc * cos_t / total_mass;
      v[0] = x + kDt * x_dot;
      v[1] = x_dot + kDt * x_acc;
      v[2] = wrapAngle(theta + kDt * theta_dot);
      v[3] = theta_dot + kDt * theta_acc;
      break;
    }
    case EnvId::ChainMDP: {
      const int next = chainNext(chainIndex(v[0]), a[0]);
      v[0] = static_cast<double>(next);
      terminal = next == chain::kTerminal;
      break;
    }
  }
  out.done = terminal || out.next.t >= spec.horizon;
  return out;
}

EnvState initialState(const EnvSpec& spec, Rng& rng) {
  EnvState s;
  switch (spec.id) {
    case EnvId::PointMass2D: {
      const double x = rng.uniform(-1.0, 1.0);
      const double y = rng.uniform(-1.0, 1.0);
      s.values = {x, y, pointmass::kGoalX, pointmass::kGoalY};
      break;
    }
    case EnvId::CartPoleBalance:
      s.values = {0.0, 0.0, rng.uniform(-cartpole::kStartAngle, cartpole::kStartAngle), 0.0};
      break;
    case EnvId::ChainMDP:
      s.values = {0.0};
      break;
  }
  return s;
}

namespace {

Action expertAction(const EnvSpec& spec, const EnvState& s) {
  const auto& v = s.values;
  switch (spec.id) {
    case EnvId::PointMass2D:
      return clipAction(spec, Action{pointmass::kGain * (v[2] - v[0]), pointmass::kGain * (v[3] - v[1])});
    case EnvId::CartPoleBalance: {
      const auto& k = cartpole::kGains;
      return clipAction(spec, Action{k[0] * v[2] + k[1] * v[3] + k[2] * v[0] + k[3] * v[1]});
    }
    case EnvId::ChainMDP:
      return {1.0};
  }
  return {};
}

Action randomAction(const EnvSpec& spec, Rng& rng) {
  Action a(spec.action_dim);
  if (spec.id == EnvId::ChainMDP) {
    a[0] = rng.bernoulli(0.5) ? 1.0 : -1.0;
    return a;
  }
  for (int i = 0; i < spec.action_dim; ++i) a[i] = rng.uniform(spec.action_low[i], spec.action_high[i]);
  return a;
}

}  // namespace

Action scriptedAction(const EnvSpec& spec, OptimalityLevel level, const EnvState& s, Rng& rng) {
  checkState(spec, s.values);
  switch (level) {
    case OptimalityLevel::Random:
      return randomAction(spec, rng);
    case OptimalityLevel::Expert:
      return expertAction(spec, s);
    case OptimalityLevel::Medium: {
      if (rng.bernoulli(0.5)) {
        Action a = expertAction(spec, s);
        for (int i = 0; i < spec.action_dim; ++i) {
          const double sigma = 0.5 * (spec.action_high[i] - spec.action_low[i]);
          a[i] += rng.normal(0.0, sigma);
        }
        return clipAction(spec, a);
      }
      return randomAction(spec, rng);
    }
  }
  return {};
}

}  // namespace offrl
