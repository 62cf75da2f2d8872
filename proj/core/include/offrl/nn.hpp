#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "offrl/rng.hpp"

namespace offrl::nn {

/// Output-layer activation; hidden layers are always ReLU.
enum class Activation { Identity, Tanh };

struct Layer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  bool operator==(const Layer& o) const { return weight == o.weight && bias == o.bias; }
};

struct MLPParams {
  std::vector<Layer> layers;
  Activation output = Activation::Identity;

  int inDim() const;
  int outDim() const;
  /// [in, hidden..., out]
  std::vector<int> sizes() const;
  std::size_t parameterCount() const;
  bool finite() const;
  bool operator==(const MLPParams&) const = default;

  static MLPParams zeros(const std::vector<int>& sizes, Activation output);
};

/// Uniform fan-in initialization W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
MLPParams makeMlp(const std::vector<int>& sizes, Activation output, Rng& rng);

Eigen::VectorXd mlpForward(const MLPParams& p, const Eigen::VectorXd& x);
/// Batched forward; columns are samples.
Eigen::MatrixXd mlpForwardBatch(const MLPParams& p, const Eigen::MatrixXd& x);

/// Activations recorded during a forward pass for the backward pass.
struct MLPTape {
  std::vector<Eigen::MatrixXd> inputs;  // input of every layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of every layer
  Eigen::MatrixXd output;
};

const Eigen::MatrixXd& mlpForward(const MLPParams& p, const Eigen::MatrixXd& x, MLPTape& tape);

/// Reverse pass. `d_output` is dLoss/dOutput (out_dim x batch). The result has
/// the same shape as the parameters.
MLPParams mlpBackward(const MLPParams& p, const MLPTape& tape, const Eigen::MatrixXd& d_output);

// --- parameter blocks --------------------------------------------------------

using Blocks = std::vector<std::span<double>>;
using ConstBlocks = std::vector<std::span<const double>>;

Blocks blocks(MLPParams& p);
ConstBlocks blocks(const MLPParams& p);

/// target <- (1 - polyak) * target + polyak * online, element-wise.
void softUpdate(MLPParams& target, const MLPParams& online, double polyak);

// --- Gaussian policy ---------------------------------------------------------

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Diagonal Gaussian over actions. The mean head is squashed into the action
/// box with tanh; the density lives in action space, so the squash adds no
/// Jacobian term.
struct GaussianPolicyParams {
  MLPParams mean_net;
  Eigen::VectorXd log_std;
  Eigen::VectorXd action_low;
  Eigen::VectorXd action_high;
  bool squash_mean = true;

  int stateDim() const { return mean_net.inDim(); }
  int actionDim() const { return mean_net.outDim(); }
  bool operator==(const GaussianPolicyParams&) const = default;
};

GaussianPolicyParams makeGaussianPolicy(int state_dim, int action_dim, const std::vector<int>& hidden,
                                        std::span<const double> action_low, std::span<const double> action_high,
                                        Rng& rng);

Blocks blocks(GaussianPolicyParams& p);
ConstBlocks blocks(const GaussianPolicyParams& p);

void clampLogStd(GaussianPolicyParams& p);

/// Mean action for a batch of raw head outputs (action_dim x batch).
Eigen::MatrixXd squashMean(const GaussianPolicyParams& p, const Eigen::MatrixXd& raw);
Eigen::VectorXd policyMean(const GaussianPolicyParams& p, const Eigen::VectorXd& state);

double gaussianLogProb(const GaussianPolicyParams& p, const Eigen::VectorXd& state, const Eigen::VectorXd& action);

/// mean + sigma * z, clipped into the action box. `pre_squash` receives the
/// value before clipping.
Eigen::VectorXd gaussianSample(const GaussianPolicyParams& p, const Eigen::VectorXd& state, Rng& rng,
                               Eigen::VectorXd* pre_squash = nullptr);

// --- Adam --------------------------------------------------------------------

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(std::size_t n_params, AdamConfig cfg);

  void step(const Blocks& params, const ConstBlocks& grads);
  long steps() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  long step_ = 0;
};

template <class P>
AdamState makeAdam(const P& params, AdamConfig cfg = {}) {
  std::size_t n = 0;
  for (const auto& b : blocks(params)) n += b.size();
  return AdamState(n, cfg);
}

template <class P>
void adamStep(AdamState& state, P& params, const P& grads) {
  state.step(blocks(params), blocks(grads));
}

}  // namespace offrl::nn
