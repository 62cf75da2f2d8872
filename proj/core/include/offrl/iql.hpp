#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "offrl/dataset.hpp"
#include "offrl/losses.hpp"
#include "offrl/nn.hpp"

namespace offrl {

struct IQLConfig {
  double gamma = 0.99;
  double tau = 0.7;
  double beta = 3.0;
  double adv_clip = 100.0;
  double polyak = 0.005;
  int steps = 50000;
  int batch_size = 256;
  double lr_value = 3e-4;
  double lr_q = 3e-4;
  double lr_policy = 3e-4;
  std::vector<int> hidden = {256, 256};
  std::uint64_t seed = 0;

  void validate() const;
};

struct IQLBundle {
  nn::MLPParams value;
  nn::MLPParams q1, q2;
  nn::MLPParams target_q1, target_q2;
  nn::GaussianPolicyParams policy;
  bool operator==(const IQLBundle&) const = default;
};

/// Fresh networks; the targets start as copies of the online heads.
IQLBundle makeIQLBundle(const EnvSpec& spec, const std::vector<int>& hidden, Rng& rng);

/// Column-major tensors of a labelled dataset (columns are transitions).
struct TransitionTensors {
  Eigen::MatrixXd s, a, s_next;
  Eigen::VectorXd r;
  /// 0 where the transition ends in an absorbing state, else 1. Timeouts keep 1.
  Eigen::VectorXd not_terminal;

  Eigen::Index size() const { return s.cols(); }
};

/// Throws ContractError when the dataset has no reward column.
TransitionTensors toTensors(const OfflineDataset& d);

/// Uniform minibatch with replacement.
TransitionTensors sampleBatch(const TransitionTensors& data, int batch_size, Rng& rng);

/// Rows of state stacked over rows of action.
Eigen::MatrixXd stateAction(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a);

/// Element-wise min over both heads of (q1, q2) on (s, a).
Eigen::VectorXd minQ(const nn::MLPParams& q1, const nn::MLPParams& q2, const Eigen::MatrixXd& s,
                     const Eigen::MatrixXd& a);

/// Expectile regression of V(s) onto min target-Q(s, a).
nn::LossAndGrad<nn::MLPParams> valueLoss(const IQLBundle& b, const TransitionTensors& batch, double tau);

struct QLossResult {
  double loss = 0.0;
  nn::MLPParams grad_q1, grad_q2;
};

/// Both heads regress to r + gamma * not_terminal * V(s'); mean over batch and heads.
QLossResult qLoss(const IQLBundle& b, const TransitionTensors& batch, double gamma);

/// min(exp(beta * (min-head Q(s, a) - V(s))), adv_clip), treated as constants.
Eigen::VectorXd awrWeights(const IQLBundle& b, const TransitionTensors& batch, double beta, double adv_clip);

nn::LossAndGrad<nn::GaussianPolicyParams> awrLoss(const IQLBundle& b, const TransitionTensors& batch, double beta,
                                                  double adv_clip);

struct IQLTrainStats {
  double value_loss = 0.0;
  double q_loss = 0.0;
  double policy_loss = 0.0;
  int steps = 0;
};

/// Per step: sample, update V, update Q, soft-update targets, update pi.
IQLBundle trainIQL(const OfflineDataset& d, const IQLConfig& cfg, IQLTrainStats* stats = nullptr);

struct BCConfig {
  int steps = 50000;
  int batch_size = 256;
  double lr = 3e-4;
  std::vector<int> hidden = {256, 256};
  std::uint64_t seed = 0;

  void validate() const;
  static BCConfig fromIQL(const IQLConfig& cfg);
};

/// Maximum likelihood on the dataset actions; rewards are not required.
nn::GaussianPolicyParams trainBC(const OfflineDataset& d, const BCConfig& cfg, double* final_loss = nullptr);

/// bundle.json plus one checkpoint directory per network.
void saveBundle(const std::filesystem::path& dir, const IQLBundle& b);
IQLBundle loadBundle(const std::filesystem::path& dir);
IQLBundle roundToF32(const IQLBundle& b);

}  // namespace offrl
