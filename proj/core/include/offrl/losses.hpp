#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "offrl/nn.hpp"

namespace offrl::nn {

/// The fixed menu of training objectives, each with a hand-derived gradient.
enum class LossKind { PreferenceCE, Expectile, SquaredTD, AwrNll, BcNll };

std::string_view toString(LossKind kind);

template <class P>
struct LossAndGrad {
  double loss = 0.0;
  P grad;
};

/// Asymmetric squared loss |tau - 1(u < 0)| * u^2.
double expectileLoss(double u, double tau);

/// Numerically stable log(1 + exp(x)).
double softplus(double x);

/// Pairs of segments for the Bradley-Terry objective. Pair i occupies columns
/// [i*horizon, (i+1)*horizon) of seg0 and seg1; label 0 means seg0 preferred,
/// 1 means seg1 preferred.
struct PreferenceBatch {
  Eigen::MatrixXd seg0;
  Eigen::MatrixXd seg1;
  int horizon = 1;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// Per-pair segment reward sums (sum0, sum1) under `reward`.
std::pair<Eigen::VectorXd, Eigen::VectorXd> segmentSums(const MLPParams& reward, const PreferenceBatch& batch);

/// Mean Bradley-Terry negative log-likelihood of the labelled side.
LossAndGrad<MLPParams> preferenceCrossEntropy(const MLPParams& reward, const PreferenceBatch& batch);

/// Mean expectile loss of (targets - value(states)).
LossAndGrad<MLPParams> expectileRegression(const MLPParams& value, const Eigen::MatrixXd& states,
                                           const Eigen::VectorXd& targets, double tau);

/// Mean squared error (targets - q(inputs))^2.
LossAndGrad<MLPParams> squaredTd(const MLPParams& q, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets);

/// -mean(w_i * log pi(a_i | s_i)). Weights are constants.
LossAndGrad<GaussianPolicyParams> weightedNll(const GaussianPolicyParams& policy, const Eigen::MatrixXd& states,
                                              const Eigen::MatrixXd& actions, const Eigen::VectorXd& weights);

/// weightedNll with unit weights.
LossAndGrad<GaussianPolicyParams> behaviorCloningNll(const GaussianPolicyParams& policy, const Eigen::MatrixXd& states,
                                                     const Eigen::MatrixXd& actions);

}  // namespace offrl::nn
