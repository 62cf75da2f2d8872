#include "offrl/losses.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "offrl/error.hpp"

namespace offrl::nn {

std::string_view toString(LossKind kind) {
  switch (kind) {
    case LossKind::PreferenceCE: return "preference-CE";
    case LossKind::Expectile: return "expectile";
    case LossKind::SquaredTD: return "squared-TD";
    case LossKind::AwrNll: return "AWR-NLL";
    case LossKind::BcNll: return "BC-NLL";
  }
  return "?";
}

double expectileLoss(double u, double tau) {
  const double w = u < 0.0 ? 1.0 - tau : tau;
  return w * u * u;
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void checkFinite(double value, std::size_t index, LossKind kind) {
  if (!std::isfinite(value)) {
    throw NonFiniteLossError(index, std::string(toString(kind)) + " loss is non-finite at batch index " +
                                        std::to_string(index));
  }
}

}  // namespace

std::pair<Eigen::VectorXd, Eigen::VectorXd> segmentSums(const MLPParams& reward, const PreferenceBatch& batch) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd r0 = mlpForwardBatch(reward, batch.seg0);
  const Eigen::MatrixXd r1 = mlpForwardBatch(reward, batch.seg1);
  Eigen::VectorXd s0 = Eigen::VectorXd::Zero(n), s1 = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int h = 0; h < batch.horizon; ++h) {
      s0[i] += r0(0, i * batch.horizon + h);
      s1[i] += r1(0, i * batch.horizon + h);
    }
  }
  return {s0, s1};
}

LossAndGrad<MLPParams> preferenceCrossEntropy(const MLPParams& reward, const PreferenceBatch& batch) {
  const std::size_t n = batch.size();
  if (n == 0) throw ContractError("preferenceCrossEntropy: empty batch");
  if (reward.outDim() != 1) throw ContractError("preferenceCrossEntropy: reward net must be scalar");
  const auto cols = static_cast<Eigen::Index>(n * batch.horizon);
  if (batch.seg0.cols() != cols || batch.seg1.cols() != cols) {
    throw ContractError("preferenceCrossEntropy: segment matrices do not match labels x horizon");
  }

  MLPTape tape0, tape1;
  const Eigen::MatrixXd& r0 = mlpForward(reward, batch.seg0, tape0);
  const Eigen::MatrixXd& r1 = mlpForward(reward, batch.seg1, tape1);

  Eigen::MatrixXd d0(1, cols), d1(1, cols);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s0 = 0.0, s1 = 0.0;
    for (int h = 0; h < batch.horizon; ++h) {
      s0 += r0(0, static_cast<Eigen::Index>(i * batch.horizon + h));
      s1 += r1(0, static_cast<Eigen::Index>(i * batch.horizon + h));
    }
    const double z = s1 - s0;
    double li, dz;
    if (batch.labels[i] == 1) {
      li = softplus(-z);
      dz = sigmoid(z) - 1.0;
    } else if (batch.labels[i] == 0) {
      li = softplus(z);
      dz = sigmoid(z);
    } else {
      throw ContractError("preferenceCrossEntropy: labels must be 0 or 1");
    }
    checkFinite(li, i, LossKind::PreferenceCE);
    total += li;
    for (int h = 0; h < batch.horizon; ++h) {
      const auto c = static_cast<Eigen::Index>(i * batch.horizon + h);
      d1(0, c) = dz * inv_n;
      d0(0, c) = -dz * inv_n;
    }
  }

  LossAndGrad<MLPParams> out;
  out.loss = total * inv_n;
  out.grad = mlpBackward(reward, tape0, d0);
  const MLPParams g1 = mlpBackward(reward, tape1, d1);
  for (std::size_t k = 0; k < out.grad.layers.size(); ++k) {
    out.grad.layers[k].weight += g1.layers[k].weight;
    out.grad.layers[k].bias += g1.layers[k].bias;
  }
  return out;
}

LossAndGrad<MLPParams> expectileRegression(const MLPParams& value, const Eigen::MatrixXd& states,
                                           const Eigen::VectorXd& targets, double tau) {
  const auto n = states.cols();
  if (n == 0 || targets.size() != n) throw ContractError("expectileRegression: batch/target size mismatch");
  MLPTape tape;
  const Eigen::MatrixXd& v = mlpForward(value, states, tape);
  Eigen::MatrixXd d(1, n);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = targets[i] - v(0, i);
    const double li = expectileLoss(u, tau);
    checkFinite(li, static_cast<std::size_t>(i), LossKind::Expectile);
    total += li;
    const double w = u < 0.0 ? 1.0 - tau : tau;
    d(0, i) = -2.0 * w * u * inv_n;
  }
  return {total * inv_n, mlpBackward(value, tape, d)};
}

LossAndGrad<MLPParams> squaredTd(const MLPParams& q, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) {
  const auto n = inputs.cols();
  if (n == 0 || targets.size() != n) throw ContractError("squaredTd: batch/target size mismatch");
  MLPTape tape;
  const Eigen::MatrixXd& pred = mlpForward(q, inputs, tape);
  Eigen::MatrixXd d(1, n);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = targets[i] - pred(0, i);
    checkFinite(u * u, static_cast<std::size_t>(i), LossKind::SquaredTD);
    total += u * u;
    d(0, i) = -2.0 * u * inv_n;
  }
  return {total * inv_n, mlpBackward(q, tape, d)};
}

LossAndGrad<GaussianPolicyParams> weightedNll(const GaussianPolicyParams& policy, const Eigen::MatrixXd& states,
                                              const Eigen::MatrixXd& actions, const Eigen::VectorXd& weights) {
  const auto n = states.cols();
  const auto ad = policy.actionDim();
  if (n == 0 || actions.cols() != n || weights.size() != n || actions.rows() != ad) {
    throw ContractError("weightedNll: batch shape mismatch");
  }
  MLPTape tape;
  const Eigen::MatrixXd& raw = mlpForward(policy.mean_net, states, tape);
  const Eigen::MatrixXd mean = squashMean(policy, raw);
  const Eigen::VectorXd inv_std = (-policy.log_std.array()).exp();
  const Eigen::VectorXd half = 0.5 * (policy.action_high - policy.action_low);
  const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi);
  const double inv_n = 1.0 / static_cast<double>(n);

  Eigen::MatrixXd d_raw(ad, n);
  Eigen::VectorXd d_log_std = Eigen::VectorXd::Zero(ad);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double lp = 0.0;
    for (Eigen::Index j = 0; j < ad; ++j) {
      const double z = (actions(j, i) - mean(j, i)) * inv_std[j];
      lp += -0.5 * z * z - policy.log_std[j] - log_norm;
      const double d_mean = -weights[i] * inv_n * z * inv_std[j];
      if (policy.squash_mean) {
        const double t = std::tanh(raw(j, i));
        d_raw(j, i) = d_mean * half[j] * (1.0 - t * t);
      } else {
        d_raw(j, i) = d_mean;
      }
      d_log_std[j] += -weights[i] * inv_n * (z * z - 1.0);
    }
    const double li = -weights[i] * lp;
    checkFinite(li, static_cast<std::size_t>(i), LossKind::AwrNll);
    total += li;
  }

  LossAndGrad<GaussianPolicyParams> out;
  out.loss = total * inv_n;
  out.grad = policy;
  out.grad.mean_net = mlpBackward(policy.mean_net, tape, d_raw);
  out.grad.log_std = d_log_std;
  return out;
}

LossAndGrad<GaussianPolicyParams> behaviorCloningNll(const GaussianPolicyParams& policy, const Eigen::MatrixXd& states,
                                                     const Eigen::MatrixXd& actions) {
  return weightedNll(policy, states, actions, Eigen::VectorXd::Ones(states.cols()));
}

}  // namespace offrl::nn
