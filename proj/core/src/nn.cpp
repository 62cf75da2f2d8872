#include "offrl/nn.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "offrl/error.hpp"

namespace offrl::nn {

int MLPParams::inDim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols()); }

int MLPParams::outDim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows()); }

std::vector<int> MLPParams::sizes() const {
  std::vector<int> s;
  if (layers.empty()) return s;
  s.push_back(inDim());
  for (const auto& l : layers) s.push_back(static_cast<int>(l.weight.rows()));
  return s;
}

std::size_t MLPParams::parameterCount() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

bool MLPParams::finite() const {
  for (const auto& l : layers) {
    if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

MLPParams MLPParams::zeros(const std::vector<int>& sizes, Activation output) {
  if (sizes.size() < 2) throw ContractError("MLP needs at least input and output sizes");
  MLPParams p;
  p.output = output;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    if (sizes[i] <= 0 || sizes[i + 1] <= 0) throw ContractError("MLP layer sizes must be positive");
    p.layers.push_back({Eigen::MatrixXd::Zero(sizes[i + 1], sizes[i]), Eigen::VectorXd::Zero(sizes[i + 1])});
  }
  return p;
}

MLPParams makeMlp(const std::vector<int>& sizes, Activation output, Rng& rng) {
  MLPParams p = MLPParams::zeros(sizes, output);
  for (auto& l : p.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = rng.uniform(-bound, bound);
    }
  }
  return p;
}

namespace {

void checkInput(const MLPParams& p, Eigen::Index rows) {
  if (p.layers.empty()) throw ContractError("MLP has no layers");
  if (rows != p.inDim()) {
    throw ContractError("MLP input has dimension " + std::to_string(rows) + ", expected " + std::to_string(p.inDim()));
  }
}

}  // namespace

Eigen::MatrixXd mlpForwardBatch(const MLPParams& p, const Eigen::MatrixXd& x) {
  checkInput(p, x.rows());
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const Layer& l = p.layers[i];
    Eigen::MatrixXd z = l.weight * h;
    z.colwise() += l.bias;
    if (i + 1 < p.layers.size()) {
      h = z.cwiseMax(0.0);
    } else {
      h = p.output == Activation::Tanh ? Eigen::MatrixXd(z.array().tanh()) : z;
    }
  }
  return h;
}

Eigen::VectorXd mlpForward(const MLPParams& p, const Eigen::VectorXd& x) { return mlpForwardBatch(p, x); }

const Eigen::MatrixXd& mlpForward(const MLPParams& p, const Eigen::MatrixXd& x, MLPTape& tape) {
  checkInput(p, x.rows());
  const std::size_t n = p.layers.size();
  tape.inputs.resize(n);
  tape.pre.resize(n);
  tape.inputs[0] = x;
  for (std::size_t i = 0; i < n; ++i) {
    const Layer& l = p.layers[i];
    tape.pre[i].noalias() = l.weight * tape.inputs[i];
    tape.pre[i].colwise() += l.bias;
    if (i + 1 < n) {
      tape.inputs[i + 1] = tape.pre[i].cwiseMax(0.0);
    } else if (p.output == Activation::Tanh) {
      tape.output = tape.pre[i].array().tanh();
    } else {
      tape.output = tape.pre[i];
    }
  }
  return tape.output;
}

MLPParams mlpBackward(const MLPParams& p, const MLPTape& tape, const Eigen::MatrixXd& d_output) {
  const std::size_t n = p.layers.size();
  MLPParams g;
  g.output = p.output;
  g.layers.resize(n);
  Eigen::MatrixXd delta;
  if (p.output == Activation::Tanh) {
    delta = d_output.array() * (1.0 - tape.output.array().square());
  } else {
    delta = d_output;
  }
  for (std::size_t k = n; k-- > 0;) {
    g.layers[k].weight.noalias() = delta * tape.inputs[k].transpose();
    g.layers[k].bias = delta.rowwise().sum();
    if (k == 0) break;
    Eigen::MatrixXd up = p.layers[k].weight.transpose() * delta;
    delta = up.array() * (tape.pre[k - 1].array() > 0.0).cast<double>();
  }
  return g;
}

Blocks blocks(MLPParams& p) {
  Blocks b;
  for (auto& l : p.layers) {
    b.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    b.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return b;
}

ConstBlocks blocks(const MLPParams& p) {
  ConstBlocks b;
  for (const auto& l : p.layers) {
    b.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    b.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  return b;
}

void softUpdate(MLPParams& target, const MLPParams& online, double polyak) {
  if (target.sizes() != online.sizes()) throw ContractError("softUpdate: parameter shapes differ");
  if (polyak == 1.0) {
    target = online;
    return;
  }
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    target.layers[i].weight = (1.0 - polyak) * target.layers[i].weight + polyak * online.layers[i].weight;
    target.layers[i].bias = (1.0 - polyak) * target.layers[i].bias + polyak * online.layers[i].bias;
  }
}

GaussianPolicyParams makeGaussianPolicy(int state_dim, int action_dim, const std::vector<int>& hidden,
                                        std::span<const double> action_low, std::span<const double> action_high,
                                        Rng& rng) {
  if (action_low.size() != static_cast<std::size_t>(action_dim) ||
      action_high.size() != static_cast<std::size_t>(action_dim)) {
    throw ContractError("makeGaussianPolicy: action bounds do not match action_dim");
  }
  std::vector<int> sizes{state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(action_dim);
  GaussianPolicyParams p;
  p.mean_net = makeMlp(sizes, Activation::Identity, rng);
  p.log_std = Eigen::VectorXd::Zero(action_dim);
  p.action_low = Eigen::Map<const Eigen::VectorXd>(action_low.data(), action_dim);
  p.action_high = Eigen::Map<const Eigen::VectorXd>(action_high.data(), action_dim);
  return p;
}

Blocks blocks(GaussianPolicyParams& p) {
  Blocks b = blocks(p.mean_net);
  b.emplace_back(p.log_std.data(), static_cast<std::size_t>(p.log_std.size()));
  return b;
}

ConstBlocks blocks(const GaussianPolicyParams& p) {
  ConstBlocks b = blocks(p.mean_net);
  b.emplace_back(p.log_std.data(), static_cast<std::size_t>(p.log_std.size()));
  return b;
}

void clampLogStd(GaussianPolicyParams& p) { p.log_std = p.log_std.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax); }

Eigen::MatrixXd squashMean(const GaussianPolicyParams& p, const Eigen::MatrixXd& raw) {
  if (!p.squash_mean) return raw;
  const Eigen::VectorXd center = 0.5 * (p.action_high + p.action_low);
  const Eigen::VectorXd half = 0.5 * (p.action_high - p.action_low);
  Eigen::MatrixXd out = raw.array().tanh();
  out = (out.array().colwise() * half.array()).matrix();
  out.colwise() += center;
  return out;
}

Eigen::VectorXd policyMean(const GaussianPolicyParams& p, const Eigen::VectorXd& state) {
  return squashMean(p, mlpForwardBatch(p.mean_net, state));
}

double gaussianLogProb(const GaussianPolicyParams& p, const Eigen::VectorXd& state, const Eigen::VectorXd& action) {
  if (action.size() != p.actionDim()) throw ContractError("gaussianLogProb: action dimension mismatch");
  const Eigen::VectorXd mean = policyMean(p, state);
  double lp = 0.0;
  for (Eigen::Index j = 0; j < action.size(); ++j) {
    const double z = (action[j] - mean[j]) * std::exp(-p.log_std[j]);
    lp += -0.5 * z * z - p.log_std[j] - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return lp;
}

Eigen::VectorXd gaussianSample(const GaussianPolicyParams& p, const Eigen::VectorXd& state, Rng& rng,
                               Eigen::VectorXd* pre_squash) {
  const Eigen::VectorXd mean = policyMean(p, state);
  Eigen::VectorXd x(mean.size());
  for (Eigen::Index j = 0; j < mean.size(); ++j) x[j] = mean[j] + std::exp(p.log_std[j]) * rng.normal();
  if (pre_squash != nullptr) *pre_squash = x;
  return x.cwiseMax(p.action_low).cwiseMin(p.action_high);
}

AdamState::AdamState(std::size_t n_params, AdamConfig cfg)
    : cfg_(cfg), m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_params))) {}

void AdamState::step(const Blocks& params, const ConstBlocks& grads) {
  if (params.size() != grads.size()) throw ContractError("adam: parameter and gradient block counts differ");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  Eigen::Index offset = 0;
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (params[b].size() != grads[b].size()) throw ContractError("adam: block shape mismatch");
    const auto n = static_cast<Eigen::Index>(params[b].size());
    if (offset + n > m_.size()) throw ContractError("adam: more parameters than the state was built for");
    Eigen::Map<Eigen::ArrayXd> x(params[b].data(), n);
    Eigen::Map<const Eigen::ArrayXd> g(grads[b].data(), n);
    auto m = m_.segment(offset, n).array();
    auto v = v_.segment(offset, n).array();
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.square();
    x -= cfg_.lr * (m / bc1) / ((v / bc2).sqrt() + cfg_.eps);
    offset += n;
  }
  if (offset != m_.size()) throw ContractError("adam: fewer parameters than the state was built for");
}

}  // namespace offrl::nn
