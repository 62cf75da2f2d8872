#include "offrl/iql.hpp"

#include <cmath>

#include <json.hpp>

#include "offrl/checkpoint.hpp"
#include "offrl/digest.hpp"
#include "offrl/error.hpp"

namespace offrl {

namespace fs = std::filesystem;
using nlohmann::json;

void IQLConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("iql: gamma must lie in [0, 1]");
  if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("iql: tau must lie in (0, 1)");
  if (!(beta > 0.0)) throw ConfigError("iql: beta must be positive");
  if (!(adv_clip > 0.0)) throw ConfigError("iql: adv_clip must be positive");
  if (!(polyak > 0.0 && polyak <= 1.0)) throw ConfigError("iql: polyak must lie in (0, 1]");
  if (steps < 0) throw ConfigError("iql: steps must be >= 0");
  if (batch_size < 1) throw ConfigError("iql: batch_size must be >= 1");
  if (!(lr_value > 0.0 && lr_q > 0.0 && lr_policy > 0.0)) throw ConfigError("iql: learning rates must be positive");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("iql: hidden sizes must be >= 1");
  }
}

void BCConfig::validate() const {
  if (steps < 0) throw ConfigError("bc: steps must be >= 0");
  if (batch_size < 1) throw ConfigError("bc: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("bc: lr must be positive");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("bc: hidden sizes must be >= 1");
  }
}

BCConfig BCConfig::fromIQL(const IQLConfig& cfg) {
  return {cfg.steps, cfg.batch_size, cfg.lr_policy, cfg.hidden, cfg.seed};
}

namespace {

std::vector<int> netSizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

IQLBundle makeIQLBundle(const EnvSpec& spec, const std::vector<int>& hidden, Rng& rng) {
  IQLBundle b;
  b.value = nn::makeMlp(netSizes(spec.state_dim, hidden, 1), nn::Activation::Identity, rng);
  b.q1 = nn::makeMlp(netSizes(spec.state_dim + spec.action_dim, hidden, 1), nn::Activation::Identity, rng);
  b.q2 = nn::makeMlp(netSizes(spec.state_dim + spec.action_dim, hidden, 1), nn::Activation::Identity, rng);
  b.target_q1 = b.q1;
  b.target_q2 = b.q2;
  b.policy = nn::makeGaussianPolicy(spec.state_dim, spec.action_dim, hidden, spec.action_low, spec.action_high, rng);
  return b;
}

TransitionTensors toTensors(const OfflineDataset& d) {
  if (d.reward_status == RewardStatus::Unlabeled) {
    throw ContractError("dataset has no reward column; relabel it (ground truth or learned reward) first");
  }
  const auto n = static_cast<Eigen::Index>(d.size());
  TransitionTensors t;
  t.s.resize(d.spec.state_dim, n);
  t.a.resize(d.spec.action_dim, n);
  t.s_next.resize(d.spec.state_dim, n);
  t.r.resize(n);
  t.not_terminal.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& tr = d.transitions[static_cast<std::size_t>(i)];
    if (!tr.r) throw ContractError("dataset transition " + std::to_string(i) + " has no reward");
    for (int k = 0; k < d.spec.state_dim; ++k) {
      t.s(k, i) = tr.s[k];
      t.s_next(k, i) = tr.s_next[k];
    }
    for (int k = 0; k < d.spec.action_dim; ++k) t.a(k, i) = tr.a[k];
    t.r[i] = *tr.r;
    const bool absorbing = tr.done && isTerminalState(d.spec, toDouble(tr.s_next));
    t.not_terminal[i] = absorbing ? 0.0 : 1.0;
  }
  return t;
}

TransitionTensors sampleBatch(const TransitionTensors& data, int batch_size, Rng& rng) {
  if (data.size() == 0) throw ContractError("sampleBatch: empty dataset");
  TransitionTensors b;
  b.s.resize(data.s.rows(), batch_size);
  b.a.resize(data.a.rows(), batch_size);
  b.s_next.resize(data.s_next.rows(), batch_size);
  b.r.resize(batch_size);
  b.not_terminal.resize(batch_size);
  for (int c = 0; c < batch_size; ++c) {
    const auto i = static_cast<Eigen::Index>(rng.uniformInt(static_cast<std::uint64_t>(data.size())));
    b.s.col(c) = data.s.col(i);
    b.a.col(c) = data.a.col(i);
    b.s_next.col(c) = data.s_next.col(i);
    b.r[c] = data.r[i];
    b.not_terminal[c] = data.not_terminal[i];
  }
  return b;
}

Eigen::MatrixXd stateAction(const Eigen::MatrixXd& s, const Eigen::MatrixXd& a) {
  Eigen::MatrixXd sa(s.rows() + a.rows(), s.cols());
  sa << s, a;
  return sa;
}

Eigen::VectorXd minQ(const nn::MLPParams& q1, const nn::MLPParams& q2, const Eigen::MatrixXd& s,
                     const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd sa = stateAction(s, a);
  const Eigen::MatrixXd v1 = nn::mlpForwardBatch(q1, sa);
  const Eigen::MatrixXd v2 = nn::mlpForwardBatch(q2, sa);
  return v1.cwiseMin(v2).row(0).transpose();
}

nn::LossAndGrad<nn::MLPParams> valueLoss(const IQLBundle& b, const TransitionTensors& batch, double tau) {
  const Eigen::VectorXd targets = minQ(b.target_q1, b.target_q2, batch.s, batch.a);
  return nn::expectileRegression(b.value, batch.s, targets, tau);
}

QLossResult qLoss(const IQLBundle& b, const TransitionTensors& batch, double gamma) {
  const Eigen::VectorXd v_next = nn::mlpForwardBatch(b.value, batch.s_next).row(0).transpose();
  const Eigen::VectorXd targets = batch.r + gamma * batch.not_terminal.cwiseProduct(v_next);
  const Eigen::MatrixXd sa = stateAction(batch.s, batch.a);
  auto l1 = nn::squaredTd(b.q1, sa, targets);
  auto l2 = nn::squaredTd(b.q2, sa, targets);
  QLossResult res;
  res.loss = 0.5 * (l1.loss + l2.loss);
  for (auto& l : l1.grad.layers) {
    l.weight *= 0.5;
    l.bias *= 0.5;
  }
  for (auto& l : l2.grad.layers) {
    l.weight *= 0.5;
    l.bias *= 0.5;
  }
  res.grad_q1 = std::move(l1.grad);
  res.grad_q2 = std::move(l2.grad);
  return res;
}

Eigen::VectorXd awrWeights(const IQLBundle& b, const TransitionTensors& batch, double beta, double adv_clip) {
  const Eigen::VectorXd q = minQ(b.q1, b.q2, batch.s, batch.a);
  const Eigen::VectorXd v = nn::mlpForwardBatch(b.value, batch.s).row(0).transpose();
  Eigen::VectorXd w(q.size());
  for (Eigen::Index i = 0; i < q.size(); ++i) w[i] = std::min(std::exp(beta * (q[i] - v[i])), adv_clip);
  return w;
}

nn::LossAndGrad<nn::GaussianPolicyParams> awrLoss(const IQLBundle& b, const TransitionTensors& batch, double beta,
                                                  double adv_clip) {
  return nn::weightedNll(b.policy, batch.s, batch.a, awrWeights(b, batch, beta, adv_clip));
}

IQLBundle trainIQL(const OfflineDataset& d, const IQLConfig& cfg, IQLTrainStats* stats) {
  cfg.validate();
  const TransitionTensors data = toTensors(d);
  Rng rng(cfg.seed);
  IQLBundle b = makeIQLBundle(d.spec, cfg.hidden, rng);
  nn::AdamState opt_v = nn::makeAdam(b.value, {cfg.lr_value});
  nn::AdamState opt_q1 = nn::makeAdam(b.q1, {cfg.lr_q});
  nn::AdamState opt_q2 = nn::makeAdam(b.q2, {cfg.lr_q});
  nn::AdamState opt_pi = nn::makeAdam(b.policy, {cfg.lr_policy});

  double v_loss = 0.0, q_loss = 0.0, pi_loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    const TransitionTensors batch = sampleBatch(data, cfg.batch_size, rng);

    const auto lv = valueLoss(b, batch, cfg.tau);
    nn::adamStep(opt_v, b.value, lv.grad);

    const auto lq = qLoss(b, batch, cfg.gamma);
    nn::adamStep(opt_q1, b.q1, lq.grad_q1);
    nn::adamStep(opt_q2, b.q2, lq.grad_q2);

    nn::softUpdate(b.target_q1, b.q1, cfg.polyak);
    nn::softUpdate(b.target_q2, b.q2, cfg.polyak);

    const auto lp = awrLoss(b, batch, cfg.beta, cfg.adv_clip);
    nn::adamStep(opt_pi, b.policy, lp.grad);
    nn::clampLogStd(b.policy);

    v_loss = lv.loss;
    q_loss = lq.loss;
    pi_loss = lp.loss;
  }
  if (stats) *stats = {v_loss, q_loss, pi_loss, cfg.steps};
  return b;
}

nn::GaussianPolicyParams trainBC(const OfflineDataset& d, const BCConfig& cfg, double* final_loss) {
  cfg.validate();
  if (d.size() == 0) throw ContractError("trainBC: empty dataset");
  const auto n = static_cast<Eigen::Index>(d.size());
  Eigen::MatrixXd S(d.spec.state_dim, n), A(d.spec.action_dim, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& tr = d.transitions[static_cast<std::size_t>(i)];
    for (int k = 0; k < d.spec.state_dim; ++k) S(k, i) = tr.s[k];
    for (int k = 0; k < d.spec.action_dim; ++k) A(k, i) = tr.a[k];
  }
  Rng rng(cfg.seed);
  nn::GaussianPolicyParams policy =
      nn::makeGaussianPolicy(d.spec.state_dim, d.spec.action_dim, cfg.hidden, d.spec.action_low, d.spec.action_high,
                             rng);
  nn::AdamState opt = nn::makeAdam(policy, {cfg.lr});
  Eigen::MatrixXd bs(S.rows(), cfg.batch_size), ba(A.rows(), cfg.batch_size);
  double loss = 0.0;
  for (int step = 0; step < cfg.steps; ++step) {
    for (int c = 0; c < cfg.batch_size; ++c) {
      const auto i = static_cast<Eigen::Index>(rng.uniformInt(static_cast<std::uint64_t>(n)));
      bs.col(c) = S.col(i);
      ba.col(c) = A.col(i);
    }
    const auto l = nn::behaviorCloningNll(policy, bs, ba);
    nn::adamStep(opt, policy, l.grad);
    nn::clampLogStd(policy);
    loss = l.loss;
  }
  if (final_loss) *final_loss = loss;
  return policy;
}

namespace {

constexpr const char* kNets[] = {"value", "q1", "q2", "target_q1", "target_q2"};

nn::MLPParams& net(IQLBundle& b, int i) {
  switch (i) {
    case 0: return b.value;
    case 1: return b.q1;
    case 2: return b.q2;
    case 3: return b.target_q1;
    default: return b.target_q2;
  }
}

}  // namespace

void saveBundle(const fs::path& dir, const IQLBundle& b) {
  IQLBundle copy = b;
  json nets = json::object();
  for (int i = 0; i < 5; ++i) {
    nn::saveCheckpoint(dir / kNets[i], net(copy, i));
    nets[kNets[i]] = kNets[i];
  }
  nn::saveCheckpoint(dir / "policy", b.policy);
  nets["policy"] = "policy";
  const json manifest = {{"format_version", nn::kCheckpointFormatVersion}, {"kind", "iql_bundle"}, {"nets", nets}};
  writeFileText(dir / "bundle.json", manifest.dump());
}

IQLBundle loadBundle(const fs::path& dir) {
  json manifest;
  try {
    manifest = json::parse(readFileText(dir / "bundle.json"));
  } catch (const json::exception& e) {
    throw ParseError("bundle manifest is not valid JSON: " + std::string(e.what()));
  }
  if (manifest.value("format_version", -1) != nn::kCheckpointFormatVersion) {
    throw VersionError("unsupported bundle format_version in " + (dir / "bundle.json").string());
  }
  if (manifest.value("kind", std::string()) != "iql_bundle") throw ParseError("not an IQL bundle: " + dir.string());
  IQLBundle b;
  for (int i = 0; i < 5; ++i) net(b, i) = nn::loadMlp(dir / manifest.at("nets").at(kNets[i]).get<std::string>());
  b.policy = nn::loadGaussianPolicy(dir / manifest.at("nets").at("policy").get<std::string>());
  return b;
}

IQLBundle roundToF32(const IQLBundle& b) {
  IQLBundle r = b;
  for (int i = 0; i < 5; ++i) net(r, i) = nn::roundToF32(net(r, i));
  r.policy = nn::roundToF32(r.policy);
  return r;
}

}  // namespace offrl
