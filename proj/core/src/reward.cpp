#include "offrl/reward.hpp"

#include <cmath>
#include <numeric>

#include "offrl/error.hpp"
#include "offrl/losses.hpp"

namespace offrl {

double btProbability(double sum_r0, double sum_r1) {
  const double z = sum_r1 - sum_r0;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

RewardModelParams makeRewardModel(int state_dim, const std::vector<int>& hidden, Rng& rng) {
  std::vector<int> sizes = {state_dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(1);
  return {nn::makeMlp(sizes, nn::Activation::Tanh, rng)};
}

double predictReward(const RewardModelParams& params, std::span<const double> state) {
  if (static_cast<int>(state.size()) != params.mlp.inDim()) {
    throw ContractError("predictReward: state dimension does not match the reward model");
  }
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(state.data(), static_cast<Eigen::Index>(state.size()));
  return nn::mlpForward(params.mlp, x)[0];
}

StateRewardFn rewardFunction(const RewardModelParams& params) {
  return [params](std::span<const double> state) { return predictReward(params, state); };
}

nn::PreferenceBatch makePreferenceBatch(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                        std::span<const std::size_t> indices) {
  const ObsIndex idx(d);
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(pairs.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    indices = all;
  }
  const auto n = static_cast<Eigen::Index>(indices.size());
  const int dim = d.spec.state_dim;
  nn::PreferenceBatch b;
  b.horizon = 1;
  b.seg0.resize(dim, n);
  b.seg1.resize(dim, n);
  b.labels.reserve(indices.size());
  for (Eigen::Index c = 0; c < n; ++c) {
    const PreferencePair& p = pairs[indices[c]];
    if (!p.label) throw ContractError("preference batch: pair " + std::to_string(p.pair_id) + " is unlabeled");
    if (*p.label == PreferenceLabel::None) {
      throw ContractError("preference batch: pair " + std::to_string(p.pair_id) +
                          " is labeled -1; filter trainable pairs first");
    }
    const auto s0 = idx.state(p.obs0);
    const auto s1 = idx.state(p.obs1);
    for (int k = 0; k < dim; ++k) {
      b.seg0(k, c) = s0[k];
      b.seg1(k, c) = s1[k];
    }
    b.labels.push_back(static_cast<int>(*p.label));
  }
  return b;
}

double preferenceLoss(const RewardModelParams& params, std::span<const PreferencePair> pairs,
                      const OfflineDataset& d) {
  return nn::preferenceCrossEntropy(params.mlp, makePreferenceBatch(pairs, d)).loss;
}

void RewardTrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("reward: batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("reward: max_epochs must be >= 1");
  if (window < 1) throw ConfigError("reward: window must be >= 1");
  if (!(threshold > 0.0)) throw ConfigError("reward: threshold must be positive");
  if (!(lr > 0.0)) throw ConfigError("reward: lr must be positive");
  for (int h : hidden) {
    if (h < 1) throw ConfigError("reward: hidden sizes must be >= 1");
  }
}

RewardModelParams trainRewardModel(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                   const RewardTrainConfig& cfg, RewardTrainStats* stats) {
  cfg.validate();
  const std::vector<PreferencePair> trainable = filterTrainable(pairs);
  if (trainable.empty()) throw ContractError("trainRewardModel: no trainable pairs (all labels are -1)");

  Rng rng(cfg.seed);
  RewardModelParams params = makeRewardModel(d.spec.state_dim, cfg.hidden, rng);
  nn::AdamState adam = nn::makeAdam(params.mlp, {cfg.lr});
  // Whole trainable set as one matrix; minibatches are column gathers.
  const nn::PreferenceBatch all = makePreferenceBatch(trainable, d);

  RewardModelParams best = params;
  double best_loss = INFINITY;
  int best_epoch = -1;
  int since_improvement = 0;
  std::vector<double> history;

  std::vector<std::size_t> order(trainable.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.uniformInt(k)]);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      nn::PreferenceBatch b;
      b.horizon = 1;
      b.seg0.resize(all.seg0.rows(), static_cast<Eigen::Index>(end - start));
      b.seg1.resize(all.seg1.rows(), static_cast<Eigen::Index>(end - start));
      for (std::size_t c = start; c < end; ++c) {
        b.seg0.col(static_cast<Eigen::Index>(c - start)) = all.seg0.col(static_cast<Eigen::Index>(order[c]));
        b.seg1.col(static_cast<Eigen::Index>(c - start)) = all.seg1.col(static_cast<Eigen::Index>(order[c]));
        b.labels.push_back(all.labels[order[c]]);
      }
      const auto lg = nn::preferenceCrossEntropy(params.mlp, b);
      nn::adamStep(adam, params.mlp, lg.grad);
      weighted += lg.loss * static_cast<double>(end - start);
    }
    const double epoch_loss = weighted / static_cast<double>(order.size());
    history.push_back(epoch_loss);
    if (epoch_loss < best_loss - cfg.threshold) {
      best_loss = epoch_loss;
      best = params;
      best_epoch = epoch;
      since_improvement = 0;
    } else {
      if (epoch_loss < best_loss) {
        best_loss = epoch_loss;
        best = params;
        best_epoch = epoch;
      }
      if (++since_improvement >= cfg.window) break;
    }
  }
  if (stats) {
    stats->epoch_losses = std::move(history);
    stats->best_epoch = best_epoch;
    stats->best_loss = best_loss;
    stats->n_pairs = static_cast<int>(trainable.size());
  }
  return best;
}

double pairwiseAccuracy(const RewardModelParams& params, std::span<const PreferencePair> pairs,
                        const OfflineDataset& d) {
  const std::vector<PreferencePair> trainable = filterTrainable(pairs);
  if (trainable.empty()) throw ContractError("pairwiseAccuracy: no pairs with a strict label");
  const nn::PreferenceBatch b = makePreferenceBatch(trainable, d);
  const auto [s0, s1] = nn::segmentSums(params.mlp, b);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const int predicted = s1[static_cast<Eigen::Index>(i)] > s0[static_cast<Eigen::Index>(i)] ? 1 : 0;
    correct += predicted == b.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(b.size());
}

}  // namespace offrl
