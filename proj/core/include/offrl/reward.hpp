#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "offrl/dataset.hpp"
#include "offrl/losses.hpp"
#include "offrl/nn.hpp"
#include "offrl/preference.hpp"

namespace offrl {

/// P[sigma1 > sigma0] = exp(sum_r1) / (exp(sum_r0) + exp(sum_r1)), evaluated as
/// a logistic of the difference.
double btProbability(double sum_r0, double sum_r1);

/// Scalar reward of a single state; tanh output keeps it in (-1, 1).
struct RewardModelParams {
  nn::MLPParams mlp;
  bool operator==(const RewardModelParams&) const = default;
};

RewardModelParams makeRewardModel(int state_dim, const std::vector<int>& hidden, Rng& rng);

double predictReward(const RewardModelParams& params, std::span<const double> state);
StateRewardFn rewardFunction(const RewardModelParams& params);

/// Pairs as segment matrices (horizon 1). Throws ContractError on None or
/// missing labels.
nn::PreferenceBatch makePreferenceBatch(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                        std::span<const std::size_t> indices = {});

/// Mean negative log-likelihood of the labelled side.
double preferenceLoss(const RewardModelParams& params, std::span<const PreferencePair> pairs,
                      const OfflineDataset& d);

struct RewardTrainConfig {
  int batch_size = 64;
  int max_epochs = 300;
  int window = 10;
  double threshold = 1e-4;
  double lr = 3e-4;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {64, 64};

  void validate() const;
};

struct RewardTrainStats {
  std::vector<double> epoch_losses;
  int best_epoch = -1;
  double best_loss = 0.0;
  int n_pairs = 0;
};

/// Adam on the preference loss with a full shuffle per epoch. Stops once the
/// best epoch-mean loss has not improved by cfg.threshold for cfg.window
/// epochs, or at cfg.max_epochs; returns the best-epoch parameters.
RewardModelParams trainRewardModel(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                   const RewardTrainConfig& cfg, RewardTrainStats* stats = nullptr);

/// Fraction of non-None pairs whose predicted order matches the label.
double pairwiseAccuracy(const RewardModelParams& params, std::span<const PreferencePair> pairs,
                        const OfflineDataset& d);

}  // namespace offrl
