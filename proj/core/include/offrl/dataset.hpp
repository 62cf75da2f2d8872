#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "offrl/envs.hpp"

namespace offrl {

enum class RewardStatus { Unlabeled, GroundTruth, Learned, Constant };

std::string_view toString(RewardStatus status);
RewardStatus parseRewardStatus(std::string_view name);

struct Transition {
  std::uint32_t traj_id = 0;
  std::uint32_t t = 0;
  std::vector<float> s;
  std::vector<float> a;
  std::optional<float> r;
  std::vector<float> s_next;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

/// Ordered trajectories of transitions. Value type; relabelling returns a copy.
struct OfflineDataset {
  EnvSpec spec;
  std::vector<Transition> transitions;
  RewardStatus reward_status = RewardStatus::Unlabeled;

  std::size_t size() const { return transitions.size(); }
  std::size_t trajectoryCount() const;
  /// Start offset of every trajectory followed by size() as an end sentinel.
  std::vector<std::size_t> trajectoryOffsets() const;
  bool operator==(const OfflineDataset&) const = default;
};

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr std::string_view kDatasetDtype = "f32le";

/// Throws InvariantError naming the first violated invariant.
void validateDataset(const OfflineDataset& d);

/// Bytes of transitions.bin (fixed-size little-endian records).
std::vector<std::uint8_t> encodeTransitions(const OfflineDataset& d);
/// Canonical manifest.json text.
std::string encodeManifest(const OfflineDataset& d);
std::size_t transitionRecordSize(const EnvSpec& spec);

void saveDataset(const OfflineDataset& d, const std::filesystem::path& dir);
OfflineDataset loadDataset(const std::filesystem::path& dir);

/// Digest of the canonical serialization; equal datasets give equal digests.
std::string datasetDigest(const OfflineDataset& d);

using StateRewardFn = std::function<double(std::span<const double> state)>;
using TransitionRewardFn = std::function<double(std::span<const double> s, std::span<const double> a)>;

/// Sets every r to rewardFn(s_next); nothing else changes except the status.
OfflineDataset relabelRewards(const OfflineDataset& d, const StateRewardFn& rewardFn,
                              RewardStatus status = RewardStatus::Learned);

/// Relabels with the environment's own state reward (status GroundTruth).
OfflineDataset relabelGroundTruth(const OfflineDataset& d);

/// Every transition gets the dataset mean of gtRewardFn(s, a).
OfflineDataset labelConstantAverage(const OfflineDataset& d, const TransitionRewardFn& gtRewardFn);

/// Rescales the reward column to zero mean and unit variance.
OfflineDataset standardizeRewards(const OfflineDataset& d);

std::vector<double> toDouble(std::span<const float> xs);

}  // namespace offrl
