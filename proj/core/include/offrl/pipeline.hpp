#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "offrl/config.hpp"
#include "offrl/dataset.hpp"
#include "offrl/iql.hpp"
#include "offrl/preference.hpp"
#include "offrl/report.hpp"
#include "offrl/reward.hpp"
#include "offrl/rollout.hpp"

namespace offrl {

// Seed discipline: every stage draws from deriveSeed(cfg.seed, <name>, ...).
std::uint64_t datasetSeed(const PipelineConfig& cfg, OptimalityLevel level);
std::uint64_t pairsSeed(const PipelineConfig& cfg, OptimalityLevel level);
std::uint64_t labelsSeed(const PipelineConfig& cfg, OptimalityLevel level);
std::uint64_t rewardSeed(const PipelineConfig& cfg, int seed_index);
std::uint64_t iqlSeed(const PipelineConfig& cfg, int seed_index);
std::uint64_t evalSeed(const PipelineConfig& cfg, int seed_index);

// Single stages, shared by the pipelines and the CLI subcommands.
OfflineDataset stageGenerate(const PipelineConfig& cfg, OptimalityLevel level);
std::vector<PreferencePair> stageSamplePairs(const PipelineConfig& cfg, OptimalityLevel level,
                                             const OfflineDataset& d);
std::vector<PreferencePair> stageLabel(const PipelineConfig& cfg, OptimalityLevel level, const OfflineDataset& d,
                                       const std::vector<PreferencePair>& pairs, const LabelConfig& label);
/// Trained parameters rounded to what a checkpoint stores.
RewardModelParams stageTrainReward(const PipelineConfig& cfg, const std::vector<PreferencePair>& labelled,
                                   const OfflineDataset& d, int seed_index, RewardTrainStats* stats = nullptr);
OfflineDataset stageRelabel(const PipelineConfig& cfg, const OfflineDataset& d, const RewardModelParams& reward);
IQLBundle stageTrainIQL(const PipelineConfig& cfg, const OfflineDataset& labelled, int seed_index,
                        IQLTrainStats* stats = nullptr);
nn::GaussianPolicyParams stageTrainBC(const PipelineConfig& cfg, const OfflineDataset& d, int seed_index,
                                      double* final_loss = nullptr);
EvalReport stageEvaluate(const PipelineConfig& cfg, const nn::GaussianPolicyParams& policy, int seed_index);

/// Directory-safe name of a label source ("gt_oracle", "flip_0.25", ...).
std::string labelSlug(const LabelSource& source);

/// generate -> sample -> label -> filter -> reward -> relabel -> IQL -> eval,
/// once per evaluation seed. Artifacts and the report go to cfg.out_dir.
RunReport runPipeline(const PipelineConfig& cfg);

/// IQL-GT, Offline-RL-VLM-F, IQL-AvgReward and BC over cfg.baseline_levels.
RunReport runBaselines(const PipelineConfig& cfg);

/// One learned-reward pipeline per flip probability (plus proximity flipping)
/// on a shared dataset and pair sample.
RunReport runAblation(const PipelineConfig& cfg, const std::vector<double>& p_list, bool include_proximity);

}  // namespace offrl
