#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "offrl/envs.hpp"
#include "offrl/iql.hpp"
#include "offrl/preference.hpp"
#include "offrl/reward.hpp"
#include "offrl/vlm_client.hpp"

namespace offrl {

struct LabelConfig {
  LabelSourceKind source = LabelSourceKind::GtOracle;
  /// FlipNoise probability.
  double p = 0.0;
  /// ProximityFlip parameters; length_scale <= 0 means the median pair distance.
  double p_max = 0.9;
  double length_scale = 0.0;
  /// Oracle tie tolerance as a fraction of the dataset's reward range.
  double tie_tol_fraction = 0.01;
  vlm::VlmClientConfig vlm;
  /// Empty selects the environment's default description.
  std::string task_description;
  PromptTemplates prompts = PromptTemplates::defaults();

  LabelSource labelSource() const;
};

struct EvalConfig {
  int episodes = 20;
  int n_seeds = 3;
};

struct AblationConfig {
  std::vector<double> p_list = {0.0, 0.25, 0.5, 0.75};
  bool include_proximity = true;
};

struct PipelineConfig {
  EnvId env = EnvId::PointMass2D;
  OptimalityLevel level = OptimalityLevel::Random;
  /// Dataset levels covered by the baseline matrix.
  std::vector<OptimalityLevel> baseline_levels = {OptimalityLevel::Random, OptimalityLevel::Medium,
                                                  OptimalityLevel::Expert};
  std::uint64_t seed = 0;
  int n_traj = 100;
  int n_pairs = 2000;
  int min_gap = 5;
  LabelConfig label;
  RewardTrainConfig reward;
  bool standardize_rewards = false;
  IQLConfig iql;
  EvalConfig eval;
  AblationConfig ablation;
  std::filesystem::path out_dir = "runs/default";
  bool verbose = false;

  EnvSpec spec() const { return EnvSpec::make(env); }
  std::string taskDescription() const;
  /// Throws ConfigError naming the offending field.
  void validate() const;
};

std::string defaultTaskDescription(EnvId env);

/// Strict parse: unknown keys and wrongly typed values are ConfigErrors.
PipelineConfig parsePipelineConfig(std::string_view json_text);
PipelineConfig loadPipelineConfig(const std::filesystem::path& path);
/// Canonical JSON (sorted keys, no whitespace). Seeds inside the reward and
/// IQL sections are derived per run and therefore not serialized.
std::string encodePipelineConfig(const PipelineConfig& cfg);

}  // namespace offrl
