#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <tuple>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "offrl/checkpoint.hpp"
#include "offrl/digest.hpp"
#include "offrl/error.hpp"
#include "offrl/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace offrl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

PipelineConfig resolveConfig(const Globals& g) {
  PipelineConfig cfg = g.config_path.empty() ? PipelineConfig{} : loadPipelineConfig(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  cfg.verbose = g.verbose;
  cfg.validate();
  return cfg;
}

OptimalityLevel levelOr(const PipelineConfig& cfg, const std::string& level) {
  if (level.empty()) return cfg.level;
  try {
    return parseOptimalityLevel(level);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

OfflineDataset loadDatasetFor(const PipelineConfig& cfg, const std::string& dir) {
  if (dir.empty()) throw ConfigError("--dataset is required");
  OfflineDataset d = loadDataset(dir);
  if (d.spec.id != cfg.env) {
    throw ConfigError("dataset env " + std::string(toString(d.spec.id)) + " does not match config env " +
                      std::string(toString(cfg.env)));
  }
  return d;
}

json evalJson(const EvalReport& e) {
  json j = {{"mean_return", e.mean_return}, {"std_return", e.std_return}, {"returns", e.returns}};
  j["success_rate"] = e.success_rate ? json(*e.success_rate) : json(nullptr);
  return j;
}

void printSummary(const RunReport& r) {
  std::set<std::tuple<std::string, std::string, std::string>> groups;
  for (const auto& c : r.cells) groups.insert({c.dataset_level, c.method, c.label_source});
  for (const auto& [level, m, source] : groups) {
    const GroupSummary g = summarize(r, level, m, source);
    std::printf("%-8s %-18s %-18s mean %.4f std %.4f", level.c_str(), m.c_str(), source.c_str(), g.mean, g.std);
    if (g.success_rate) std::printf(" success %.3f", *g.success_rate);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline preference-reward RL pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Pipeline config (JSON)");
  app.add_option("--seed", g.seed, "Run seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--verbose,-v", g.verbose, "Verbose logging");

  std::string level, dataset_dir, pairs_file, labels_file, reward_dir, policy_dir, source;
  int n_traj = 0, n_pairs = 0, min_gap = -1, seed_index = 0, episodes = 0;
  double p = -1.0;
  bool ground_truth = false, average = false;

  auto* gen = app.add_subcommand("gen-data", "Roll out the scripted behavior policy into a dataset");
  gen->add_option("--level", level, "Random, Medium or Expert");
  gen->add_option("--n-traj", n_traj, "Number of trajectories");

  auto* sample = app.add_subcommand("sample-pairs", "Sample unlabeled observation pairs");
  sample->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  sample->add_option("--level", level, "Level whose seed stream is used");
  sample->add_option("--n", n_pairs, "Number of pairs");
  sample->add_option("--min-gap", min_gap, "Minimum step gap within a trajectory");

  auto* label = app.add_subcommand("label", "Label sampled pairs");
  label->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  label->add_option("--pairs", pairs_file, "pairs.jsonl")->required();
  label->add_option("--level", level, "Level whose seed stream is used");
  label->add_option("--source", source, "GtOracle, FlipNoise, ProximityFlip or VLM");
  label->add_option("--p", p, "Flip probability (FlipNoise) or p_max (ProximityFlip)");

  auto* train_reward = app.add_subcommand("train-reward", "Fit the preference reward model");
  train_reward->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  train_reward->add_option("--labels", labels_file, "Labeled pairs (JSONL)")->required();
  train_reward->add_option("--seed-index", seed_index, "Evaluation seed index");

  auto* relabel = app.add_subcommand("relabel", "Write the reward column of a dataset");
  relabel->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  auto* reward_opt = relabel->add_option("--reward", reward_dir, "Reward checkpoint directory");
  auto* gt_opt = relabel->add_flag("--ground-truth", ground_truth, "Use the environment reward");
  auto* avg_opt = relabel->add_flag("--average", average, "Use the dataset-average ground-truth reward");
  reward_opt->excludes(gt_opt)->excludes(avg_opt);
  gt_opt->excludes(avg_opt);

  auto* train_iql = app.add_subcommand("train-iql", "Train IQL on a labeled dataset");
  train_iql->add_option("--dataset", dataset_dir, "Labeled dataset directory")->required();
  train_iql->add_option("--seed-index", seed_index, "Evaluation seed index");

  auto* train_bc = app.add_subcommand("train-bc", "Train the behavior cloning baseline");
  train_bc->add_option("--dataset", dataset_dir, "Dataset directory")->required();
  train_bc->add_option("--seed-index", seed_index, "Evaluation seed index");

  auto* eval = app.add_subcommand("eval", "Evaluate a policy checkpoint or IQL bundle");
  eval->add_option("--policy", policy_dir, "Policy checkpoint or bundle directory")->required();
  eval->add_option("--seed-index", seed_index, "Evaluation seed index");
  eval->add_option("--episodes", episodes, "Episodes (defaults to the config)");

  auto* pipeline = app.add_subcommand("pipeline", "Run the full pipeline for the configured label source");
  auto* baselines = app.add_subcommand("baselines", "Run IQL-GT, learned-reward IQL, avg-reward IQL and BC");
  auto* ablate = app.add_subcommand("ablate", "Flip-noise and proximity-flip label ablation");

  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  spdlog::set_default_logger(spdlog::stderr_color_mt("offrl"));
  spdlog::set_level(g.verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    PipelineConfig cfg = resolveConfig(g);
    const fs::path out = cfg.out_dir;

    if (gen->parsed()) {
      if (n_traj > 0) cfg.n_traj = n_traj;
      const OptimalityLevel lv = levelOr(cfg, level);
      const OfflineDataset d = stageGenerate(cfg, lv);
      saveDataset(d, out / "dataset");
      std::printf("%s %zu transitions, digest %s\n", (out / "dataset").c_str(), d.size(), datasetDigest(d).c_str());
    } else if (sample->parsed()) {
      if (n_pairs > 0) cfg.n_pairs = n_pairs;
      if (min_gap >= 0) cfg.min_gap = min_gap;
      const OfflineDataset d = loadDatasetFor(cfg, dataset_dir);
      const auto pairs = stageSamplePairs(cfg, levelOr(cfg, level), d);
      savePairs(out / "pairs.jsonl", pairs);
      std::printf("%s %zu pairs\n", (out / "pairs.jsonl").c_str(), pairs.size());
    } else if (label->parsed()) {
      LabelConfig lc = cfg.label;
      if (!source.empty()) {
        if (source == "GtOracle") lc.source = LabelSourceKind::GtOracle;
        else if (source == "FlipNoise") lc.source = LabelSourceKind::FlipNoise;
        else if (source == "ProximityFlip") lc.source = LabelSourceKind::ProximityFlip;
        else if (source == "VLM") lc.source = LabelSourceKind::Vlm;
        else throw ConfigError("unknown --source '" + source + "'");
      }
      if (p >= 0.0) (lc.source == LabelSourceKind::ProximityFlip ? lc.p_max : lc.p) = p;
      cfg.label = lc;
      cfg.validate();
      const OfflineDataset d = loadDatasetFor(cfg, dataset_dir);
      const auto labelled = stageLabel(cfg, levelOr(cfg, level), d, loadPairs(pairs_file), lc);
      savePairs(out / "labels.jsonl", labelled);
      std::printf("%s %zu labeled pairs, %zu trainable\n", (out / "labels.jsonl").c_str(), labelled.size(),
                  filterTrainable(labelled).size());
    } else if (train_reward->parsed()) {
      const OfflineDataset d = loadDatasetFor(cfg, dataset_dir);
      RewardTrainStats st;
      const auto reward = stageTrainReward(cfg, loadPairs(labels_file), d, seed_index, &st);
      nn::saveCheckpoint(out / "reward", reward.mlp);
      std::printf("%s best loss %.6f after %zu epochs\n", (out / "reward").c_str(), st.best_loss,
                  st.epoch_losses.size());
    } else if (relabel->parsed()) {
      const OfflineDataset d = loadDatasetFor(cfg, dataset_dir);
      OfflineDataset r;
      if (ground_truth) {
        r = relabelGroundTruth(d);
      } else if (average) {
        const EnvSpec spec = d.spec;
        r = labelConstantAverage(d, [spec](std::span<const double> s, std::span<const double> a) {
          return gtReward(spec, EnvState{{s.begin(), s.end()}, 0}, a);
        });
      } else if (!reward_dir.empty()) {
        r = stageRelabel(cfg, d, RewardModelParams{nn::loadMlp(reward_dir)});
      } else {
        throw ConfigError("relabel needs one of --reward, --ground-truth or --average");
      }
      saveDataset(r, out / "relabeled");
      std::printf("%s digest %s\n", (out / "relabeled").c_str(), datasetDigest(r).c_str());
    } else if (train_iql->parsed()) {
      const OfflineDataset d = loadDatasetFor(cfg, dataset_dir);
      IQLTrainStats st;
      const IQLBundle b = stageTrainIQL(cfg, d, seed_index, &st);
      saveBundle(out / "iql", b);
      std::printf("%s value %.6f q %.6f policy %.6f\n", (out / "iql").c_str(), st.value_loss, st.q_loss,
                  st.policy_loss);
    } else if (train_bc->parsed()) {
      const OfflineDataset d = loadDatasetFor(cfg, dataset_dir);
      double loss = 0.0;
      const auto policy = stageTrainBC(cfg, d, seed_index, &loss);
      nn::saveCheckpoint(out / "policy", policy);
      std::printf("%s loss %.6f\n", (out / "policy").c_str(), loss);
    } else if (eval->parsed()) {
      if (episodes > 0) cfg.eval.episodes = episodes;
      const fs::path dir = policy_dir;
      const nn::GaussianPolicyParams policy =
          fs::exists(dir / "bundle.json") ? loadBundle(dir).policy : nn::loadGaussianPolicy(dir);
      const EvalReport rep = stageEvaluate(cfg, policy, seed_index);
      const std::string text = evalJson(rep).dump(2) + "\n";
      writeFileText(out / "eval.json", text);
      std::fputs(text.c_str(), stdout);
    } else if (pipeline->parsed()) {
      printSummary(runPipeline(cfg));
    } else if (baselines->parsed()) {
      printSummary(runBaselines(cfg));
    } else if (ablate->parsed()) {
      printSummary(runAblation(cfg, cfg.ablation.p_list, cfg.ablation.include_proximity));
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitStage;
  }
}
