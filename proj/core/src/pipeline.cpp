#include "offrl/pipeline.hpp"

#include <cstdio>
#include <functional>

#include <spdlog/spdlog.h>

#include "offrl/checkpoint.hpp"
#include "offrl/digest.hpp"
#include "offrl/error.hpp"
#include "offrl/render.hpp"
#include "offrl/stats.hpp"

namespace offrl {

namespace fs = std::filesystem;

std::uint64_t datasetSeed(const PipelineConfig& cfg, OptimalityLevel level) {
  return deriveSeed(cfg.seed, "dataset:" + std::string(toString(level)));
}
std::uint64_t pairsSeed(const PipelineConfig& cfg, OptimalityLevel level) {
  return deriveSeed(cfg.seed, "pairs:" + std::string(toString(level)));
}
std::uint64_t labelsSeed(const PipelineConfig& cfg, OptimalityLevel level) {
  return deriveSeed(cfg.seed, "labels:" + std::string(toString(level)));
}
std::uint64_t rewardSeed(const PipelineConfig& cfg, int seed_index) {
  return deriveSeed(cfg.seed, "reward", static_cast<std::uint64_t>(seed_index));
}
std::uint64_t iqlSeed(const PipelineConfig& cfg, int seed_index) {
  return deriveSeed(cfg.seed, "iql", static_cast<std::uint64_t>(seed_index));
}
std::uint64_t evalSeed(const PipelineConfig& cfg, int seed_index) {
  return deriveSeed(cfg.seed, "eval", static_cast<std::uint64_t>(seed_index));
}

OfflineDataset stageGenerate(const PipelineConfig& cfg, OptimalityLevel level) {
  return generateDataset(cfg.spec(), level, cfg.n_traj, datasetSeed(cfg, level));
}

std::vector<PreferencePair> stageSamplePairs(const PipelineConfig& cfg, OptimalityLevel level,
                                             const OfflineDataset& d) {
  return samplePairs(d, static_cast<std::size_t>(cfg.n_pairs), cfg.min_gap, pairsSeed(cfg, level));
}

std::vector<PreferencePair> stageLabel(const PipelineConfig& cfg, OptimalityLevel level, const OfflineDataset& d,
                                       const std::vector<PreferencePair>& pairs, const LabelConfig& label) {
  if (label.source == LabelSourceKind::Vlm) {
    vlm::VlmClientConfig vc = label.vlm;
    vc.verbose = vc.verbose || cfg.verbose;
    const vlm::VlmClient client(vc);
    const EnvSpec spec = d.spec;
    const Renderer renderer = [spec](std::span<const double> s) { return render(spec, s); };
    return labelPairsVlm(pairs, d, cfg.taskDescription(), client, label.prompts, renderer);
  }
  SyntheticLabelOptions opts;
  opts.source = label.labelSource();
  opts.tie_tol = defaultTieTolerance(d, label.tie_tol_fraction);
  opts.length_scale = label.length_scale;
  opts.seed = labelsSeed(cfg, level);
  return labelPairsSynthetic(pairs, d, opts);
}

RewardModelParams stageTrainReward(const PipelineConfig& cfg, const std::vector<PreferencePair>& labelled,
                                   const OfflineDataset& d, int seed_index, RewardTrainStats* stats) {
  RewardTrainConfig rc = cfg.reward;
  rc.seed = rewardSeed(cfg, seed_index);
  return {nn::roundToF32(trainRewardModel(labelled, d, rc, stats).mlp)};
}

OfflineDataset stageRelabel(const PipelineConfig& cfg, const OfflineDataset& d, const RewardModelParams& reward) {
  OfflineDataset out = relabelRewards(d, rewardFunction(reward));
  if (cfg.standardize_rewards) out = standardizeRewards(out);
  return out;
}

IQLBundle stageTrainIQL(const PipelineConfig& cfg, const OfflineDataset& labelled, int seed_index,
                        IQLTrainStats* stats) {
  IQLConfig ic = cfg.iql;
  ic.seed = iqlSeed(cfg, seed_index);
  return roundToF32(trainIQL(labelled, ic, stats));
}

nn::GaussianPolicyParams stageTrainBC(const PipelineConfig& cfg, const OfflineDataset& d, int seed_index,
                                      double* final_loss) {
  BCConfig bc = BCConfig::fromIQL(cfg.iql);
  bc.seed = iqlSeed(cfg, seed_index);
  return nn::roundToF32(trainBC(d, bc, final_loss));
}

EvalReport stageEvaluate(const PipelineConfig& cfg, const nn::GaussianPolicyParams& policy, int seed_index) {
  return evaluatePolicy(cfg.spec(), policy, cfg.eval.episodes, evalSeed(cfg, seed_index));
}

std::string labelSlug(const LabelSource& source) {
  switch (source.kind) {
    case LabelSourceKind::GtOracle:
      return "gt_oracle";
    case LabelSourceKind::FlipNoise: {
      char buf[48];
      std::snprintf(buf, sizeof buf, "flip_%g", source.p);
      return buf;
    }
    case LabelSourceKind::ProximityFlip:
      return "proximity";
    case LabelSourceKind::Vlm:
      return "vlm";
  }
  return "unknown";
}

namespace {

template <class F>
auto runStage(const char* name, F&& f) -> decltype(f()) {
  spdlog::debug("stage {}", name);
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string rel(const fs::path& p, const fs::path& base) { return fs::relative(p, base).generic_string(); }

/// Dataset and pair sample of one level, persisted once and shared by every cell.
struct LevelData {
  OptimalityLevel level;
  OfflineDataset dataset;
  std::string dataset_digest;
  std::vector<PreferencePair> pairs;
  fs::path dir;
  StageArtifacts artifacts;
};

struct LabelSet {
  LabelSource source;
  std::vector<PreferencePair> trainable;
  std::string digest;
};

class Runner {
 public:
  explicit Runner(const PipelineConfig& cfg) : cfg_(cfg), out_(cfg.out_dir) {
    cfg_.validate();
    fs::create_directories(out_);
    writeFileText(out_ / "config.json", encodePipelineConfig(cfg_));
  }

  LevelData prepareLevel(OptimalityLevel level) {
    LevelData L;
    L.level = level;
    L.dir = out_ / std::string(toString(level));
    L.dataset = runStage("generate", [&] {
      OfflineDataset d = stageGenerate(cfg_, level);
      saveDataset(d, L.dir / "dataset");
      return d;
    });
    L.dataset_digest = datasetDigest(L.dataset);
    L.pairs = runStage("sample-pairs", [&] {
      auto pairs = stageSamplePairs(cfg_, level, L.dataset);
      savePairs(L.dir / "pairs.jsonl", pairs);
      return pairs;
    });
    L.artifacts.dataset_level = std::string(toString(level));
    L.artifacts.dataset_path = rel(L.dir / "dataset", out_);
    L.artifacts.dataset_digest = L.dataset_digest;
    L.artifacts.pairs_path = rel(L.dir / "pairs.jsonl", out_);
    L.artifacts.n_pairs = static_cast<int>(L.pairs.size());
    return L;
  }

  LabelSet label(LevelData& L, const LabelConfig& lc) {
    LabelSet set;
    set.source = lc.labelSource();
    const fs::path file = L.dir / "labels" / (labelSlug(set.source) + ".jsonl");
    const auto labelled = runStage("label", [&] {
      auto out = stageLabel(cfg_, L.level, L.dataset, L.pairs, lc);
      savePairs(file, out);
      return out;
    });
    set.trainable = runStage("filter", [&] {
      auto t = filterTrainable(labelled);
      if (t.empty()) throw ContractError("every pair is labelled -1; nothing to train the reward on");
      return t;
    });
    set.digest = sha256File(file);
    const std::string tag = set.source.tag();
    L.artifacts.label_paths[tag] = rel(file, out_);
    L.artifacts.label_digests[tag] = set.digest;
    L.artifacts.n_trainable[tag] = static_cast<int>(set.trainable.size());
    return set;
  }

  ReportCell baseCell(const LevelData& L, std::string_view method, int seed) const {
    ReportCell c;
    c.env = std::string(toString(cfg_.env));
    c.dataset_level = std::string(toString(L.level));
    c.method = std::string(method);
    c.seed = seed;
    c.eval_seed = evalSeed(cfg_, seed);
    c.dataset_digest = L.dataset_digest;
    return c;
  }

  ReportCell iqlCell(std::string_view method, const OfflineDataset& labelled, int seed,
                     const fs::path& dir, ReportCell c) {
    IQLTrainStats st;
    const IQLBundle b = runStage("train-iql", [&] {
      IQLBundle bundle = stageTrainIQL(cfg_, labelled, seed, &st);
      saveBundle(dir / "iql", bundle);
      return bundle;
    });
    c.checkpoint_digests["iql"] = sha256Directory(dir / "iql");
    c.metrics["iql_value_loss"] = st.value_loss;
    c.metrics["iql_q_loss"] = st.q_loss;
    c.metrics["iql_policy_loss"] = st.policy_loss;
    c.eval = runStage("eval", [&] { return stageEvaluate(cfg_, b.policy, seed); });
    spdlog::info("{} {} {} seed {}: mean return {:.4f}", c.env, c.dataset_level, method, seed, c.eval.mean_return);
    return c;
  }

  ReportCell learnedCell(const LevelData& L, const LabelSet& labels, int seed) {
    const fs::path dir = L.dir / "learned" / labelSlug(labels.source) / ("seed_" + std::to_string(seed));
    ReportCell c = baseCell(L, method::kOfflineRlVlmF, seed);
    c.label_source = labels.source.tag();
    c.label_digest = labels.digest;
    RewardTrainStats rs;
    const RewardModelParams reward = runStage("train-reward", [&] {
      RewardModelParams r = stageTrainReward(cfg_, labels.trainable, L.dataset, seed, &rs);
      nn::saveCheckpoint(dir / "reward", r.mlp);
      return r;
    });
    c.checkpoint_digests["reward"] = sha256Directory(dir / "reward");
    c.metrics["reward_best_loss"] = rs.best_loss;
    c.metrics["reward_epochs"] = static_cast<double>(rs.epoch_losses.size());
    c.metrics["reward_train_accuracy"] = pairwiseAccuracy(reward, labels.trainable, L.dataset);
    c.metrics["reward_spearman_gt"] = rewardSpearman(reward, L.dataset);
    const OfflineDataset relabelled = runStage("relabel", [&] {
      OfflineDataset d = stageRelabel(cfg_, L.dataset, reward);
      saveDataset(d, dir / "relabeled");
      return d;
    });
    c.checkpoint_digests["relabeled_dataset"] = datasetDigest(relabelled);
    return iqlCell(method::kOfflineRlVlmF, relabelled, seed, dir, std::move(c));
  }

  ReportCell gtCell(const LevelData& L, int seed) {
    const fs::path dir = L.dir / "iql_gt" / ("seed_" + std::to_string(seed));
    const OfflineDataset d = runStage("relabel", [&] { return relabelGroundTruth(L.dataset); });
    return iqlCell(method::kIqlGt, d, seed, dir, baseCell(L, method::kIqlGt, seed));
  }

  ReportCell avgCell(const LevelData& L, int seed) {
    const fs::path dir = L.dir / "iql_avg" / ("seed_" + std::to_string(seed));
    const EnvSpec spec = L.dataset.spec;
    const OfflineDataset d = runStage("relabel", [&] {
      return labelConstantAverage(L.dataset, [spec](std::span<const double> s, std::span<const double> a) {
        return gtReward(spec, EnvState{{s.begin(), s.end()}, 0}, a);
      });
    });
    return iqlCell(method::kIqlAvgReward, d, seed, dir, baseCell(L, method::kIqlAvgReward, seed));
  }

  ReportCell bcCell(const LevelData& L, int seed) {
    const fs::path dir = L.dir / "bc" / ("seed_" + std::to_string(seed));
    ReportCell c = baseCell(L, method::kBc, seed);
    double loss = 0.0;
    const auto policy = runStage("train-bc", [&] {
      auto p = stageTrainBC(cfg_, L.dataset, seed, &loss);
      nn::saveCheckpoint(dir / "policy", p);
      return p;
    });
    c.checkpoint_digests["policy"] = sha256Directory(dir / "policy");
    c.metrics["bc_loss"] = loss;
    c.eval = runStage("eval", [&] { return stageEvaluate(cfg_, policy, seed); });
    spdlog::info("{} {} BC seed {}: mean return {:.4f}", c.env, c.dataset_level, seed, c.eval.mean_return);
    return c;
  }

  RunReport finish(RunReport r) {
    r.config = encodePipelineConfig(cfg_);
    r.unimplemented_methods = unimplementedMethods();
    runStage("report", [&] {
      writeReport(r, out_);
      return 0;
    });
    return r;
  }

  const PipelineConfig& cfg() const { return cfg_; }

 private:
  static double rewardSpearman(const RewardModelParams& reward, const OfflineDataset& d) {
    std::vector<double> learned, truth;
    learned.reserve(d.size());
    truth.reserve(d.size());
    for (const auto& tr : d.transitions) {
      const auto s = toDouble(tr.s_next);
      learned.push_back(predictReward(reward, s));
      truth.push_back(stateReward(d.spec, s));
    }
    return stats::spearman(learned, truth);
  }

  PipelineConfig cfg_;
  fs::path out_;
};

}  // namespace

RunReport runPipeline(const PipelineConfig& cfg) {
  Runner run(cfg);
  RunReport r;
  r.kind = "pipeline";
  LevelData L = run.prepareLevel(cfg.level);
  const LabelSet labels = run.label(L, cfg.label);
  for (int s = 0; s < cfg.eval.n_seeds; ++s) r.cells.push_back(run.learnedCell(L, labels, s));
  r.stages.push_back(L.artifacts);
  return run.finish(std::move(r));
}

RunReport runBaselines(const PipelineConfig& cfg) {
  Runner run(cfg);
  RunReport r;
  r.kind = "baselines";
  for (OptimalityLevel level : cfg.baseline_levels) {
    LevelData L = run.prepareLevel(level);
    const LabelSet labels = run.label(L, cfg.label);
    for (int s = 0; s < cfg.eval.n_seeds; ++s) {
      r.cells.push_back(run.gtCell(L, s));
      r.cells.push_back(run.learnedCell(L, labels, s));
      r.cells.push_back(run.avgCell(L, s));
      r.cells.push_back(run.bcCell(L, s));
    }
    r.stages.push_back(L.artifacts);
  }
  return run.finish(std::move(r));
}

RunReport runAblation(const PipelineConfig& cfg, const std::vector<double>& p_list, bool include_proximity) {
  for (double p : p_list) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("ablation: flip probabilities must lie in [0, 1]");
  }
  Runner run(cfg);
  RunReport r;
  r.kind = "ablation";
  LevelData L = run.prepareLevel(cfg.level);
  std::vector<LabelConfig> settings;
  for (double p : p_list) {
    LabelConfig lc = cfg.label;
    lc.source = LabelSourceKind::FlipNoise;
    lc.p = p;
    settings.push_back(lc);
  }
  if (include_proximity) {
    LabelConfig lc = cfg.label;
    lc.source = LabelSourceKind::ProximityFlip;
    settings.push_back(lc);
  }
  for (const auto& lc : settings) {
    const LabelSet labels = run.label(L, lc);
    for (int s = 0; s < cfg.eval.n_seeds; ++s) r.cells.push_back(run.learnedCell(L, labels, s));
  }
  r.stages.push_back(L.artifacts);
  return run.finish(std::move(r));
}

}  // namespace offrl
