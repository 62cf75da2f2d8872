#include "offrl/config.hpp"

#include <algorithm>
#include <exception>
#include <set>
#include <type_traits>

#include <json.hpp>

#include "offrl/digest.hpp"
#include "offrl/error.hpp"

namespace offrl {

using nlohmann::json;

LabelSource LabelConfig::labelSource() const {
  switch (source) {
    case LabelSourceKind::FlipNoise:
      return {source, p};
    case LabelSourceKind::ProximityFlip:
      return {source, p_max};
    default:
      return {source, 0.0};
  }
}

std::string defaultTaskDescription(EnvId env) {
  switch (env) {
    case EnvId::PointMass2D:
      return "move the red dot onto the center of the green target disc";
    case EnvId::CartPoleBalance:
      return "keep the pole upright and balanced on the cart";
    case EnvId::ChainMDP:
      return "move the red marker to the green cell at the right end of the row";
  }
  return "";
}

std::string PipelineConfig::taskDescription() const {
  return label.task_description.empty() ? defaultTaskDescription(env) : label.task_description;
}

void PipelineConfig::validate() const {
  if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
  if (n_pairs < 1) throw ConfigError("pairs.n must be >= 1");
  if (min_gap < 0) throw ConfigError("pairs.min_gap must be >= 0");
  if (!(label.p >= 0.0 && label.p <= 1.0)) throw ConfigError("label.p must lie in [0, 1]");
  if (!(label.p_max >= 0.0 && label.p_max <= 1.0)) throw ConfigError("label.p_max must lie in [0, 1]");
  if (!(label.tie_tol_fraction >= 0.0)) throw ConfigError("label.tie_tol_fraction must be >= 0");
  if (label.source == LabelSourceKind::Vlm) label.vlm.validate();
  reward.validate();
  iql.validate();
  if (eval.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (eval.n_seeds < 1) throw ConfigError("eval.n_seeds must be >= 1");
  if (baseline_levels.empty()) throw ConfigError("baselines.levels must not be empty");
  for (double p : ablation.p_list) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("ablation.p_list entries must lie in [0, 1]");
  }
}

namespace {

template <class T>
struct IsVector : std::false_type {};
template <class T>
struct IsVector<std::vector<T>> : std::true_type {};

// nlohmann converts 1.5 to an int and -1 to an unsigned; reject both.
template <class T>
bool typeMatches(const json& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v.is_boolean();
  } else if constexpr (std::is_unsigned_v<T>) {
    return v.is_number_unsigned();
  } else if constexpr (std::is_integral_v<T>) {
    return v.is_number_integer();
  } else if constexpr (std::is_floating_point_v<T>) {
    return v.is_number();
  } else if constexpr (IsVector<T>::value) {
    if (!v.is_array()) return false;
    return std::all_of(v.begin(), v.end(), [](const json& e) { return typeMatches<typename T::value_type>(e); });
  } else {
    return true;
  }
}

// Reads keys from one JSON object and rejects whatever was not consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(name() + " must be an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, _] : j_.items()) {
      if (!used_.contains(key)) throw ConfigError("unknown config key '" + prefixed(key) + "'");
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!typeMatches<T>(v)) throw ConfigError("config key '" + prefixed(key) + "' has the wrong type");
    try {
      out = v.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("config key '" + prefixed(key) + "' has the wrong type");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& child(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  std::string prefixed(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string name() const { return path_.empty() ? "config" : path_; }
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class E, class Parse>
void getEnum(Section& s, const char* key, E& out, Parse parse) {
  std::string name;
  const bool present = s.has(key);
  s.get(key, name);
  if (!present) return;
  try {
    out = parse(name);
  } catch (const Error& e) {
    throw ConfigError("config key '" + s.prefixed(key) + "': " + e.what());
  }
}

LabelSourceKind parseSourceKind(const std::string& name) {
  if (name == "GtOracle") return LabelSourceKind::GtOracle;
  if (name == "FlipNoise") return LabelSourceKind::FlipNoise;
  if (name == "ProximityFlip") return LabelSourceKind::ProximityFlip;
  if (name == "VLM") return LabelSourceKind::Vlm;
  throw ConfigError("unknown label source '" + name + "' (expected GtOracle, FlipNoise, ProximityFlip or VLM)");
}

std::string sourceKindName(LabelSourceKind k) {
  switch (k) {
    case LabelSourceKind::GtOracle: return "GtOracle";
    case LabelSourceKind::FlipNoise: return "FlipNoise";
    case LabelSourceKind::ProximityFlip: return "ProximityFlip";
    case LabelSourceKind::Vlm: return "VLM";
  }
  return "?";
}

void parseVlm(const json& j, vlm::VlmClientConfig& v) {
  Section s(j, "label.vlm");
  s.get("endpoint", v.endpoint);
  s.get("model", v.model);
  s.get("api_key_env", v.api_key_env);
  s.get("timeout_s", v.timeout_s);
  s.get("max_retries", v.max_retries);
  s.get("max_in_flight", v.max_in_flight);
  std::string cache = v.cache_dir.string();
  s.get("cache_dir", cache);
  v.cache_dir = cache;
  s.get("temperature", v.temperature);
  s.get("backoff_base_s", v.backoff_base_s);
  s.get("backoff_factor", v.backoff_factor);
}

}  // namespace

PipelineConfig parsePipelineConfig(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  PipelineConfig cfg;
  {
    Section s(root, "");
    getEnum(s, "env", cfg.env, parseEnvId);
    getEnum(s, "level", cfg.level, parseOptimalityLevel);
    s.get("seed", cfg.seed);
    std::string out = cfg.out_dir.string();
    s.get("out", out);
    cfg.out_dir = out;
    if (s.has("dataset")) {
      Section ds(s.child("dataset"), "dataset");
      ds.get("n_traj", cfg.n_traj);
    }
    if (s.has("pairs")) {
      Section ps(s.child("pairs"), "pairs");
      ps.get("n", cfg.n_pairs);
      ps.get("min_gap", cfg.min_gap);
    }
    if (s.has("label")) {
      Section ls(s.child("label"), "label");
      getEnum(ls, "source", cfg.label.source, parseSourceKind);
      ls.get("p", cfg.label.p);
      ls.get("p_max", cfg.label.p_max);
      ls.get("length_scale", cfg.label.length_scale);
      ls.get("tie_tol_fraction", cfg.label.tie_tol_fraction);
      ls.get("task_description", cfg.label.task_description);
      if (ls.has("vlm")) parseVlm(ls.child("vlm"), cfg.label.vlm);
      if (ls.has("prompts")) {
        Section pr(ls.child("prompts"), "label.prompts");
        pr.get("analysis", cfg.label.prompts.analysis);
        pr.get("labeling", cfg.label.prompts.labeling);
      }
    }
    if (s.has("reward")) {
      Section rs(s.child("reward"), "reward");
      rs.get("batch_size", cfg.reward.batch_size);
      rs.get("max_epochs", cfg.reward.max_epochs);
      rs.get("window", cfg.reward.window);
      rs.get("threshold", cfg.reward.threshold);
      rs.get("lr", cfg.reward.lr);
      rs.get("hidden", cfg.reward.hidden);
      rs.get("standardize", cfg.standardize_rewards);
    }
    if (s.has("iql")) {
      Section is(s.child("iql"), "iql");
      is.get("gamma", cfg.iql.gamma);
      is.get("tau", cfg.iql.tau);
      is.get("beta", cfg.iql.beta);
      is.get("adv_clip", cfg.iql.adv_clip);
      is.get("polyak", cfg.iql.polyak);
      is.get("steps", cfg.iql.steps);
      is.get("batch_size", cfg.iql.batch_size);
      is.get("lr_value", cfg.iql.lr_value);
      is.get("lr_q", cfg.iql.lr_q);
      is.get("lr_policy", cfg.iql.lr_policy);
      is.get("hidden", cfg.iql.hidden);
    }
    if (s.has("eval")) {
      Section es(s.child("eval"), "eval");
      es.get("episodes", cfg.eval.episodes);
      es.get("n_seeds", cfg.eval.n_seeds);
    }
    if (s.has("baselines")) {
      Section bs(s.child("baselines"), "baselines");
      std::vector<std::string> levels;
      const bool present = bs.has("levels");
      bs.get("levels", levels);
      if (present) {
        cfg.baseline_levels.clear();
        for (const auto& l : levels) {
          try {
            cfg.baseline_levels.push_back(parseOptimalityLevel(l));
          } catch (const Error& e) {
            throw ConfigError("config key 'baselines.levels': " + std::string(e.what()));
          }
        }
      }
    }
    if (s.has("ablation")) {
      Section as(s.child("ablation"), "ablation");
      as.get("p_list", cfg.ablation.p_list);
      as.get("include_proximity", cfg.ablation.include_proximity);
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig loadPipelineConfig(const std::filesystem::path& path) {
  std::string text;
  try {
    text = readFileText(path);
  } catch (const Error& e) {
    throw ConfigError("cannot read config " + path.string() + ": " + e.what());
  }
  return parsePipelineConfig(text);
}

std::string encodePipelineConfig(const PipelineConfig& cfg) {
  json levels = json::array();
  for (auto l : cfg.baseline_levels) levels.push_back(std::string(toString(l)));
  const auto& v = cfg.label.vlm;
  json j = {
      {"env", std::string(toString(cfg.env))},
      {"level", std::string(toString(cfg.level))},
      {"seed", cfg.seed},
      {"out", cfg.out_dir.string()},
      {"dataset", {{"n_traj", cfg.n_traj}}},
      {"pairs", {{"n", cfg.n_pairs}, {"min_gap", cfg.min_gap}}},
      {"label",
       {{"source", sourceKindName(cfg.label.source)},
        {"p", cfg.label.p},
        {"p_max", cfg.label.p_max},
        {"length_scale", cfg.label.length_scale},
        {"tie_tol_fraction", cfg.label.tie_tol_fraction},
        {"task_description", cfg.label.task_description},
        {"prompts", {{"analysis", cfg.label.prompts.analysis}, {"labeling", cfg.label.prompts.labeling}}},
        {"vlm",
         {{"endpoint", v.endpoint},
          {"model", v.model},
          {"api_key_env", v.api_key_env},
          {"timeout_s", v.timeout_s},
          {"max_retries", v.max_retries},
          {"max_in_flight", v.max_in_flight},
          {"cache_dir", v.cache_dir.string()},
          {"temperature", v.temperature},
          {"backoff_base_s", v.backoff_base_s},
          {"backoff_factor", v.backoff_factor}}}}},
      {"reward",
       {{"batch_size", cfg.reward.batch_size},
        {"max_epochs", cfg.reward.max_epochs},
        {"window", cfg.reward.window},
        {"threshold", cfg.reward.threshold},
        {"lr", cfg.reward.lr},
        {"hidden", cfg.reward.hidden},
        {"standardize", cfg.standardize_rewards}}},
      {"iql",
       {{"gamma", cfg.iql.gamma},
        {"tau", cfg.iql.tau},
        {"beta", cfg.iql.beta},
        {"adv_clip", cfg.iql.adv_clip},
        {"polyak", cfg.iql.polyak},
        {"steps", cfg.iql.steps},
        {"batch_size", cfg.iql.batch_size},
        {"lr_value", cfg.iql.lr_value},
        {"lr_q", cfg.iql.lr_q},
        {"lr_policy", cfg.iql.lr_policy},
        {"hidden", cfg.iql.hidden}}},
      {"eval", {{"episodes", cfg.eval.episodes}, {"n_seeds", cfg.eval.n_seeds}}},
      {"baselines", {{"levels", levels}}},
      {"ablation", {{"p_list", cfg.ablation.p_list}, {"include_proximity", cfg.ablation.include_proximity}}},
  };
  return j.dump();
}

}  // namespace offrl
