#include "offrl/dataset.hpp"

#include <bit>
#include <cmath>
#include <string>

#include <json.hpp>

#include "offrl/digest.hpp"
#include "offrl/error.hpp"

namespace offrl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view toString(RewardStatus status) {
  switch (status) {
    case RewardStatus::Unlabeled: return "Unlabeled";
    case RewardStatus::GroundTruth: return "GroundTruth";
    case RewardStatus::Learned: return "Learned";
    case RewardStatus::Constant: return "Constant";
  }
  return "?";
}

RewardStatus parseRewardStatus(std::string_view name) {
  for (auto s : {RewardStatus::Unlabeled, RewardStatus::GroundTruth, RewardStatus::Learned, RewardStatus::Constant}) {
    if (toString(s) == name) return s;
  }
  throw ContractError("unknown reward status '" + std::string(name) + "'");
}

std::size_t OfflineDataset::trajectoryCount() const {
  return transitions.empty() ? 0 : static_cast<std::size_t>(transitions.back().traj_id) + 1;
}

std::vector<std::size_t> OfflineDataset::trajectoryOffsets() const {
  std::vector<std::size_t> offsets;
  for (std::size_t i = 0; i < transitions.size(); ++i) {
    if (i == 0 || transitions[i].traj_id != transitions[i - 1].traj_id) offsets.push_back(i);
  }
  offsets.push_back(transitions.size());
  return offsets;
}

std::vector<double> toDouble(std::span<const float> xs) { return {xs.begin(), xs.end()}; }

void validateDataset(const OfflineDataset& d) {
  d.spec.validate();
  if (d.transitions.empty()) throw InvariantError("dataset has no transitions");
  const auto sd = static_cast<std::size_t>(d.spec.state_dim);
  const auto ad = static_cast<std::size_t>(d.spec.action_dim);
  bool any_reward = false, all_reward = true;
  for (std::size_t i = 0; i < d.transitions.size(); ++i) {
    const Transition& tr = d.transitions[i];
    const std::string where = "transition " + std::to_string(i);
    if (tr.s.size() != sd || tr.s_next.size() != sd || tr.a.size() != ad) {
      throw InvariantError(where + ": vector dimensions do not match the env spec");
    }
    any_reward = any_reward || tr.r.has_value();
    all_reward = all_reward && tr.r.has_value();
    const bool first = i == 0 || d.transitions[i - 1].traj_id != tr.traj_id;
    if (first) {
      const std::uint32_t expected = i == 0 ? 0 : d.transitions[i - 1].traj_id + 1;
      if (tr.traj_id != expected) throw InvariantError(where + ": trajectory ids must be contiguous from 0");
      if (tr.t != 0) throw InvariantError(where + ": trajectory must start at t = 0");
    } else {
      const Transition& prev = d.transitions[i - 1];
      if (tr.t != prev.t + 1) throw InvariantError(where + ": step index not consecutive");
      if (prev.done) throw InvariantError(where + ": done set before the last transition");
      if (prev.s_next != tr.s) throw InvariantError(where + ": s_next of previous step differs from s");
    }
  }
  if (any_reward && !all_reward) throw InvariantError("reward column partially filled");
  if ((d.reward_status == RewardStatus::Unlabeled) != !any_reward) {
    throw InvariantError("reward_status " + std::string(toString(d.reward_status)) +
                         " inconsistent with reward column");
  }
}

namespace {

void putU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void putF32(std::vector<std::uint8_t>& out, float f) { putU32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::uint8_t u8() { return bytes_[pos_++]; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t transitionRecordSize(const EnvSpec& spec) {
  return 4 + 4 + 4 * 2 * static_cast<std::size_t>(spec.state_dim) + 4 * static_cast<std::size_t>(spec.action_dim) +
         1 + 4 + 1;
}

std::vector<std::uint8_t> encodeTransitions(const OfflineDataset& d) {
  std::vector<std::uint8_t> out;
  out.reserve(d.transitions.size() * transitionRecordSize(d.spec));
  for (const Transition& tr : d.transitions) {
    putU32(out, tr.traj_id);
    putU32(out, tr.t);
    for (float v : tr.s) putF32(out, v);
    for (float v : tr.a) putF32(out, v);
    out.push_back(tr.r.has_value() ? 1 : 0);
    putF32(out, tr.r.value_or(0.0f));
    for (float v : tr.s_next) putF32(out, v);
    out.push_back(tr.done ? 1 : 0);
  }
  return out;
}

std::string encodeManifest(const OfflineDataset& d) {
  json m;
  m["format_version"] = kDatasetFormatVersion;
  m["env_id"] = std::string(toString(d.spec.id));
  m["state_dim"] = d.spec.state_dim;
  m["action_dim"] = d.spec.action_dim;
  m["n_transitions"] = d.transitions.size();
  m["n_trajectories"] = d.trajectoryCount();
  m["reward_status"] = std::string(toString(d.reward_status));
  m["dtype"] = std::string(kDatasetDtype);
  return m.dump();
}

void saveDataset(const OfflineDataset& d, const fs::path& dir) {
  validateDataset(d);
  fs::create_directories(dir);
  writeFileBytes(dir / "transitions.bin", encodeTransitions(d));
  writeFileText(dir / "manifest.json", encodeManifest(d));
}

OfflineDataset loadDataset(const fs::path& dir) {
  json m;
  try {
    m = json::parse(readFileText(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw ParseError("dataset manifest: " + std::string(e.what()));
  }
  try {
    const int version = m.at("format_version").get<int>();
    if (version != kDatasetFormatVersion) {
      throw VersionError("dataset format_version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kDatasetFormatVersion) + ")");
    }
    if (m.at("dtype").get<std::string>() != kDatasetDtype) throw CorruptionError("dataset dtype must be f32le");

    OfflineDataset d;
    d.spec = EnvSpec::make(parseEnvId(m.at("env_id").get<std::string>()));
    if (m.at("state_dim").get<int>() != d.spec.state_dim || m.at("action_dim").get<int>() != d.spec.action_dim) {
      throw InvariantError("manifest dimensions do not match env " + std::string(toString(d.spec.id)));
    }
    d.reward_status = parseRewardStatus(m.at("reward_status").get<std::string>());
    const auto n = m.at("n_transitions").get<std::size_t>();
    const auto n_traj = m.at("n_trajectories").get<std::size_t>();
    if (n == 0) throw InvariantError("manifest declares n_transitions = 0");

    const auto bytes = readFileBytes(dir / "transitions.bin");
    const std::size_t expected = n * transitionRecordSize(d.spec);
    if (bytes.size() != expected) {
      throw CorruptionError("transitions.bin has " + std::to_string(bytes.size()) + " bytes, expected " +
                            std::to_string(expected));
    }
    Reader rd(bytes);
    d.transitions.resize(n);
    for (Transition& tr : d.transitions) {
      tr.traj_id = rd.u32();
      tr.t = rd.u32();
      tr.s.resize(d.spec.state_dim);
      for (float& v : tr.s) v = rd.f32();
      tr.a.resize(d.spec.action_dim);
      for (float& v : tr.a) v = rd.f32();
      const bool present = rd.u8() != 0;
      const float r = rd.f32();
      if (present) tr.r = r;
      tr.s_next.resize(d.spec.state_dim);
      for (float& v : tr.s_next) v = rd.f32();
      tr.done = rd.u8() != 0;
    }
    validateDataset(d);
    if (d.trajectoryCount() != n_traj) {
      throw CorruptionError("manifest declares " + std::to_string(n_traj) + " trajectories, payload has " +
                            std::to_string(d.trajectoryCount()));
    }
    return d;
  } catch (const json::exception& e) {
    throw ParseError("dataset manifest: " + std::string(e.what()));
  }
}

std::string datasetDigest(const OfflineDataset& d) {
  return Sha256().field(encodeManifest(d)).field(encodeTransitions(d)).hex();
}

OfflineDataset relabelRewards(const OfflineDataset& d, const StateRewardFn& rewardFn, RewardStatus status) {
  OfflineDataset out = d;
  out.reward_status = status;
  std::vector<double> buf;
  for (Transition& tr : out.transitions) {
    buf.assign(tr.s_next.begin(), tr.s_next.end());
    tr.r = static_cast<float>(rewardFn(buf));
  }
  return out;
}

OfflineDataset relabelGroundTruth(const OfflineDataset& d) {
  const EnvSpec spec = d.spec;
  return relabelRewards(d, [spec](std::span<const double> s) { return stateReward(spec, s); },
                        RewardStatus::GroundTruth);
}

OfflineDataset labelConstantAverage(const OfflineDataset& d, const TransitionRewardFn& gtRewardFn) {
  if (d.transitions.empty()) throw InvariantError("dataset has no transitions");
  double sum = 0.0;
  for (const Transition& tr : d.transitions) sum += gtRewardFn(toDouble(tr.s), toDouble(tr.a));
  const auto avg = static_cast<float>(sum / static_cast<double>(d.transitions.size()));
  OfflineDataset out = d;
  out.reward_status = RewardStatus::Constant;
  for (Transition& tr : out.transitions) tr.r = avg;
  return out;
}

OfflineDataset standardizeRewards(const OfflineDataset& d) {
  if (d.reward_status == RewardStatus::Unlabeled) throw ContractError("standardizeRewards: dataset is unlabeled");
  double sum = 0.0, sq = 0.0;
  for (const Transition& tr : d.transitions) sum += *tr.r;
  const double mean = sum / static_cast<double>(d.size());
  for (const Transition& tr : d.transitions) sq += (*tr.r - mean) * (*tr.r - mean);
  const double sd = std::sqrt(sq / static_cast<double>(d.size()));
  OfflineDataset out = d;
  for (Transition& tr : out.transitions) tr.r = static_cast<float>(sd > 0.0 ? (*tr.r - mean) / sd : 0.0);
  return out;
}

}  // namespace offrl
