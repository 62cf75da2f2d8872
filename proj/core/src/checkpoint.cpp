#include "offrl/checkpoint.hpp"

#include <bit>
#include <string>

#include <json.hpp>

#include "offrl/digest.hpp"
#include "offrl/error.hpp"

namespace offrl::nn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void putF32(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

double getF32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  pos += 4;
  return static_cast<double>(std::bit_cast<float>(bits));
}

void encodeMlpInto(std::vector<std::uint8_t>& out, const MLPParams& p) {
  for (const auto& l : p.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) putF32(out, l.weight(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) putF32(out, l.bias[r]);
  }
}

void decodeMlpFrom(const std::vector<std::uint8_t>& in, std::size_t& pos, MLPParams& p) {
  for (auto& l : p.layers) {
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = getF32(in, pos);
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = getF32(in, pos);
  }
}

json mlpManifest(const MLPParams& p, const char* kind) {
  json m;
  m["format_version"] = kCheckpointFormatVersion;
  m["kind"] = kind;
  m["sizes"] = p.sizes();
  m["output_activation"] = p.output == Activation::Tanh ? "tanh" : "identity";
  m["dtype"] = "f32le";
  return m;
}

json readManifest(const fs::path& dir, const char* kind) {
  json m;
  try {
    m = json::parse(readFileText(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint manifest: " + std::string(e.what()));
  }
  if (m.value("format_version", 0) != kCheckpointFormatVersion) {
    throw VersionError("checkpoint format_version not supported in " + dir.string());
  }
  if (m.value("kind", std::string()) != kind) {
    throw ContractError("checkpoint in " + dir.string() + " is not a " + kind);
  }
  return m;
}

MLPParams shapeFromManifest(const json& m) {
  const Activation act = m.at("output_activation").get<std::string>() == "tanh" ? Activation::Tanh
                                                                                 : Activation::Identity;
  return MLPParams::zeros(m.at("sizes").get<std::vector<int>>(), act);
}

std::vector<std::uint8_t> readBlob(const fs::path& dir, std::size_t n_params) {
  auto bytes = readFileBytes(dir / "weights.bin");
  if (bytes.size() != 4 * n_params) {
    throw CorruptionError("weights.bin has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(4 * n_params));
  }
  return bytes;
}

}  // namespace

std::vector<std::uint8_t> encodeWeights(const MLPParams& p) {
  std::vector<std::uint8_t> out;
  out.reserve(4 * p.parameterCount());
  encodeMlpInto(out, p);
  return out;
}

void saveCheckpoint(const fs::path& dir, const MLPParams& p) {
  if (!p.finite()) throw InvariantError("refusing to checkpoint non-finite parameters");
  json m = mlpManifest(p, "mlp");
  m["n_params"] = p.parameterCount();
  fs::create_directories(dir);
  writeFileBytes(dir / "weights.bin", encodeWeights(p));
  writeFileText(dir / "manifest.json", m.dump());
}

void saveCheckpoint(const fs::path& dir, const GaussianPolicyParams& p) {
  if (!p.mean_net.finite() || !p.log_std.allFinite()) throw InvariantError("refusing to checkpoint non-finite policy");
  json m = mlpManifest(p.mean_net, "gaussian_policy");
  m["n_params"] = p.mean_net.parameterCount() + static_cast<std::size_t>(p.log_std.size());
  m["action_low"] = std::vector<double>(p.action_low.data(), p.action_low.data() + p.action_low.size());
  m["action_high"] = std::vector<double>(p.action_high.data(), p.action_high.data() + p.action_high.size());
  m["squash_mean"] = p.squash_mean;
  std::vector<std::uint8_t> blob = encodeWeights(p.mean_net);
  for (Eigen::Index j = 0; j < p.log_std.size(); ++j) putF32(blob, p.log_std[j]);
  fs::create_directories(dir);
  writeFileBytes(dir / "weights.bin", blob);
  writeFileText(dir / "manifest.json", m.dump());
}

MLPParams loadMlp(const fs::path& dir) {
  const json m = readManifest(dir, "mlp");
  MLPParams p = shapeFromManifest(m);
  const auto bytes = readBlob(dir, p.parameterCount());
  std::size_t pos = 0;
  decodeMlpFrom(bytes, pos, p);
  return p;
}

GaussianPolicyParams loadGaussianPolicy(const fs::path& dir) {
  const json m = readManifest(dir, "gaussian_policy");
  GaussianPolicyParams p;
  p.mean_net = shapeFromManifest(m);
  const auto low = m.at("action_low").get<std::vector<double>>();
  const auto high = m.at("action_high").get<std::vector<double>>();
  const int ad = p.mean_net.outDim();
  if (low.size() != static_cast<std::size_t>(ad) || high.size() != static_cast<std::size_t>(ad)) {
    throw CorruptionError("policy checkpoint action bounds do not match output size");
  }
  p.action_low = Eigen::Map<const Eigen::VectorXd>(low.data(), ad);
  p.action_high = Eigen::Map<const Eigen::VectorXd>(high.data(), ad);
  p.squash_mean = m.at("squash_mean").get<bool>();
  p.log_std.resize(ad);
  const auto bytes = readBlob(dir, p.mean_net.parameterCount() + static_cast<std::size_t>(ad));
  std::size_t pos = 0;
  decodeMlpFrom(bytes, pos, p.mean_net);
  for (int j = 0; j < ad; ++j) p.log_std[j] = getF32(bytes, pos);
  return p;
}

MLPParams roundToF32(const MLPParams& p) {
  MLPParams out = p;
  for (auto& l : out.layers) {
    l.weight = l.weight.cast<float>().cast<double>();
    l.bias = l.bias.cast<float>().cast<double>();
  }
  return out;
}

GaussianPolicyParams roundToF32(const GaussianPolicyParams& p) {
  GaussianPolicyParams out = p;
  out.mean_net = roundToF32(p.mean_net);
  out.log_std = p.log_std.cast<float>().cast<double>();
  return out;
}

}  // namespace offrl::nn
