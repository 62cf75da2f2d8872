#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "offrl/nn.hpp"

namespace offrl::nn {

inline constexpr int kCheckpointFormatVersion = 1;

// A checkpoint is a directory holding manifest.json (architecture) and
// weights.bin (flat f32 little-endian: per layer the weight matrix row-major,
// then the bias; a policy appends log_std). Values are rounded to f32.

void saveCheckpoint(const std::filesystem::path& dir, const MLPParams& p);
void saveCheckpoint(const std::filesystem::path& dir, const GaussianPolicyParams& p);

MLPParams loadMlp(const std::filesystem::path& dir);
GaussianPolicyParams loadGaussianPolicy(const std::filesystem::path& dir);

std::vector<std::uint8_t> encodeWeights(const MLPParams& p);

/// Parameters as they will read back from disk (every value rounded to f32).
MLPParams roundToF32(const MLPParams& p);
GaussianPolicyParams roundToF32(const GaussianPolicyParams& p);

}  // namespace offrl::nn
