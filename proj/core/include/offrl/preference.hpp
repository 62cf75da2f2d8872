#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "offrl/dataset.hpp"
#include "offrl/render.hpp"
#include "offrl/rng.hpp"
#include "offrl/vlm_client.hpp"

namespace offrl {

/// Reference to the observation s_next of transition (traj_id, t).
struct ObsRef {
  std::uint32_t traj_id = 0;
  std::uint32_t t = 0;
  auto operator<=>(const ObsRef&) const = default;
};

/// 0: first observation preferred, 1: second preferred, -1: incomparable.
enum class PreferenceLabel : int { First = 0, Second = 1, None = -1 };

enum class LabelSourceKind { GtOracle, FlipNoise, ProximityFlip, Vlm };

struct LabelSource {
  LabelSourceKind kind = LabelSourceKind::GtOracle;
  /// FlipNoise: flip probability. ProximityFlip: p_max.
  double p = 0.0;

  /// "GtOracle", "FlipNoise(0.25)", "ProximityFlip", "VLM"
  std::string tag() const;
  static LabelSource parse(std::string_view tag);
  bool operator==(const LabelSource&) const = default;
};

struct PreferencePair {
  std::uint64_t pair_id = 0;
  ObsRef obs0;
  ObsRef obs1;
  std::optional<PreferenceLabel> label;
  std::optional<LabelSource> source;
  std::optional<std::string> raw_response;
  bool operator==(const PreferencePair&) const = default;
};

/// O(1) lookup from ObsRef to transition index.
class ObsIndex {
 public:
  explicit ObsIndex(const OfflineDataset& d);
  std::size_t index(ObsRef ref) const;
  std::span<const float> state(ObsRef ref) const;
  ObsRef ref(std::size_t index) const;

 private:
  const OfflineDataset* d_;
  std::vector<std::size_t> offsets_;
};

/// Number of unordered observation pairs that satisfy min_gap.
std::uint64_t countValidPairs(const OfflineDataset& d, int min_gap);

/// Draws n distinct unordered pairs uniformly from the valid set. Pairs inside
/// one trajectory must satisfy |t0 - t1| >= min_gap; cross-trajectory pairs are
/// always valid. Throws ContractError when fewer than n valid pairs exist.
std::vector<PreferencePair> samplePairs(const OfflineDataset& d, std::size_t n, int min_gap, std::uint64_t seed);

PreferenceLabel gtOracleLabel(double r0, double r1, double tie_tol);
PreferenceLabel gtOracleLabel(const PreferencePair& pair, const OfflineDataset& d, const StateRewardFn& reward,
                              double tie_tol);

/// tie_tol default: `fraction` of the range of stateReward over the dataset's s_next.
double defaultTieTolerance(const OfflineDataset& d, double fraction = 0.01);

/// Swaps First/Second with probability p; None is never flipped. Always
/// consumes exactly one uniform draw so streams stay aligned across p.
PreferenceLabel applyFlipNoise(PreferenceLabel label, double p, Rng& rng);

/// p_max * exp(-||s0 - s1|| / length_scale).
double proximityFlipProbability(const PreferencePair& pair, const OfflineDataset& d, double p_max,
                                double length_scale);

double pairStateDistance(const PreferencePair& pair, const OfflineDataset& d);
/// Median state distance over the pairs (the default proximity length scale).
double medianPairDistance(std::span<const PreferencePair> pairs, const OfflineDataset& d);

struct SyntheticLabelOptions {
  LabelSource source;
  double tie_tol = 0.0;
  /// ProximityFlip length scale; <= 0 selects medianPairDistance.
  double length_scale = 0.0;
  std::uint64_t seed = 0;
};

/// Ground-truth oracle labels, optionally corrupted by flip or proximity noise.
std::vector<PreferencePair> labelPairsSynthetic(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                                const SyntheticLabelOptions& opts);

/// Drops None labels (and unlabeled pairs); order preserved.
std::vector<PreferencePair> filterTrainable(std::span<const PreferencePair> pairs);

/// Final standalone -1/0/1 token of a VLM reply. Replies without a token but
/// stating there is no difference map to None. Anything else is a ParseError.
PreferenceLabel parseVlmLabel(std::string_view text);

// --- VLM labelling -----------------------------------------------------------

/// Two-stage prompt pair. `{task}` and `{analysis}` are substituted.
struct PromptTemplates {
  std::string analysis;
  std::string labeling;
  static PromptTemplates defaults();
};

using Renderer = std::function<Image(std::span<const double> state)>;

struct VlmLabelResult {
  PreferenceLabel label = PreferenceLabel::None;
  std::string analysis_text;
  std::string label_text;
};

/// Analysis query with both images, then a text-only labelling query that
/// carries the analysis. Both go through the client cache.
VlmLabelResult queryVlmPreference(const PreferencePair& pair, const OfflineDataset& d,
                                  const std::string& task_description, const vlm::VlmClient& client,
                                  const PromptTemplates& templates, const Renderer& renderer);

vlm::ChatRequest buildAnalysisRequest(const Image& image0, const Image& image1, const std::string& task_description,
                                      const PromptTemplates& templates);
vlm::ChatRequest buildLabelingRequest(const std::string& analysis, const std::string& task_description,
                                      const PromptTemplates& templates);

/// Labels every pair through the VLM with up to max_in_flight pairs in
/// progress. Pairs whose reply cannot be parsed are skipped and logged.
/// Output order follows the input order.
std::vector<PreferencePair> labelPairsVlm(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                          const std::string& task_description, const vlm::VlmClient& client,
                                          const PromptTemplates& templates, const Renderer& renderer);

// --- persistence ---------------------------------------------------------------

/// JSON-lines, one pair per line.
std::string encodePairsJsonl(std::span<const PreferencePair> pairs);
std::vector<PreferencePair> decodePairsJsonl(std::string_view text);
void savePairs(const std::filesystem::path& path, std::span<const PreferencePair> pairs);
std::vector<PreferencePair> loadPairs(const std::filesystem::path& path);

}  // namespace offrl
