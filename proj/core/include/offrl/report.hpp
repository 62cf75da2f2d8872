#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "offrl/rollout.hpp"

namespace offrl {

inline constexpr int kReportFormatVersion = 1;

namespace method {
inline constexpr std::string_view kIqlGt = "IQL-GT";
inline constexpr std::string_view kOfflineRlVlmF = "Offline-RL-VLM-F";
inline constexpr std::string_view kIqlAvgReward = "IQL-AvgReward";
inline constexpr std::string_view kBc = "BC";
}  // namespace method

/// Methods present in the column set but outside this implementation.
std::vector<std::string> unimplementedMethods();

/// One evaluated (env, level, method, label source, seed) cell and the
/// artifacts it came from.
struct ReportCell {
  std::string env;
  std::string dataset_level;
  std::string method;
  /// Empty for methods that use no preference labels.
  std::string label_source;
  int seed = 0;
  std::uint64_t eval_seed = 0;
  EvalReport eval;
  std::string dataset_digest;
  std::optional<std::string> label_digest;
  std::map<std::string, std::string> checkpoint_digests;
  std::map<std::string, double> metrics;
  bool operator==(const ReportCell&) const = default;
};

/// Per-level record of the shared data stages.
struct StageArtifacts {
  std::string dataset_level;
  std::string dataset_path;
  std::string dataset_digest;
  std::string pairs_path;
  int n_pairs = 0;
  /// Label files keyed by label-source tag.
  std::map<std::string, std::string> label_paths;
  std::map<std::string, std::string> label_digests;
  std::map<std::string, int> n_trainable;
  bool operator==(const StageArtifacts&) const = default;
};

struct RunReport {
  std::string kind;
  std::string config;
  std::vector<StageArtifacts> stages;
  std::vector<ReportCell> cells;
  std::vector<std::string> unimplemented_methods;
  bool operator==(const RunReport&) const = default;
};

/// Seed-level aggregate of one (level, method, label source) group.
struct GroupSummary {
  std::vector<int> seeds;
  std::vector<double> seed_means;
  double mean = 0.0;
  /// Population std of the per-seed mean returns.
  double std = 0.0;
  std::optional<double> success_rate;
};

GroupSummary summarize(const RunReport& r, std::string_view level, std::string_view method,
                       std::string_view label_source);

std::string encodeReportJson(const RunReport& r);
/// Columns: env, dataset_level, method, label_source, seed, mean_return,
/// std_return, success_rate. Floats use %.17g; absent values are empty.
std::string encodeSummaryCsv(const RunReport& r);
/// report.json and summary.csv inside dir.
void writeReport(const RunReport& r, const std::filesystem::path& dir);
/// Parses and validates report.json text; throws ParseError on schema violations.
RunReport decodeReportJson(std::string_view text);
RunReport readReport(const std::filesystem::path& dir);

}  // namespace offrl
