#include "offrl/preference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "offrl/digest.hpp"
#include "offrl/error.hpp"
#include "offrl/stats.hpp"

namespace offrl {

using nlohmann::json;

std::string LabelSource::tag() const {
  switch (kind) {
    case LabelSourceKind::GtOracle:
      return "GtOracle";
    case LabelSourceKind::FlipNoise: {
      char buf[64];
      std::snprintf(buf, sizeof buf, "FlipNoise(%g)", p);
      return buf;
    }
    case LabelSourceKind::ProximityFlip:
      return "ProximityFlip";
    case LabelSourceKind::Vlm:
      return "VLM";
  }
  return "?";
}

LabelSource LabelSource::parse(std::string_view tag) {
  if (tag == "GtOracle") return {LabelSourceKind::GtOracle, 0.0};
  if (tag == "ProximityFlip") return {LabelSourceKind::ProximityFlip, 0.0};
  if (tag == "VLM") return {LabelSourceKind::Vlm, 0.0};
  if (tag.starts_with("FlipNoise(") && tag.ends_with(")")) {
    const std::string inner(tag.substr(10, tag.size() - 11));
    try {
      std::size_t used = 0;
      const double p = std::stod(inner, &used);
      if (used == inner.size()) return {LabelSourceKind::FlipNoise, p};
    } catch (const std::exception&) {
    }
  }
  throw ParseError("unknown label source '" + std::string(tag) + "'");
}

ObsIndex::ObsIndex(const OfflineDataset& d) : d_(&d), offsets_(d.trajectoryOffsets()) {}

std::size_t ObsIndex::index(ObsRef ref) const {
  if (ref.traj_id + 1 >= offsets_.size()) {
    throw ContractError("observation reference: trajectory " + std::to_string(ref.traj_id) + " out of range");
  }
  const std::size_t i = offsets_[ref.traj_id] + ref.t;
  if (i >= offsets_[ref.traj_id + 1]) {
    throw ContractError("observation reference: step " + std::to_string(ref.t) + " out of range in trajectory " +
                        std::to_string(ref.traj_id));
  }
  return i;
}

std::span<const float> ObsIndex::state(ObsRef ref) const { return d_->transitions[index(ref)].s_next; }

ObsRef ObsIndex::ref(std::size_t index) const {
  const auto& tr = d_->transitions.at(index);
  return {tr.traj_id, tr.t};
}

std::uint64_t countValidPairs(const OfflineDataset& d, int min_gap) {
  const std::uint64_t n = d.size();
  std::uint64_t total = n * (n - (n > 0 ? 1 : 0)) / 2;
  if (min_gap <= 1) return total;
  const auto offsets = d.trajectoryOffsets();
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    const std::uint64_t len = offsets[k + 1] - offsets[k];
    // Same-trajectory pairs with 1 <= gap < min_gap.
    for (std::uint64_t g = 1; g < static_cast<std::uint64_t>(min_gap) && g < len; ++g) total -= len - g;
  }
  return total;
}

namespace {

struct PairKey {
  std::uint64_t lo, hi;
  bool operator==(const PairKey&) const = default;
};

struct PairKeyHash {
  std::size_t operator()(const PairKey& k) const { return std::hash<std::uint64_t>{}(k.lo * 0x9E3779B97F4A7C15ull ^ k.hi); }
};

bool validPair(const OfflineDataset& d, std::size_t i, std::size_t j, int min_gap) {
  const auto& a = d.transitions[i];
  const auto& b = d.transitions[j];
  if (a.traj_id != b.traj_id) return true;
  const long gap = std::labs(static_cast<long>(a.t) - static_cast<long>(b.t));
  return gap >= std::max(min_gap, 1);
}

}  // namespace

std::vector<PreferencePair> samplePairs(const OfflineDataset& d, std::size_t n, int min_gap, std::uint64_t seed) {
  if (n < 1) throw ContractError("samplePairs: n must be >= 1");
  if (min_gap < 0) throw ContractError("samplePairs: min_gap must be >= 0");
  const std::uint64_t valid = countValidPairs(d, min_gap);
  if (valid < n) {
    throw ContractError("samplePairs: requested " + std::to_string(n) + " pairs but only " + std::to_string(valid) +
                        " valid pairs exist with min_gap = " + std::to_string(min_gap));
  }
  Rng rng(seed);
  std::vector<std::pair<std::size_t, std::size_t>> chosen;
  chosen.reserve(n);
  const std::size_t N = d.size();

  if (2 * n > valid) {
    // Dense regime: enumerate and take a partial shuffle.
    std::vector<std::pair<std::size_t, std::size_t>> all;
    all.reserve(valid);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = i + 1; j < N; ++j) {
        if (validPair(d, i, j, min_gap)) all.emplace_back(i, j);
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t r = k + rng.uniformInt(all.size() - k);
      std::swap(all[k], all[r]);
      chosen.push_back(all[k]);
    }
  } else {
    std::unordered_set<PairKey, PairKeyHash> seen;
    seen.reserve(n * 2);
    while (chosen.size() < n) {
      std::size_t i = rng.uniformInt(N);
      std::size_t j = rng.uniformInt(N);
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (!validPair(d, i, j, min_gap)) continue;
      if (!seen.insert({i, j}).second) continue;
      chosen.emplace_back(i, j);
    }
  }

  std::vector<PreferencePair> pairs;
  pairs.reserve(n);
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    auto [i, j] = chosen[k];
    if (rng.bernoulli(0.5)) std::swap(i, j);
    PreferencePair p;
    p.pair_id = k;
    p.obs0 = {d.transitions[i].traj_id, d.transitions[i].t};
    p.obs1 = {d.transitions[j].traj_id, d.transitions[j].t};
    pairs.push_back(p);
  }
  return pairs;
}

PreferenceLabel gtOracleLabel(double r0, double r1, double tie_tol) {
  if (r0 > r1 + tie_tol) return PreferenceLabel::First;
  if (r1 > r0 + tie_tol) return PreferenceLabel::Second;
  return PreferenceLabel::None;
}

PreferenceLabel gtOracleLabel(const PreferencePair& pair, const OfflineDataset& d, const StateRewardFn& reward,
                              double tie_tol) {
  const ObsIndex idx(d);
  const auto s0 = toDouble(idx.state(pair.obs0));
  const auto s1 = toDouble(idx.state(pair.obs1));
  return gtOracleLabel(reward(s0), reward(s1), tie_tol);
}

double defaultTieTolerance(const OfflineDataset& d, double fraction) {
  if (d.size() == 0) return 0.0;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& tr : d.transitions) {
    const double r = stateReward(d.spec, toDouble(tr.s_next));
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  return fraction * (hi - lo);
}

PreferenceLabel applyFlipNoise(PreferenceLabel label, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ContractError("applyFlipNoise: p must lie in [0, 1]");
  const bool flip = rng.uniform() < p;
  if (!flip || label == PreferenceLabel::None) return label;
  return label == PreferenceLabel::First ? PreferenceLabel::Second : PreferenceLabel::First;
}

double pairStateDistance(const PreferencePair& pair, const OfflineDataset& d) {
  const ObsIndex idx(d);
  const auto s0 = idx.state(pair.obs0);
  const auto s1 = idx.state(pair.obs1);
  double sq = 0.0;
  for (std::size_t k = 0; k < s0.size(); ++k) {
    const double diff = static_cast<double>(s0[k]) - s1[k];
    sq += diff * diff;
  }
  return std::sqrt(sq);
}

double proximityFlipProbability(const PreferencePair& pair, const OfflineDataset& d, double p_max,
                                double length_scale) {
  if (!(length_scale > 0.0)) throw ContractError("proximityFlipProbability: length_scale must be positive");
  if (!(p_max >= 0.0 && p_max <= 1.0)) throw ContractError("proximityFlipProbability: p_max must lie in [0, 1]");
  return p_max * std::exp(-pairStateDistance(pair, d) / length_scale);
}

double medianPairDistance(std::span<const PreferencePair> pairs, const OfflineDataset& d) {
  if (pairs.empty()) throw ContractError("medianPairDistance: no pairs");
  std::vector<double> dist;
  dist.reserve(pairs.size());
  for (const auto& p : pairs) dist.push_back(pairStateDistance(p, d));
  return stats::median(dist);
}

std::vector<PreferencePair> labelPairsSynthetic(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                                const SyntheticLabelOptions& opts) {
  if (opts.source.kind == LabelSourceKind::Vlm) throw ContractError("labelPairsSynthetic: VLM is not synthetic");
  const ObsIndex idx(d);
  double length_scale = opts.length_scale;
  if (opts.source.kind == LabelSourceKind::ProximityFlip && length_scale <= 0.0) {
    length_scale = medianPairDistance(pairs, d);
    if (length_scale <= 0.0) length_scale = 1.0;
  }
  Rng rng(opts.seed);
  std::vector<PreferencePair> out(pairs.begin(), pairs.end());
  for (auto& p : out) {
    const double r0 = stateReward(d.spec, toDouble(idx.state(p.obs0)));
    const double r1 = stateReward(d.spec, toDouble(idx.state(p.obs1)));
    PreferenceLabel label = gtOracleLabel(r0, r1, opts.tie_tol);
    switch (opts.source.kind) {
      case LabelSourceKind::FlipNoise:
        label = applyFlipNoise(label, opts.source.p, rng);
        break;
      case LabelSourceKind::ProximityFlip:
        label = applyFlipNoise(label, proximityFlipProbability(p, d, opts.source.p, length_scale), rng);
        break;
      default:
        break;
    }
    p.label = label;
    p.source = opts.source;
    p.raw_response.reset();
  }
  return out;
}

std::vector<PreferencePair> filterTrainable(std::span<const PreferencePair> pairs) {
  std::vector<PreferencePair> out;
  for (const auto& p : pairs) {
    if (p.label && *p.label != PreferenceLabel::None) out.push_back(p);
  }
  return out;
}

PreferenceLabel parseVlmLabel(std::string_view text) {
  static const std::regex kToken(R"((?:^|[^A-Za-z0-9_.\-])(-?[0-9]+(?:\.[0-9]+)?)(?![A-Za-z0-9_]))");
  const std::string s(text);
  std::optional<PreferenceLabel> last;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), kToken); it != std::sregex_iterator(); ++it) {
    const std::string tok = (*it)[1].str();
    if (tok == "0") last = PreferenceLabel::First;
    else if (tok == "1") last = PreferenceLabel::Second;
    else if (tok == "-1") last = PreferenceLabel::None;
  }
  if (last) return *last;

  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (const char* phrase : {"no difference", "no discernible difference", "equally", "unsure"}) {
    if (lower.find(phrase) != std::string::npos) return PreferenceLabel::None;
  }
  throw ParseError("no preference label token in response: '" + s.substr(0, 120) + "'");
}

// --- VLM labelling -----------------------------------------------------------

PromptTemplates PromptTemplates::defaults() {
  PromptTemplates t;
  t.analysis =
      "Task: {task}\n"
      "Two images of the same environment follow. Describe what each image shows, then compare them and say "
      "which one is further along at achieving the task.";
  t.labeling =
      "Task: {task}\n"
      "A comparison of two images of this environment reads:\n"
      "{analysis}\n"
      "Based on that comparison, reply with one number: 0 if the first image is further along at the task, "
      "1 if the second image is, or -1 if there is no discernible difference.";
  return t;
}

namespace {

std::string substitute(std::string text, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace

vlm::ChatRequest buildAnalysisRequest(const Image& image0, const Image& image1, const std::string& task_description,
                                      const PromptTemplates& templates) {
  vlm::ChatMessage m;
  m.role = "user";
  m.content.push_back(vlm::ContentPart::makeText(substitute(templates.analysis, "{task}", task_description)));
  m.content.push_back(vlm::ContentPart::makeImage(vlm::encodePng(image0)));
  m.content.push_back(vlm::ContentPart::makeImage(vlm::encodePng(image1)));
  return {{m}};
}

vlm::ChatRequest buildLabelingRequest(const std::string& analysis, const std::string& task_description,
                                      const PromptTemplates& templates) {
  std::string text = substitute(templates.labeling, "{task}", task_description);
  text = substitute(text, "{analysis}", analysis);
  vlm::ChatMessage m;
  m.role = "user";
  m.content.push_back(vlm::ContentPart::makeText(std::move(text)));
  return {{m}};
}

VlmLabelResult queryVlmPreference(const PreferencePair& pair, const OfflineDataset& d,
                                  const std::string& task_description, const vlm::VlmClient& client,
                                  const PromptTemplates& templates, const Renderer& renderer) {
  const ObsIndex idx(d);
  const Image img0 = renderer(toDouble(idx.state(pair.obs0)));
  const Image img1 = renderer(toDouble(idx.state(pair.obs1)));

  VlmLabelResult res;
  res.analysis_text = client.query(buildAnalysisRequest(img0, img1, task_description, templates)).text;

  const vlm::ChatRequest label_req = buildLabelingRequest(res.analysis_text, task_description, templates);
  const std::string key = vlm::cacheKey(client.config(), label_req);
  vlm::ChatResponse resp = client.cachedQuery(key, label_req);
  const int attempts = 1 + client.config().max_retries;
  for (int attempt = 0;; ++attempt) {
    try {
      res.label = parseVlmLabel(resp.text);
      res.label_text = resp.text;
      if (attempt > 0) client.storeCached(key, resp.text);
      return res;
    } catch (const ParseError&) {
      if (attempt + 1 >= attempts) throw;
    }
    resp = client.chatComplete(label_req);
  }
}

std::vector<PreferencePair> labelPairsVlm(std::span<const PreferencePair> pairs, const OfflineDataset& d,
                                          const std::string& task_description, const vlm::VlmClient& client,
                                          const PromptTemplates& templates, const Renderer& renderer) {
  std::vector<std::optional<PreferencePair>> results(pairs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      try {
        const VlmLabelResult r = queryVlmPreference(pairs[i], d, task_description, client, templates, renderer);
        PreferencePair p = pairs[i];
        p.label = r.label;
        p.source = LabelSource{LabelSourceKind::Vlm, 0.0};
        p.raw_response = "analysis: " + r.analysis_text + "\nlabel: " + r.label_text;
        results[i] = std::move(p);
      } catch (const ParseError& e) {
        spdlog::warn("skipping pair {}: {}", pairs[i].pair_id, e.what());
      } catch (...) {
        std::lock_guard<std::mutex> g(failure_mutex);
        if (!failure) failure = std::current_exception();
        stop.store(true);
      }
    }
  };

  const int n_workers = std::max(1, std::min<int>(client.config().max_in_flight, static_cast<int>(pairs.size())));
  std::vector<std::thread> threads;
  for (int k = 0; k < n_workers; ++k) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);

  std::vector<PreferencePair> out;
  out.reserve(pairs.size());
  for (auto& r : results) {
    if (r) out.push_back(std::move(*r));
  }
  if (out.size() < pairs.size()) spdlog::info("vlm labelled {} of {} pairs", out.size(), pairs.size());
  return out;
}

// --- persistence ---------------------------------------------------------------

namespace {

json refJson(ObsRef r) { return {{"traj", r.traj_id}, {"t", r.t}}; }

ObsRef refFrom(const json& j) { return {j.at("traj").get<std::uint32_t>(), j.at("t").get<std::uint32_t>()}; }

}  // namespace

std::string encodePairsJsonl(std::span<const PreferencePair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j = {{"pair_id", p.pair_id}, {"obs0", refJson(p.obs0)}, {"obs1", refJson(p.obs1)}};
    j["label"] = p.label ? json(static_cast<int>(*p.label)) : json(nullptr);
    j["source"] = p.source ? json(p.source->tag()) : json(nullptr);
    if (p.raw_response) j["raw_response"] = *p.raw_response;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<PreferencePair> decodePairsJsonl(std::string_view text) {
  std::vector<PreferencePair> pairs;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      PreferencePair p;
      p.pair_id = j.at("pair_id").get<std::uint64_t>();
      p.obs0 = refFrom(j.at("obs0"));
      p.obs1 = refFrom(j.at("obs1"));
      if (p.obs0 == p.obs1) throw ParseError("pair compares an observation with itself");
      if (!j.at("label").is_null()) {
        const int v = j.at("label").get<int>();
        if (v < -1 || v > 1) throw ParseError("label " + std::to_string(v) + " is not -1, 0 or 1");
        p.label = static_cast<PreferenceLabel>(v);
      }
      if (!j.at("source").is_null()) p.source = LabelSource::parse(j.at("source").get<std::string>());
      if (j.contains("raw_response")) p.raw_response = j.at("raw_response").get<std::string>();
      pairs.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ParseError("pairs line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("pairs line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

void savePairs(const std::filesystem::path& path, std::span<const PreferencePair> pairs) {
  writeFileText(path, encodePairsJsonl(pairs));
}

std::vector<PreferencePair> loadPairs(const std::filesystem::path& path) { return decodePairsJsonl(readFileText(path)); }

}  // namespace offrl
