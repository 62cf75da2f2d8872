#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "offrl/error.hpp"
#include "offrl/preference.hpp"
#include "offrl/rollout.hpp"
#include "tmpdir.hpp"

using namespace offrl;
using offrl::testing::TempDir;

namespace {

OfflineDataset singleTrajectory(int length) {
  auto d = generateDataset(EnvSpec::make(EnvId::PointMass2D), OptimalityLevel::Random, 1, 8);
  d.transitions.resize(length);
  d.transitions.back().done = true;
  return d;
}

OfflineDataset pointMass(int n_traj, std::uint64_t seed = 21) {
  return generateDataset(EnvSpec::make(EnvId::PointMass2D), OptimalityLevel::Random, n_traj, seed);
}

PreferencePair pairOf(ObsRef a, ObsRef b) {
  PreferencePair p;
  p.obs0 = a;
  p.obs1 = b;
  return p;
}

std::pair<std::size_t, std::size_t> unordered(const PreferencePair& p, const ObsIndex& idx) {
  const auto a = idx.index(p.obs0), b = idx.index(p.obs1);
  return {std::min(a, b), std::max(a, b)};
}

}  // namespace

TEST(SamplePairs, NoValidPairThrowsNamingBound) {
  const auto d = singleTrajectory(10);
  EXPECT_EQ(countValidPairs(d, 10), 0u);
  try {
    samplePairs(d, 1, 10, 0);
    FAIL();
  } catch (const ContractError& e) {
    EXPECT_NE(std::string(e.what()).find("min_gap = 10"), std::string::npos) << e.what();
  }
}

TEST(SamplePairs, ExhaustiveWithoutGap) {
  const auto d = singleTrajectory(10);
  const auto pairs = samplePairs(d, 45, 0, 3);
  ASSERT_EQ(pairs.size(), 45u);
  const ObsIndex idx(d);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& p : pairs) {
    EXPECT_NE(p.obs0, p.obs1);
    EXPECT_TRUE(seen.insert(unordered(p, idx)).second);
  }
  EXPECT_EQ(seen.size(), 45u);
  EXPECT_THROW(samplePairs(d, 46, 0, 3), ContractError);
}

TEST(SamplePairs, GapRespectedExhaustively) {
  const auto d = singleTrajectory(10);
  // |dt| >= 5 on ten steps: 5 + 4 + 3 + 2 + 1.
  ASSERT_EQ(countValidPairs(d, 5), 15u);
  const auto pairs = samplePairs(d, 15, 5, 4);
  std::set<std::pair<int, int>> seen;
  for (const auto& p : pairs) {
    EXPECT_GE(std::abs(static_cast<int>(p.obs0.t) - static_cast<int>(p.obs1.t)), 5);
    seen.insert({std::min(p.obs0.t, p.obs1.t), std::max(p.obs0.t, p.obs1.t)});
  }
  std::set<std::pair<int, int>> expected;
  for (int a = 0; a < 10; ++a)
    for (int b = a + 5; b < 10; ++b) expected.insert({a, b});
  EXPECT_EQ(seen, expected);
}

TEST(SamplePairs, CrossTrajectoryPairsAlwaysValid) {
  auto d = pointMass(2);
  EXPECT_EQ(countValidPairs(d, 1000), 50u * 50u);
  for (const auto& p : samplePairs(d, 200, 1000, 5)) EXPECT_NE(p.obs0.traj_id, p.obs1.traj_id);
}

TEST(SamplePairs, SeededAndDistinct) {
  const auto d = pointMass(20);
  const auto a = samplePairs(d, 500, 5, 77);
  EXPECT_EQ(a, samplePairs(d, 500, 5, 77));
  EXPECT_NE(a, samplePairs(d, 500, 5, 78));
  const ObsIndex idx(d);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pair_id, i);
    EXPECT_FALSE(a[i].label.has_value());
    EXPECT_TRUE(seen.insert(unordered(a[i], idx)).second);
    if (a[i].obs0.traj_id == a[i].obs1.traj_id) {
      EXPECT_GE(std::abs(static_cast<int>(a[i].obs0.t) - static_cast<int>(a[i].obs1.t)), 5);
    }
  }
}

TEST(GtOracle, Examples) {
  EXPECT_EQ(gtOracleLabel(1.0, 0.2, 0.01), PreferenceLabel::First);
  EXPECT_EQ(gtOracleLabel(0.2, 1.0, 0.01), PreferenceLabel::Second);
  EXPECT_EQ(gtOracleLabel(0.5, 0.5, 0.01), PreferenceLabel::None);
  EXPECT_EQ(gtOracleLabel(0.5, 0.505, 0.01), PreferenceLabel::None);
}

TEST(GtOracle, Antisymmetric) {
  const auto d = pointMass(5);
  const auto reward = [&](std::span<const double> s) { return stateReward(d.spec, s); };
  const double tol = defaultTieTolerance(d);
  for (const auto& p : samplePairs(d, 200, 5, 1)) {
    const auto fwd = gtOracleLabel(p, d, reward, tol);
    const auto rev = gtOracleLabel(pairOf(p.obs1, p.obs0), d, reward, tol);
    if (fwd == PreferenceLabel::None) {
      EXPECT_EQ(rev, PreferenceLabel::None);
    } else {
      EXPECT_NE(fwd, rev);
      EXPECT_NE(rev, PreferenceLabel::None);
    }
  }
}

TEST(GtOracle, DefaultTieToleranceIsOnePercentOfRange) {
  const auto d = pointMass(5);
  double lo = 1e9, hi = -1e9;
  for (const auto& tr : d.transitions) {
    const double r = -std::hypot(tr.s_next[0], tr.s_next[1]);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  EXPECT_NEAR(defaultTieTolerance(d), 0.01 * (hi - lo), 1e-7);
}

TEST(FlipNoise, Endpoints) {
  Rng rng(1);
  for (auto l : {PreferenceLabel::First, PreferenceLabel::Second, PreferenceLabel::None}) {
    EXPECT_EQ(applyFlipNoise(l, 0.0, rng), l);
  }
  EXPECT_EQ(applyFlipNoise(PreferenceLabel::First, 1.0, rng), PreferenceLabel::Second);
  EXPECT_EQ(applyFlipNoise(PreferenceLabel::Second, 1.0, rng), PreferenceLabel::First);
  EXPECT_EQ(applyFlipNoise(PreferenceLabel::None, 1.0, rng), PreferenceLabel::None);
}

TEST(FlipNoise, HalfFlipsAboutHalf) {
  Rng rng(2);
  int flipped = 0;
  for (int i = 0; i < 10000; ++i) flipped += applyFlipNoise(PreferenceLabel::First, 0.5, rng) == PreferenceLabel::Second;
  EXPECT_GE(flipped, 4700);
  EXPECT_LE(flipped, 5300);
}

TEST(FlipNoise, FlipsAreNestedAcrossP) {
  // One uniform per label keeps the streams aligned, so a flip at p implies a flip at any larger p.
  const auto d = pointMass(10);
  const auto pairs = samplePairs(d, 400, 5, 3);
  auto labels = [&](double p) {
    SyntheticLabelOptions o;
    o.source = {LabelSourceKind::FlipNoise, p};
    o.tie_tol = defaultTieTolerance(d);
    o.seed = 99;
    return labelPairsSynthetic(pairs, d, o);
  };
  const auto clean = labels(0.0), low = labels(0.25), high = labels(0.5);
  int n_low = 0, n_high = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const bool fl = low[i].label != clean[i].label;
    const bool fh = high[i].label != clean[i].label;
    if (fl) {
      EXPECT_TRUE(fh);
    }
    n_low += fl;
    n_high += fh;
    if (*clean[i].label == PreferenceLabel::None) {
      EXPECT_EQ(*high[i].label, PreferenceLabel::None);
    }
  }
  EXPECT_LT(n_low, n_high);
  EXPECT_EQ(low[0].source->tag(), "FlipNoise(0.25)");
}

TEST(ProximityFlip, ClosedForms) {
  auto d = singleTrajectory(10);
  const auto p = pairOf({0, 2}, {0, 7});
  const double dist = pairStateDistance(p, d);
  ASSERT_GT(dist, 0.0);
  EXPECT_NEAR(proximityFlipProbability(p, d, 0.9, dist), 0.9 / std::exp(1.0), 1e-12);
  EXPECT_NEAR(0.9 / std::exp(1.0), 0.3311, 1e-4);
  EXPECT_NEAR(proximityFlipProbability(p, d, 0.9, dist * 1e-6), 0.0, 1e-12);
  d.transitions[7].s_next = d.transitions[2].s_next;
  EXPECT_DOUBLE_EQ(proximityFlipProbability(p, d, 0.9, 1.0), 0.9);
}

TEST(ProximityFlip, MonotoneAndBounded) {
  const auto d = pointMass(10);
  auto pairs = samplePairs(d, 300, 5, 6);
  std::sort(pairs.begin(), pairs.end(),
            [&](const auto& a, const auto& b) { return pairStateDistance(a, d) < pairStateDistance(b, d); });
  double prev = 1.0;
  for (const auto& p : pairs) {
    const double q = proximityFlipProbability(p, d, 0.9, 0.3);
    EXPECT_LE(q, prev);
    EXPECT_GE(q, 0.0);
    EXPECT_LE(q, 0.9);
    prev = q;
  }
}

TEST(ProximityFlip, MedianLengthScale) {
  const auto d = pointMass(10);
  const auto pairs = samplePairs(d, 301, 5, 6);
  std::vector<double> dist;
  for (const auto& p : pairs) dist.push_back(pairStateDistance(p, d));
  std::nth_element(dist.begin(), dist.begin() + 150, dist.end());
  EXPECT_DOUBLE_EQ(medianPairDistance(pairs, d), dist[150]);
}

TEST(FilterTrainable, Cases) {
  std::vector<PreferencePair> all_none(3);
  for (auto& p : all_none) p.label = PreferenceLabel::None;
  EXPECT_TRUE(filterTrainable(all_none).empty());

  std::vector<PreferencePair> clean(4);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    clean[i].pair_id = i;
    clean[i].label = i % 2 ? PreferenceLabel::First : PreferenceLabel::Second;
  }
  EXPECT_EQ(filterTrainable(clean), clean);

  auto mixed = clean;
  mixed[1].label = PreferenceLabel::None;
  mixed.push_back(all_none[0]);
  const auto kept = filterTrainable(mixed);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_EQ(kept[0].pair_id, 0u);
  EXPECT_EQ(kept[1].pair_id, 2u);
  EXPECT_EQ(kept[2].pair_id, 3u);
}

TEST(ParseVlmLabel, Examples) {
  EXPECT_EQ(parseVlmLabel("after comparing, so the answer is 1"), PreferenceLabel::Second);
  EXPECT_EQ(parseVlmLabel("-1"), PreferenceLabel::None);
  EXPECT_EQ(parseVlmLabel("images 0 and 1 are shown; verdict: 0"), PreferenceLabel::First);
  EXPECT_EQ(parseVlmLabel("0"), PreferenceLabel::First);
  EXPECT_EQ(parseVlmLabel("Label: 1."), PreferenceLabel::Second);
  EXPECT_EQ(parseVlmLabel("There is no difference between them."), PreferenceLabel::None);
}

TEST(ParseVlmLabel, IgnoresEmbeddedDigits) {
  // Digits inside numbers, identifiers and decimals are not tokens.
  EXPECT_EQ(parseVlmLabel("answer 0 (image_1 at x=0.15 is worse, frame 10)"), PreferenceLabel::First);
  EXPECT_EQ(parseVlmLabel("1, not 2"), PreferenceLabel::Second);
  EXPECT_THROW(parseVlmLabel("I cannot tell from image2."), ParseError);
  EXPECT_THROW(parseVlmLabel(""), ParseError);
}

TEST(PairsJsonl, RoundTrip) {
  const auto d = pointMass(4);
  SyntheticLabelOptions o;
  o.source = {LabelSourceKind::FlipNoise, 0.25};
  o.tie_tol = defaultTieTolerance(d);
  auto pairs = labelPairsSynthetic(samplePairs(d, 50, 5, 1), d, o);
  pairs[3].raw_response = "analysis: it is\n\"quoted\"\nlabel: 0";
  pairs[4].label.reset();
  pairs[4].source.reset();
  TempDir dir;
  savePairs(dir / "pairs.jsonl", pairs);
  EXPECT_EQ(loadPairs(dir / "pairs.jsonl"), pairs);
  const std::string text = encodePairsJsonl(pairs);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 50);
  EXPECT_NE(text.find("\"obs0\":{\"t\":"), std::string::npos);
}

TEST(PairsJsonl, RejectsBadLabels) {
  EXPECT_THROW(decodePairsJsonl(R"({"pair_id":0,"obs0":{"traj":0,"t":1},"obs1":{"traj":0,"t":2},"label":2,"source":"GtOracle"})"),
               ParseError);
  EXPECT_THROW(decodePairsJsonl(R"({"pair_id":0,"obs0":{"traj":0,"t":1},"obs1":{"traj":0,"t":1},"label":0,"source":"GtOracle"})"),
               ParseError);
}

TEST(LabelSource, TagsRoundTrip) {
  for (const LabelSource s : {LabelSource{LabelSourceKind::GtOracle, 0}, LabelSource{LabelSourceKind::FlipNoise, 0.75},
                              LabelSource{LabelSourceKind::ProximityFlip, 0}, LabelSource{LabelSourceKind::Vlm, 0}}) {
    EXPECT_EQ(LabelSource::parse(s.tag()), s);
  }
  EXPECT_THROW(LabelSource::parse("Oracle"), ParseError);
}
