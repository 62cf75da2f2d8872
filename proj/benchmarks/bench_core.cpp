#include <benchmark/benchmark.h>

#include "offrl/iql.hpp"
#include "offrl/nn.hpp"
#include "offrl/render.hpp"
#include "offrl/rollout.hpp"
#include "offrl/vlm_client.hpp"

using namespace offrl;

namespace {

const EnvSpec kPm = EnvSpec::make(EnvId::PointMass2D);

void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const int width = static_cast<int>(state.range(0));
  const auto p = nn::makeMlp({6, width, width, 1}, nn::Activation::Identity, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 256);
  const Eigen::MatrixXd d = Eigen::MatrixXd::Ones(1, 256);
  nn::MLPTape tape;
  for (auto _ : state) {
    nn::mlpForward(p, x, tape);
    benchmark::DoNotOptimize(nn::mlpBackward(p, tape, d));
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(64)->Arg(256);

void BM_RenderAndEncodePng(benchmark::State& state) {
  const std::vector<double> s{0.3, -0.4, 0.0, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(vlm::encodePng(render(kPm, s)));
}
BENCHMARK(BM_RenderAndEncodePng);

void BM_IqlTrain(benchmark::State& state) {
  const auto d = relabelGroundTruth(generateDataset(kPm, OptimalityLevel::Medium, 20, 1));
  IQLConfig cfg;
  cfg.hidden = {64, 64};
  cfg.steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(trainIQL(d, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IqlTrain)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
