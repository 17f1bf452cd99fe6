// Microbenchmarks for the per-slot and per-inference hot paths.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "csipred/channel.hpp"
#include "csipred/eesm.hpp"
#include "csipred/neural.hpp"
#include "csipred/wiener.hpp"

namespace {

using namespace csipred;

std::vector<double> random_sinrs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.5, 50.0);
  std::vector<double> v(n);
  for (double& x : v) x = unif(rng);
  return v;
}

void BM_EesmCompress(benchmark::State& state) {
  const auto sinrs = random_sinrs(4 * 52, 1);
  for (auto _ : state) benchmark::DoNotOptimize(eesm_compress(sinrs, 3.7));
}
BENCHMARK(BM_EesmCompress);

void BM_EffectiveSinrAllCqi(benchmark::State& state) {
  const auto sinrs = random_sinrs(4 * 52, 2);
  const CqiTable table = default_cqi_table();
  for (auto _ : state) benchmark::DoNotOptimize(effective_sinr_all_cqi(sinrs, table));
}
BENCHMARK(BM_EffectiveSinrAllCqi);

void BM_ChannelSlot(benchmark::State& state) {
  ChannelConfig cfg;
  cfg.doppler_hz = 10.0;
  cfg.n_slots = 4096;
  cfg.profile = pdp_profile("tdl-a");
  cfg.seed = 3;
  const FadingChannel channel(cfg);
  std::vector<double> out(channel.slot_size());
  std::size_t slot = 0;
  for (auto _ : state) {
    channel.slot_sinrs(slot, out);
    slot = (slot + 1) % cfg.n_slots;
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_ChannelSlot);

void BM_TapProcess(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(generate_tap_process(10.0, n, 1e-3, 0.0, 5));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                          static_cast<std::int64_t>(n));
}
BENCHMARK(BM_TapProcess)->Arg(4096)->Arg(65536);

void BM_WienerPredict(benchmark::State& state) {
  AutocorrEstimate ac;
  ac.n_samples = 1;
  for (std::size_t m = 0; m <= 160; ++m) ac.values.push_back(std::pow(0.98, m));
  const WienerBank bank = build_filter_bank(ac, 4, 32);
  const std::vector<double> window = {0.4, 0.3, 0.1, -0.2};
  for (auto _ : state) benchmark::DoNotOptimize(wiener_predict(bank, window));
}
BENCHMARK(BM_WienerPredict);

void BM_NeuralForward(benchmark::State& state) {
  const auto kind = static_cast<PredictorKind>(state.range(0));
  const NeuralModel model = init_model(kind, 4, 16, 31, 7);
  const std::vector<double> window = {0.4, 0.3, 0.1, -0.2};
  for (auto _ : state) benchmark::DoNotOptimize(forward(model, window));
}
BENCHMARK(BM_NeuralForward)
    ->Arg(static_cast<int>(PredictorKind::dnn))
    ->Arg(static_cast<int>(PredictorKind::gru))
    ->Arg(static_cast<int>(PredictorKind::lstm));

void BM_GruGradientStep(benchmark::State& state) {
  const NeuralModel model = init_model(PredictorKind::gru, 4, 16, 31, 9);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> dist;
  PredictionBatch batch;
  batch.input_len = 4;
  batch.t_csi = 32;
  for (std::size_t r = 0; r < 64; ++r) {
    batch.slot_index.push_back(r);
    for (int i = 0; i < 4; ++i) batch.inputs.push_back(dist(rng));
    for (int i = 0; i < 31; ++i) batch.targets_tdd.push_back(dist(rng));
  }
  for (auto _ : state) benchmark::DoNotOptimize(gradients(model, batch));
}
BENCHMARK(BM_GruGradientStep);

}  // namespace

BENCHMARK_MAIN();
