#include <benchmark/benchmark.h>

#include <numeric>
#include <sstream>

#include "hetloc/features.hpp"
#include "hetloc/ingest.hpp"
#include "hetloc/netcore.hpp"
#include "hetloc/worldgen.hpp"

using namespace hetloc;

namespace {

const worldgen::World& urban() {
  static const worldgen::World w = [] {
    worldgen::WorldConfig c;
    c.seed = 1;
    return worldgen::generate_world(c);
  }();
  return w;
}

net::MlpConfig table_config(std::size_t inputs) {
  net::MlpConfig c;
  c.layer_sizes = {inputs, 256, 128, 64, 20};
  c.seed = 3;
  return c;
}

}  // namespace

static void BM_Forward(benchmark::State& state) {
  const auto d = worldgen::generate_dataset(urban(), {"A"}, 1, 2);
  const auto m = net::init_model(table_config(d.feature_width()));
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(net::predict_proba(m, d.samples[i++ % d.size()].features));
  }
}
BENCHMARK(BM_Forward);

static void BM_SgdStep(benchmark::State& state) {
  const auto d = worldgen::generate_dataset(urban(), {"A"}, 2, 2);
  auto m = net::init_model(table_config(d.feature_width()));
  net::fit_input_scaler(m, d);
  const auto prepared = net::prepare(m, d);
  std::vector<std::size_t> batch(40);
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  Rng rng(5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(net::sgd_step(m, prepared, batch, net::kDefaultHead, {0.005, 0.1}, rng));
  }
  state.SetItemsProcessed(state.iterations() * 40);
}
BENCHMARK(BM_SgdStep);

static void BM_TrainEpoch(benchmark::State& state) {
  const auto d = worldgen::generate_dataset(urban(), {"A"}, 50, 2);
  auto cfg = table_config(d.feature_width());
  cfg.epochs = 1;
  for (auto _ : state) {
    auto m = net::init_model(cfg);
    net::train(m, d);
    benchmark::DoNotOptimize(m.trunk.front().weights.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(d.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

static void BM_PowerDifference(benchmark::State& state) {
  const auto scans = worldgen::generate_scans(urban(), {"A"}, 1, 4);
  const auto x = features::vectorize(scans.front(), urban().site.inventory);
  for (auto _ : state) benchmark::DoNotOptimize(features::power_difference(x));
}
BENCHMARK(BM_PowerDifference);

static void BM_PowerRatio(benchmark::State& state) {
  const auto scans = worldgen::generate_scans(urban(), {"A"}, 1, 4);
  const auto x = features::vectorize(scans.front(), urban().site.inventory);
  for (auto _ : state) benchmark::DoNotOptimize(features::power_ratio(x));
}
BENCHMARK(BM_PowerRatio);

static void BM_FitLinearMap(benchmark::State& state) {
  const auto master = worldgen::generate_scans(urban(), {"A"}, 10, 6);
  const auto slave = worldgen::generate_scans(urban(), {"B", 0.9, 8.0}, 10, 6);
  const auto pairs = features::calibration_pairs(master, slave, urban().site.inventory);
  for (auto _ : state) benchmark::DoNotOptimize(features::fit_linear_map(pairs));
}
BENCHMARK(BM_FitLinearMap);

static void BM_ParseScanLog(benchmark::State& state) {
  const auto scans = worldgen::generate_scans(urban(), {"A"}, 500, 7);
  std::ostringstream out;
  ingest::write_scan_log(out, scans);
  const std::string text = out.str();
  for (auto _ : state) {
    std::istringstream in(text);
    benchmark::DoNotOptimize(ingest::parse_scan_log(in));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scans.size()));
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(text.size()));
}
BENCHMARK(BM_ParseScanLog)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
