#include <benchmark/benchmark.h>

#include "qtt/config.hpp"
#include "qtt/correlator.hpp"
#include "qtt/timetags.hpp"

using namespace qtt;

namespace {

Scenario reference() { return scenario_preset("reference").scenario; }

void BM_PairStream(benchmark::State& state) {
  const double rate = static_cast<double>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_pair_stream(rate, 1.0, RngSeed{seed++}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PairStream)->Arg(200'000)->Arg(2'000'000)->Unit(benchmark::kMillisecond);

void BM_BuildStreams(benchmark::State& state) {
  auto s = reference();
  s.streams.bob.background_cps = static_cast<double>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(build_bob_stream(s.streams, RngSeed{seed++}));
}
BENCHMARK(BM_BuildStreams)->Arg(0)->Arg(900'000)->Arg(2'140'000)->Unit(benchmark::kMillisecond);

void BM_Correlate(benchmark::State& state) {
  auto s = reference();
  s.streams.bob.background_cps = static_cast<double>(state.range(0));
  const auto streams = build_bob_stream(s.streams, RngSeed{1});
  for (auto _ : state)
    benchmark::DoNotOptimize(correlate(streams.alice, streams.bob, s.correlator.bin_width_ps,
                                       s.correlator.range));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(streams.bob.size()));
}
BENCHMARK(BM_Correlate)->Arg(900'000)->Arg(2'140'000)->Unit(benchmark::kMillisecond);

void BM_RecoverOffset(benchmark::State& state) {
  const auto s = reference();
  const auto streams = build_bob_stream(s.streams, RngSeed{2});
  for (auto _ : state) benchmark::DoNotOptimize(recover_offset(streams.alice, streams.bob, s.correlator));
}
BENCHMARK(BM_RecoverOffset)->Unit(benchmark::kMillisecond);

void BM_FitPeak(benchmark::State& state) {
  const auto s = reference();
  const auto streams = build_bob_stream(s.streams, RngSeed{3});
  const auto hist = correlate(streams.alice, streams.bob, s.correlator.bin_width_ps, s.correlator.range);
  for (auto _ : state) benchmark::DoNotOptimize(fit_gaussian_peak(hist, s.correlator.fit));
}
BENCHMARK(BM_FitPeak)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
