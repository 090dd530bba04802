#include <benchmark/benchmark.h>

#include <map>

#include "fairlens/causality.hpp"
#include "fairlens/dataset.hpp"
#include "fairlens/metrics.hpp"
#include "fairlens/model.hpp"

namespace {

using namespace fairlens;

struct Fixture {
  Dataset train;
  Dataset test;
  Encoding encoding;
  Mlp model;
  std::size_t group;
};

const Fixture& fixture(std::size_t rows) {
  static std::map<std::size_t, Fixture> cache;
  auto it = cache.find(rows);
  if (it == cache.end()) {
    const Dataset data = synth_generate(rows, 0.3, 1);
    auto [train, test] = split(data, 0.7, 1);
    Encoding enc = Encoding::fit(train);
    TrainConfig c;
    c.epochs = 5;
    Mlp m = fairlens::train(encode(train, enc), c);
    const std::size_t group = data.schema().index_of("group");
    it = cache.emplace(rows, Fixture{std::move(train), std::move(test), std::move(enc), std::move(m), group}).first;
  }
  return it->second;
}

void BM_Forward(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  const EncodedMatrix x = encode(f.train, f.encoding);
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.model, x.features));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.rows()));
}
BENCHMARK(BM_Forward)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_NeuronClampForward(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  const EncodedMatrix x = encode(f.train, f.encoding);
  const Overlay clamp = NeuronClamp{{2, 3}, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.model, x.features, clamp));
}
BENCHMARK(BM_NeuronClampForward)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Cds(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  const EvalSet set(f.test, f.encoding);
  for (auto _ : state) benchmark::DoNotOptimize(cds(f.model, set, {f.group}));
}
BENCHMARK(BM_Cds)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_AnalyzeAll(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  const EvalSet set(f.train, f.encoding);
  for (auto _ : state) {
    benchmark::DoNotOptimize(analyze_all(f.model, set, {MetricKind::kSpd, {f.group}}, kDefaultNumInterval));
  }
}
BENCHMARK(BM_AnalyzeAll)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond)->Iterations(1);

void BM_TrainEpoch(benchmark::State& state) {
  const Fixture& f = fixture(static_cast<std::size_t>(state.range(0)));
  const EncodedMatrix x = encode(f.train, f.encoding);
  TrainConfig c;
  c.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(fairlens::train(x, c));
}
BENCHMARK(BM_TrainEpoch)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
