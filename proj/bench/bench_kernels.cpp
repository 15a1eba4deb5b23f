// Serial reference kernels against their OpenMP versions: batch evaluation of
// individuals and the exact-index training set. The argument is the worker
// count; 1 runs the serial path.

#include <benchmark/benchmark.h>

#include <filesystem>

#include "acdc/case_io.hpp"
#include "acdc/evo.hpp"
#include "acdc/screen.hpp"

using namespace acdc;

namespace {

struct Fixture {
  Network net = load_case(std::filesystem::path(ACDC_DATA_DIR) / "ieee14_acdc.json");
  ControlLayout layout{net};
  ControlVector base = snap_discrete(layout, layout.read(net).values).controls;
  ScreeningModel model;
  std::vector<ControlVector> genomes;
  std::vector<ControlVector> samples;

  Fixture() {
    model = fit_screening(net, layout, base, SamplerConfig{}).model;
    std::mt19937_64 rng(1);
    SamplerConfig wide;
    wide.radius = 0.05;
    genomes = latin_hypercube(layout, base, wide.half_widths(layout), 32, rng);
    samples = latin_hypercube(layout, base, SamplerConfig{}.half_widths(layout), 20, rng);
  }

  EvaluationContext context() const {
    EvaluationContext ctx;
    ctx.net = &net;
    ctx.layout = &layout;
    ctx.model = &model;
    ctx.limits = CorrectiveLimits::defaults(net, layout);
    return ctx;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_EvaluateBatch(benchmark::State& state) {
  const auto& f = fixture();
  const auto ctx = f.context();
  const int workers = static_cast<int>(state.range(0));
  Population batch(f.genomes.size());
  for (auto _ : state) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      batch[i] = Individual{};
      batch[i].genome = f.genomes[i];
      batch[i].id = i;
    }
    if (workers == 1)
      evaluate_serial(ctx, batch);
    else
      evaluate_parallel(ctx, batch, workers);
    benchmark::DoNotOptimize(batch.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}

void BM_TrainingSet(benchmark::State& state) {
  const auto& f = fixture();
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto data = build_training_set(f.net, f.layout, f.samples, workers);
    benchmark::DoNotOptimize(data.pi.data());
  }
}

}  // namespace

BENCHMARK(BM_EvaluateBatch)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_TrainingSet)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
