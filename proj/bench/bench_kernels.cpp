#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "tiltdid/kernels.hpp"
#include "tiltdid/nuisance.hpp"
#include "tiltdid/simulation.hpp"

using namespace tiltdid;

namespace {

struct Fixture {
  PanelDataset data;
  std::vector<RowIndex> rows;
  std::shared_ptr<const NuisanceModel> model;
  NuisanceTable table;

  explicit Fixture(std::size_t n)
      : data(simulate_scenario({1, n, 1, 0})),
        rows(all_rows(data)),
        model(fit_nuisance(data, rows, std::make_shared<const DoseGrid>(), {})),
        table(tabulate_nuisance(data, rows, *model)) {}
};

const Fixture& fixture(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<Fixture>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Fixture>(n);
  return *slot;
}

Execution mode(const benchmark::State& state) { return state.range(1) == 0 ? Execution::serial : Execution::parallel; }

void BM_Tabulate(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(tabulate_nuisance(f.data, f.rows, *f.model, mode(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_TiltTerms(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(tilt_terms(f.data, f.rows, f.table, 2.0, CorrectionWeight::odds, mode(state)));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PluginKernel(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  const InterventionSpec spec = GaussianKernel{0.1, 0.5};
  for (auto _ : state) benchmark::DoNotOptimize(plugin_integrals(f.data, f.rows, f.table, spec, mode(state)));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ReferenceTiltTerms(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(reference::tilt_terms(f.data, f.rows, *f.model, 2.0, CorrectionWeight::odds));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

// Second argument: 0 = serial, 1 = OpenMP.
BENCHMARK(BM_Tabulate)->ArgsProduct({{2000, 20000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TiltTerms)->ArgsProduct({{2000, 20000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PluginKernel)->ArgsProduct({{2000, 20000}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReferenceTiltTerms)->Arg(2000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
