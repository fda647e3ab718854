// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <numbers>

#include "sinebeta/batch.hpp"
#include "sinebeta/well.hpp"

using namespace sinebeta;

namespace {

sde::BatchRequest batch_request(std::uint64_t count) {
  sde::BatchRequest b;
  b.replicate.params = {0.5, {0.0, sde::two_pi, 2.0 * sde::two_pi, 3.0 * sde::two_pi}};
  b.replicate.tracked_pairs = {{2, 3}};
  b.master_seed = 1;
  b.count = count;
  return b;
}

void BM_batch_serial(benchmark::State& state) {
  const auto b = batch_request(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sde::simulate_batch_serial(b));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_batch_parallel(benchmark::State& state) {
  const auto b = batch_request(static_cast<std::uint64_t>(state.range(0)));
  const int workers = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(sde::simulate_batch(b, workers));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_passage_serial(benchmark::State& state) {
  const well::WellSpec spec{0.05, 1.0};
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(well::sample_passage_times_serial(spec, 1.0, n, 3));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_passage_parallel(benchmark::State& state) {
  const well::WellSpec spec{0.05, 1.0};
  const auto n = static_cast<std::size_t>(state.range(0));
  well::PassageSettings ps;
  ps.workers = static_cast<int>(state.range(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(well::sample_passage_times(spec, 1.0, n, 3, ps));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_batch_serial)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_batch_parallel)->Args({32, 1})->Args({32, 2})->Args({32, 4})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_passage_serial)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_passage_parallel)->Args({256, 1})->Args({256, 2})->Args({256, 4})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
