// SPDX-License-Identifier: Apache-2.0
// Serial reference vs OpenMP batch for the window-sum oracle and full plans.
#include <random>

#include <benchmark/benchmark.h>

#include "hems/oracle_batch.hpp"

namespace {

std::vector<hems::PriceCurve> make_curves(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-50.0, 300.0);
  const hems::Date day{std::chrono::year{2025}, std::chrono::month{10}, std::chrono::day{15}};
  std::vector<hems::PriceCurve> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> p(hems::kSlotsPerDay);
    for (auto& v : p) v = u(rng);
    out.emplace_back(std::move(p), day, hems::PriceSource::kFixture);
  }
  return out;
}

void BM_WindowSumsSerial(benchmark::State& state) {
  const auto curves = make_curves(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hems::batch::window_sums_serial(curves, 12));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_WindowSumsOpenMP(benchmark::State& state) {
  const auto curves = make_curves(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(hems::batch::window_sums(curves, 12));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = hems::batch::max_threads();
}

void BM_PlansSerial(benchmark::State& state) {
  const auto curves = make_curves(static_cast<std::size_t>(state.range(0)));
  const auto specs = hems::canonical_specs();
  for (auto _ : state) benchmark::DoNotOptimize(hems::batch::optimal_plans_serial(curves, specs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PlansOpenMP(benchmark::State& state) {
  const auto curves = make_curves(static_cast<std::size_t>(state.range(0)));
  const auto specs = hems::canonical_specs();
  for (auto _ : state) benchmark::DoNotOptimize(hems::batch::optimal_plans(curves, specs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
  state.counters["threads"] = hems::batch::max_threads();
}

}  // namespace

BENCHMARK(BM_WindowSumsSerial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_WindowSumsOpenMP)->Arg(1000)->Arg(10000);
BENCHMARK(BM_PlansSerial)->Arg(1000)->Arg(10000);
BENCHMARK(BM_PlansOpenMP)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
