// Serial reference vs OpenMP kernels for ranking enumeration.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pad/losses.hpp"
#include "pad/preference.hpp"

namespace {

std::vector<double> rewards(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 0.0);
  std::vector<double> r(n);
  for (double& v : r) v = u(rng);
  return r;
}

void BM_FullDistributionSerial(benchmark::State& state) {
  const auto r = rewards(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(pad::serial::full_distribution(r, 10.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pad::factorial(r.size())));
}

void BM_FullDistributionParallel(benchmark::State& state) {
  const auto r = rewards(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(pad::full_distribution(r, 10.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pad::factorial(r.size())));
}

void BM_PpdObjectiveSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto t = rewards(n, 2), s = rewards(n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(pad::serial::ppd_objective(t, s, 10.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pad::factorial(n)));
}

void BM_PpdObjectiveParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto t = rewards(n, 2), s = rewards(n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(pad::ppd_objective(t, s, 10.0));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pad::factorial(n)));
}

}  // namespace

BENCHMARK(BM_FullDistributionSerial)->DenseRange(4, 8, 2);
BENCHMARK(BM_FullDistributionParallel)->DenseRange(4, 8, 2);
BENCHMARK(BM_PpdObjectiveSerial)->DenseRange(4, 8, 2);
BENCHMARK(BM_PpdObjectiveParallel)->DenseRange(4, 8, 2);

BENCHMARK_MAIN();
