// SPDX-License-Identifier: Apache-2.0
#include "emreselect/changepoint.hpp"
#include "emreselect/forecaster.hpp"
#include "emreselect/optimizer.hpp"
#include "emreselect/selection.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

namespace {

using emr::Index;
using emr::Vector;

std::vector<double> kinked_series(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.05);
  std::vector<double> y(static_cast<std::size_t>(n));
  double level = 0.0;
  double slope = 0.05;
  for (int t = 0; t < n; ++t) {
    if (t > 0 && t % 97 == 0) slope = -slope;
    level += slope;
    y[static_cast<std::size_t>(t)] = level + noise(rng);
  }
  return y;
}

emr::TimeSeriesDataset random_dataset(Index n, Index p, Index q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  emr::TimeSeriesDataset d;
  d.inputs.resize(n, p);
  d.outputs.resize(n, q);
  for (Index i = 0; i < d.inputs.size(); ++i) d.inputs(i) = normal(rng);
  for (Index i = 0; i < d.outputs.size(); ++i) d.outputs(i) = normal(rng);
  d.domain_id = "bench";
  return d;
}

void BM_GlrStatistic(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto y = kinked_series(n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(emr::cp::glr_statistic(y, 0, n, n / 2, 0.05));
  state.SetComplexityN(n);
}
BENCHMARK(BM_GlrStatistic)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void BM_BestSplit(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto y = kinked_series(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(emr::cp::best_split(y, 0, n, 0.05));
  state.SetComplexityN(n);
}
BENCHMARK(BM_BestSplit)->RangeMultiplier(4)->Range(64, 4096)->Complexity();

void BM_DetectNot(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto y = kinked_series(n, 3);
  emr::cp::NotConfig c;
  for (auto _ : state) benchmark::DoNotOptimize(emr::cp::detect_not(y, c));
}
BENCHMARK(BM_DetectNot)->Arg(300)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_BuildRepresentatives(benchmark::State& state) {
  auto d = random_dataset(2000, 4, 2, 4);
  const auto a = kinked_series(2000, 5);
  const auto b = kinked_series(2000, 6);
  for (Index t = 0; t < 2000; ++t) {
    d.outputs(t, 0) = a[static_cast<std::size_t>(t)];
    d.outputs(t, 1) = b[static_cast<std::size_t>(t)];
  }
  for (auto _ : state) benchmark::DoNotOptimize(emr::sel::build_representatives(d, {}, 8));
}
BENCHMARK(BM_BuildRepresentatives)->Unit(benchmark::kMillisecond);

void BM_ProjectModified(benchmark::State& state) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  const Index n = state.range(0);
  Vector gn(n), gm(n);
  for (Index i = 0; i < n; ++i) {
    gn(i) = normal(rng);
    gm(i) = -gn(i) + 0.1 * normal(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(emr::cl::project_modified(gn, gm));
}
BENCHMARK(BM_ProjectModified)->Arg(1000)->Arg(100000);

void BM_MlpGradient(benchmark::State& state) {
  const auto d = random_dataset(8 + 64, 4, 2, 8);
  const auto windows = emr::all_windows(d, 8);
  auto model = emr::nn::make_forecaster({{"type", "mlp"}, {"window", 8}, {"hidden", {32, 32}}}, 4, 2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model->loss_and_gradient(windows));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(windows.size()));
}
BENCHMARK(BM_MlpGradient)->Unit(benchmark::kMicrosecond);

void BM_Seq2SeqGradient(benchmark::State& state) {
  const auto d = random_dataset(8 + 16, 4, 2, 9);
  const auto windows = emr::all_windows(d, 8);
  auto model = emr::nn::make_forecaster({{"type", "seq2seq"}, {"window", 8}}, 4, 2, 1);
  for (auto _ : state) benchmark::DoNotOptimize(model->loss_and_gradient(windows));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(windows.size()));
}
BENCHMARK(BM_Seq2SeqGradient)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
