// Serial reference against the OpenMP variant for the dense kernels.
// Set OMP_NUM_THREADS to compare thread counts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "mine/core/kernels.hpp"

namespace k = mine::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(gen);
  return v;
}

template <auto Gemm>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const bool trans_a = state.range(1) != 0;
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  const k::GemmArgs g{trans_a, false, n, n, n, false};
  for (auto _ : state) {
    Gemm(g, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["flops"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate);
}

template <auto Softmax>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_vec(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    Softmax(rows, cols, x.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * cols));
}

template <auto LayerNorm>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), cols = static_cast<std::size_t>(state.range(1));
  const auto x = random_vec(rows * cols, 4), gain = random_vec(cols, 5), bias = random_vec(cols, 6);
  std::vector<double> y(rows * cols), xhat(rows * cols), inv_std(rows);
  for (auto _ : state) {
    LayerNorm(rows, cols, x.data(), gain.data(), bias.data(), 1e-5, {y.data(), xhat.data(), inv_std.data()});
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(rows * cols));
}

void gemm_sizes(benchmark::internal::Benchmark* b) {
  for (int n : {64, 128, 256})
    for (int t : {0, 1}) b->Args({n, t});
}

void row_sizes(benchmark::internal::Benchmark* b) {
  b->Args({512, 64})->Args({4096, 64})->Args({256, 1024});
}

}  // namespace

BENCHMARK(BM_Gemm<k::serial::gemm>)->Name("gemm/serial")->Apply(gemm_sizes);
BENCHMARK(BM_Gemm<k::omp::gemm>)->Name("gemm/omp")->Apply(gemm_sizes)->UseRealTime();
BENCHMARK(BM_Softmax<k::serial::softmax_rows>)->Name("softmax_rows/serial")->Apply(row_sizes);
BENCHMARK(BM_Softmax<k::omp::softmax_rows>)->Name("softmax_rows/omp")->Apply(row_sizes)->UseRealTime();
BENCHMARK(BM_LayerNorm<k::serial::layer_norm_rows>)->Name("layer_norm_rows/serial")->Apply(row_sizes);
BENCHMARK(BM_LayerNorm<k::omp::layer_norm_rows>)->Name("layer_norm_rows/omp")->Apply(row_sizes)->UseRealTime();

BENCHMARK_MAIN();
