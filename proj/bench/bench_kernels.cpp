// Serial reference kernels against the OpenMP ones at Q-network shapes.

#include <benchmark/benchmark.h>

#include <vector>

#include "indcomm/kernels.hpp"
#include "indcomm/rng.hpp"

namespace {

using Gemm = void (*)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

std::vector<double> random_matrix(std::size_t n, std::uint64_t seed) {
  indcomm::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// Sizes: rows = batch * steps, inner = layer widths.
template <Gemm F, int Kind>
void run(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const auto a = random_matrix(m * k, 1);
  const auto b = random_matrix(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    F(m, n, k, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * m * n * k));
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({32, 64, 64})->Args({640, 64, 64})->Args({640, 192, 64})->Args({2048, 64, 180});
}

}  // namespace

BENCHMARK(run<indcomm::kernels::serial::gemm_nn, 0>)->Name("gemm_nn/serial")->Apply(shapes);
BENCHMARK(run<indcomm::kernels::gemm_nn, 0>)->Name("gemm_nn/omp")->Apply(shapes);
BENCHMARK(run<indcomm::kernels::serial::gemm_nt, 1>)->Name("gemm_nt/serial")->Apply(shapes);
BENCHMARK(run<indcomm::kernels::gemm_nt, 1>)->Name("gemm_nt/omp")->Apply(shapes);
BENCHMARK(run<indcomm::kernels::serial::gemm_tn, 2>)->Name("gemm_tn/serial")->Apply(shapes);
BENCHMARK(run<indcomm::kernels::gemm_tn, 2>)->Name("gemm_tn/omp")->Apply(shapes);

BENCHMARK_MAIN();
