// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <vector>

#include "dftr/kernels.hpp"
#include "dftr/rng.hpp"

namespace {

using namespace dftr::kernels;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  dftr::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const GemmArgs args{{n, n, n}};
  const auto a = random_buffer(n * n, 1), b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::gemm(args, a, b, c);
    else
      serial::gemm(args, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), n = std::size_t{64};
  const auto x = random_buffer(rows * n, 3);
  std::vector<double> y(rows * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::softmax_rows(rows, n, x, y);
    else
      serial::softmax_rows(rows, n, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_LayerNorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0)), d = std::size_t{128};
  const auto x = random_buffer(rows * d, 4), g = random_buffer(d, 5), b = random_buffer(d, 6);
  std::vector<double> y(rows * d), mean(rows), rstd(rows);
  for (auto _ : state) {
    if constexpr (Parallel)
      parallel::layernorm_rows(rows, d, 1e-5, x, g, b, y, {mean, rstd});
    else
      serial::layernorm_rows(rows, d, 1e-5, x, g, b, y, {mean, rstd});
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Softmax<false>)->Name("softmax/serial")->Arg(256)->Arg(4096);
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel")->Arg(256)->Arg(4096);
BENCHMARK(BM_LayerNorm<false>)->Name("layernorm/serial")->Arg(256)->Arg(4096);
BENCHMARK(BM_LayerNorm<true>)->Name("layernorm/parallel")->Arg(256)->Arg(4096);

BENCHMARK_MAIN();
