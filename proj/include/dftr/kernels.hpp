// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

// Dense compute kernels. Every kernel exists twice: `serial` is the reference
// implementation, `parallel` splits the outer loop across OpenMP threads.
// Each output element is produced by exactly one thread with the same inner
// reduction order as the serial path, so both give bit-identical results.
namespace dftr::kernels {

enum class Trans { No, Yes };

struct GemmShape {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
};

// c[m,n] (+)= op(a)[m,k] * op(b)[k,n]; op(a) is a[m,k] or a[k,m]ᵀ.
// `batch` independent products are packed back to back in each buffer.
struct GemmArgs {
  GemmShape shape;
  Trans trans_a = Trans::No;
  Trans trans_b = Trans::No;
  std::size_t batch = 1;
  bool accumulate = false;
};

struct LayerNormStats {
  std::span<double> mean;
  std::span<double> rstd;
};

namespace serial {
void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax_rows(std::size_t rows, std::size_t n, std::span<const double> x, std::span<double> y);
void softmax_rows_backward(std::size_t rows, std::size_t n, std::span<const double> y,
                           std::span<const double> gy, std::span<double> gx);
void layernorm_rows(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                    std::span<const double> gamma, std::span<const double> beta,
                    std::span<double> y, LayerNormStats stats);
}  // namespace serial

namespace parallel {
void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void softmax_rows(std::size_t rows, std::size_t n, std::span<const double> x, std::span<double> y);
void softmax_rows_backward(std::size_t rows, std::size_t n, std::span<const double> y,
                           std::span<const double> gy, std::span<double> gx);
void layernorm_rows(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                    std::span<const double> gamma, std::span<const double> beta,
                    std::span<double> y, LayerNormStats stats);
}  // namespace parallel

/// Number of worker threads the parallel kernels will use (1 without OpenMP).
int max_threads();
void set_num_threads(int n);

}  // namespace dftr::kernels
