// SPDX-License-Identifier: Apache-2.0
#include "dftr/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dftr::kernels {
namespace {

// One output row of one batch entry. Shared by both paths so the reduction
// order over k is identical.
void gemm_row(const GemmArgs& args, std::size_t bi, std::size_t row, const double* a,
              const double* b, double* c) {
  const auto [m, n, k] = args.shape;
  const double* ab = a + bi * m * k;
  const double* bb = b + bi * k * n;
  double* crow = c + bi * m * n + row * n;
  if (!args.accumulate) std::fill(crow, crow + n, 0.0);
  const bool ta = args.trans_a == Trans::Yes;
  const bool tb = args.trans_b == Trans::Yes;
  if (tb) {
    // Row j of b is contiguous; each sum still runs over p in order.
    for (std::size_t j = 0; j < n; ++j) {
      const double* bcol = bb + j * k;
      double s = crow[j];
      for (std::size_t p = 0; p < k; ++p) s += (ta ? ab[p * m + row] : ab[row * k + p]) * bcol[p];
      crow[j] = s;
    }
    return;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double av = ta ? ab[p * m + row] : ab[row * k + p];
    const double* brow = bb + p * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

void softmax_row(std::size_t n, const double* x, double* y) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

void softmax_backward_row(std::size_t n, const double* y, const double* gy, double* gx) {
  double dot = 0.0;
  for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
  for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
}

void layernorm_row(std::size_t d, double eps, const double* x, const double* gamma,
                   const double* beta, double* y, double* mean_out, double* rstd_out) {
  double mean = 0.0;
  for (std::size_t j = 0; j < d; ++j) mean += x[j];
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (std::size_t j = 0; j < d; ++j) var += (x[j] - mean) * (x[j] - mean);
  var /= static_cast<double>(d);
  const double rstd = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < d; ++j) y[j] = (x[j] - mean) * rstd * gamma[j] + beta[j];
  *mean_out = mean;
  *rstd_out = rstd;
}

}  // namespace

namespace serial {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  for (std::size_t bi = 0; bi < args.batch; ++bi)
    for (std::size_t r = 0; r < args.shape.m; ++r) gemm_row(args, bi, r, a.data(), b.data(), c.data());
}

void softmax_rows(std::size_t rows, std::size_t n, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r) softmax_row(n, x.data() + r * n, y.data() + r * n);
}

void softmax_rows_backward(std::size_t rows, std::size_t n, std::span<const double> y,
                           std::span<const double> gy, std::span<double> gx) {
  for (std::size_t r = 0; r < rows; ++r)
    softmax_backward_row(n, y.data() + r * n, gy.data() + r * n, gx.data() + r * n);
}

void layernorm_rows(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                    std::span<const double> gamma, std::span<const double> beta,
                    std::span<double> y, LayerNormStats stats) {
  for (std::size_t r = 0; r < rows; ++r)
    layernorm_row(d, eps, x.data() + r * d, gamma.data(), beta.data(), y.data() + r * d,
                  &stats.mean[r], &stats.rstd[r]);
}

}  // namespace serial

namespace parallel {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  const auto total = static_cast<std::int64_t>(args.batch * args.shape.m);
  const auto m = args.shape.m;
#pragma omp parallel for schedule(static) if (total * args.shape.n * args.shape.k > 32768)
  for (std::int64_t t = 0; t < total; ++t) {
    const auto idx = static_cast<std::size_t>(t);
    gemm_row(args, idx / m, idx % m, a.data(), b.data(), c.data());
  }
}

void softmax_rows(std::size_t rows, std::size_t n, std::span<const double> x, std::span<double> y) {
  const auto total = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * n > 16384)
  for (std::int64_t r = 0; r < total; ++r) {
    const auto off = static_cast<std::size_t>(r) * n;
    softmax_row(n, x.data() + off, y.data() + off);
  }
}

void softmax_rows_backward(std::size_t rows, std::size_t n, std::span<const double> y,
                           std::span<const double> gy, std::span<double> gx) {
  const auto total = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * n > 16384)
  for (std::int64_t r = 0; r < total; ++r) {
    const auto off = static_cast<std::size_t>(r) * n;
    softmax_backward_row(n, y.data() + off, gy.data() + off, gx.data() + off);
  }
}

void layernorm_rows(std::size_t rows, std::size_t d, double eps, std::span<const double> x,
                    std::span<const double> gamma, std::span<const double> beta,
                    std::span<double> y, LayerNormStats stats) {
  const auto total = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * d > 16384)
  for (std::int64_t r = 0; r < total; ++r) {
    const auto i = static_cast<std::size_t>(r);
    layernorm_row(d, eps, x.data() + i * d, gamma.data(), beta.data(), y.data() + i * d,
                  &stats.mean[i], &stats.rstd[i]);
  }
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

}  // namespace dftr::kernels
