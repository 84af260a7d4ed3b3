// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include "doctest.h"
#include "dftr/kernels.hpp"
#include "helpers.hpp"

using namespace dftr;
using namespace dftr::kernels;

namespace {

std::vector<double> naive_gemm(const GemmArgs& g, const std::vector<double>& a, const std::vector<double>& b) {
  const auto [m, n, k] = g.shape;
  std::vector<double> c(g.batch * m * n, 0.0);
  for (std::size_t t = 0; t < g.batch; ++t)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = g.trans_a == Trans::Yes ? a[t * m * k + p * m + i] : a[t * m * k + i * k + p];
          const double bv = g.trans_b == Trans::Yes ? b[t * k * n + j * k + p] : b[t * k * n + p * n + j];
          s += av * bv;
        }
        c[t * m * n + i * n + j] = s;
      }
  return c;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("gemm matches a naive triple loop for every transpose combination") {
  Rng rng(1);
  for (auto ta : {Trans::No, Trans::Yes})
    for (auto tb : {Trans::No, Trans::Yes}) {
      GemmArgs g{{5, 6, 7}, ta, tb, 3, false};
      const auto a = test::uniform_values(rng, 3 * 5 * 7);
      const auto b = test::uniform_values(rng, 3 * 7 * 6);
      std::vector<double> c(3 * 5 * 6);
      serial::gemm(g, a, b, c);
      CHECK(test::max_abs_diff(c, naive_gemm(g, a, b)) < 1e-12);
    }
}

TEST_CASE("gemm accumulate adds onto the output") {
  GemmArgs g{{1, 1, 2}, Trans::No, Trans::No, 1, true};
  std::vector<double> a{1, 2}, b{3, 4}, c{10};
  serial::gemm(g, a, b, c);
  CHECK(c[0] == 21);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  Rng rng(2);
  const int saved = max_threads();
  set_num_threads(4);

  GemmArgs g{{33, 17, 29}, Trans::No, Trans::Yes, 4, false};
  const auto a = test::uniform_values(rng, 4 * 33 * 29);
  const auto b = test::uniform_values(rng, 4 * 29 * 17);
  std::vector<double> cs(4 * 33 * 17), cp(cs.size());
  serial::gemm(g, a, b, cs);
  parallel::gemm(g, a, b, cp);
  CHECK(cs == cp);

  const std::size_t rows = 37, n = 13;
  const auto x = test::uniform_values(rng, rows * n, -5, 5);
  std::vector<double> ys(rows * n), yp(rows * n);
  serial::softmax_rows(rows, n, x, ys);
  parallel::softmax_rows(rows, n, x, yp);
  CHECK(ys == yp);

  const auto gy = test::uniform_values(rng, rows * n);
  std::vector<double> gs(rows * n), gp(rows * n);
  serial::softmax_rows_backward(rows, n, ys, gy, gs);
  parallel::softmax_rows_backward(rows, n, ys, gy, gp);
  CHECK(gs == gp);

  const auto gamma = test::uniform_values(rng, n), beta = test::uniform_values(rng, n);
  std::vector<double> ls(rows * n), lp(rows * n), ms(rows), rs(rows), mp(rows), rp(rows);
  serial::layernorm_rows(rows, n, 1e-5, x, gamma, beta, ls, {ms, rs});
  parallel::layernorm_rows(rows, n, 1e-5, x, gamma, beta, lp, {mp, rp});
  CHECK(ls == lp);
  CHECK(ms == mp);
  CHECK(rs == rp);

  set_num_threads(saved);
}

TEST_CASE("softmax rows sum to one and survive large logits") {
  std::vector<double> x{0, 0, 0, 1000, 0, -1000}, y(6);
  serial::softmax_rows(2, 3, x, y);
  CHECK(y[0] == doctest::Approx(1.0 / 3));
  CHECK(y[3] == 1.0);
  CHECK(y[4] == 0.0);
  CHECK(y[3] + y[4] + y[5] == doctest::Approx(1.0).epsilon(1e-12));
}

}  // TEST_SUITE
