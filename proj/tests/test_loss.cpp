// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "dftr/loss.hpp"
#include "dftr/ops.hpp"
#include "dftr/verify.hpp"
#include "helpers.hpp"

using namespace dftr;

namespace {

Tensor column(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor::from({n, 1}, std::move(v));
}

Tensor random_gt(Rng& rng, std::size_t n) {
  std::vector<double> g(n);
  for (auto& v : g) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
  g[0] = 1.0;
  return column(std::move(g));
}

/// Logits saturated towards the mask: +s on positives, -s on negatives.
Tensor saturated(const Tensor& gt, double s, bool complement = false) {
  std::vector<double> v(gt.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = ((gt[i] > 0.5) != complement) ? s : -s;
  return column(std::move(v));
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Predictions perfect_predictions(const Tensor& gt, const Tensor& depth) {
  Predictions p;
  p.height = p.width = 8;
  p.saliency_logits = saturated(gt, 40);
  p.depth = depth;
  for (int k = 0; k < 3; ++k) p.mls_logits.push_back(saturated(gt, 40));
  return p;
}

}  // namespace

TEST_SUITE("loss") {

TEST_CASE("default level weights") {
  const LossWeights w;
  CHECK(w.lambda == std::array<double, 4>{0.4, 0.6, 0.8, 1.0});
  LossWeights bad;
  bad.lambda[2] = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("bce hand cases and naive oracle") {
  Rng rng(1);
  const auto gt = random_gt(rng, 64);
  CHECK(bce_loss(Tensor::zeros({64, 1}), gt).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_loss(saturated(gt, 20), gt).item() == doctest::Approx(2.06e-9).epsilon(0.01));
  const auto logits = column(test::uniform_values(rng, 64, -4, 4));
  CHECK(std::abs(bce_loss(logits, gt).item() - verify::naive_bce(values(logits), values(gt))) < 1e-6);
  CHECK_THROWS_AS(bce_loss(logits, column({0, 1})), DimensionError);
  CHECK_THROWS_AS(bce_loss(column({0.0}), column({0.5})), DomainError);
}

TEST_CASE("iou hand cases and naive oracle") {
  Rng rng(2);
  const auto gt = random_gt(rng, 64);
  CHECK(iou_loss(saturated(gt, 40), gt).item() <= 1e-6);
  double positives = 0;
  for (double g : gt.data()) positives += g;
  const double disjoint = iou_loss(saturated(gt, 40, true), gt).item();
  CHECK(disjoint == doctest::Approx(1.0 - 1.0 / (64 + 1.0)).epsilon(1e-9));
  CHECK(disjoint > 0.98);
  const auto logits = column(test::uniform_values(rng, 64, -4, 4));
  CHECK(std::abs(iou_loss(logits, gt).item() - verify::naive_iou(values(logits), values(gt))) < 1e-6);
}

TEST_CASE("logmse hand cases, domain and gradient") {
  const auto a = Tensor::full({4, 1}, 0.3), b = Tensor::full({4, 1}, 0.7);
  CHECK(logmse_loss(a, a).item() == 0);
  const double d = std::log(0.3 + kLogMseEps) - std::log(0.7 + kLogMseEps);
  CHECK(logmse_loss(a, b).item() == doctest::Approx(d * d).epsilon(1e-14));
  CHECK_THROWS_AS(logmse_loss(Tensor::full({4, 1}, 1.5), b), DomainError);
  CHECK_THROWS_AS(logmse_loss(Tensor::full({4, 1}, -0.1), b), DomainError);

  Rng rng(3);
  auto pred = test::random_leaf(rng, {16, 1}, 0.05, 0.95);
  const auto gt = column(test::uniform_values(rng, 16, 0, 1));
  const auto r = verify::gradcheck([&] { return logmse_loss(pred, gt); }, {{"pred", pred}});
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("dec weights and dec loss") {
  Rng rng(4);
  const auto gt = random_gt(rng, 32);
  const auto logits = column(test::uniform_values(rng, 32, -3, 3));
  const auto dg = column(test::uniform_values(rng, 32, 0, 1));

  CHECK(dec_loss(logits, gt, dg, dg).item() == 0);

  std::vector<double> shifted(32);
  for (std::size_t i = 0; i < 32; ++i) shifted[i] = dg[i] > 0.5 ? dg[i] - 0.25 : dg[i] + 0.25;
  CHECK(std::abs(dec_loss(logits, gt, column(shifted), dg).item() - bce_loss(logits, gt).item()) < 1e-8);

  const auto two_logits = column({0.3, -1.1}), two_gt = column({1, 0});
  const double a = std::log1p(std::exp(-0.3));
  CHECK(dec_loss(two_logits, two_gt, column({0.9, 0.5}), column({0.4, 0.5})).item() ==
        doctest::Approx(a).epsilon(1e-7));

  const auto dp = column(test::uniform_values(rng, 32, 0, 1));
  const auto w = dec_weights(dp, dg);
  double mx = 0;
  for (double v : w) mx = std::max(mx, v);
  CHECK(mx == 1.0);
  std::vector<double> scaled_p(32), scaled_g(32);
  for (std::size_t i = 0; i < 32; ++i) {
    scaled_p[i] = dp[i] * 0.5;
    scaled_g[i] = dg[i] * 0.5;
  }
  const auto ws = dec_weights(column(scaled_p), column(scaled_g));
  CHECK(test::max_abs_diff(w, ws) < 1e-15);
}

TEST_CASE("dec weights carry no gradient into the depth prediction") {
  Rng rng(5);
  const auto gt = random_gt(rng, 16);
  auto logits = test::random_leaf(rng, {16, 1});
  auto dp = test::random_leaf(rng, {16, 1}, 0, 1);
  const auto dg = column(test::uniform_values(rng, 16, 0, 1));
  Tape tape;
  TapeScope scope(tape);
  tape.backward(dec_loss(logits, gt, dp, dg));
  CHECK(logits.has_grad());
  CHECK_FALSE(dp.has_grad());
}

TEST_CASE("perfect predictions drive every term to zero") {
  Rng rng(6);
  const auto gt = random_gt(rng, 64);
  const auto depth = column(test::uniform_values(rng, 64, 0, 1));
  const auto r = total_loss(perfect_predictions(gt, depth), gt, depth, {}, ablation_flags('e'));
  CHECK(r.total <= 1e-5);
  for (int k = 0; k < 4; ++k) {
    CHECK(r.bce[k] <= 1e-5);
    CHECK(r.iou[k] <= 1e-5);
    CHECK(r.dec[k] == 0);
  }
  CHECK(r.logmse == 0);
}

TEST_CASE("total recomposes from its parts and respects the ablation") {
  Rng rng(7);
  const auto gt = random_gt(rng, 64);
  const auto depth = column(test::uniform_values(rng, 64, 0, 1));
  Predictions p;
  p.saliency_logits = column(test::uniform_values(rng, 64, -3, 3));
  p.depth = column(test::uniform_values(rng, 64, 0.01, 0.99));
  for (int k = 0; k < 3; ++k) p.mls_logits.push_back(column(test::uniform_values(rng, 64, -3, 3)));

  const LossWeights w;
  const auto full = total_loss(p, gt, depth, w, ablation_flags('e'));
  double manual = full.logmse;
  for (int k = 0; k < 4; ++k) manual += w.lambda[k] * (full.bce[k] + full.iou[k] + full.dec[k]);
  CHECK(std::abs(full.total - manual) < 1e-6);
  CHECK(std::abs(full.total - full.recompose(w)) < 1e-12);
  CHECK(full.bce[0] == doctest::Approx(bce_loss(p.mls_logits[0], gt).item()));

  const auto b = total_loss(p, gt, depth, w, ablation_flags('b'));
  CHECK(std::abs(b.total - w.lambda[3] * (bce_loss(p.saliency_logits, gt).item() +
                                          iou_loss(p.saliency_logits, gt).item())) < 1e-12);
  CHECK(b.logmse == 0);
  CHECK_FALSE(b.level_active[0]);
  for (double d : b.dec) CHECK(d == 0);
}

TEST_CASE("every term is non-negative") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto gt = random_gt(rng, 32);
    const auto logits = column(test::uniform_values(rng, 32, -6, 6));
    const auto dp = column(test::uniform_values(rng, 32, 0, 1));
    const auto dg = column(test::uniform_values(rng, 32, 0, 1));
    CHECK(bce_loss(logits, gt).item() >= 0);
    CHECK(iou_loss(logits, gt).item() >= 0);
    CHECK(logmse_loss(dp, dg).item() >= 0);
    CHECK(dec_loss(logits, gt, dp, dg).item() >= 0);
  }
}

}  // TEST_SUITE
