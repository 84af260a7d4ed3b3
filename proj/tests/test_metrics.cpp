// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "dftr/metrics.hpp"
#include "helpers.hpp"

using namespace dftr;
using namespace dftr::metrics;
using dftr::test::TempDir;

namespace {

// Naive per-threshold oracles: binarize, count, score. No shared helpers with
// the library beyond the threshold grid k/255.

double oracle_mae(const Image& p, const Image& g) {
  double s = 0;
  for (std::size_t y = 0; y < p.height; ++y)
    for (std::size_t x = 0; x < p.width; ++x) s += std::fabs(p.at(y, x) - g.at(y, x));
  return s / static_cast<double>(p.pixels());
}

Curve oracle_f_curve(const Image& p, const Image& g) {
  Curve out{};
  for (int k = 0; k < 256; ++k) {
    const double t = k / 255.0;
    double tp = 0, pp = 0, gp = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const bool a = p.data[i] >= t, b = g.data[i] >= 0.5;
      tp += a && b;
      pp += a;
      gp += b;
    }
    const double prec = tp / (pp + 1e-8), rec = tp / (gp + 1e-8);
    out[k] = 1.3 * prec * rec / (0.3 * prec + rec + 1e-8);
  }
  return out;
}

Curve oracle_e_curve(const Image& p, const Image& g) {
  Curve out{};
  const std::size_t n = p.data.size();
  double gsum = 0;
  for (double v : g.data) gsum += v >= 0.5;
  for (int k = 0; k < 256; ++k) {
    const double t = k / 255.0;
    std::vector<double> fm(n), gm(n);
    double mf = 0, mg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      fm[i] = p.data[i] >= t ? 1.0 : 0.0;
      gm[i] = g.data[i] >= 0.5 ? 1.0 : 0.0;
      mf += fm[i];
      mg += gm[i];
    }
    mf /= static_cast<double>(n);
    mg /= static_cast<double>(n);
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double e;
      if (gsum == 0) {
        e = 1.0 - fm[i];
      } else if (gsum == static_cast<double>(n)) {
        e = fm[i];
      } else {
        const double a = fm[i] - mf, b = gm[i] - mg;
        const double phi = 2 * a * b / (a * a + b * b + 1e-8);
        e = (phi + 1) * (phi + 1) / 4;
      }
      s += e;
    }
    out[k] = s / static_cast<double>(n);
  }
  return out;
}

double curve_max(const Curve& c) { return *std::max_element(c.begin(), c.end()); }

Image from_rows(std::size_t w, std::size_t h, std::initializer_list<double> v) {
  Image img = Image::blank(w, h, 1);
  img.data.assign(v.begin(), v.end());
  return img;
}

Image half_split(std::size_t side) {
  Image g = Image::blank(side, side, 1);
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side / 2; ++x) g.at(y, x) = 1;
  return g;
}

Image complement(const Image& a) {
  Image out = a;
  for (auto& v : out.data) v = 1.0 - v;
  return out;
}

Image hflip(const Image& a) {
  Image out = a;
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 0; x < a.width; ++x) out.at(y, x) = a.at(y, a.width - 1 - x);
  return out;
}

Image transpose(const Image& a) {
  Image out = Image::blank(a.height, a.width, 1);
  for (std::size_t y = 0; y < a.height; ++y)
    for (std::size_t x = 0; x < a.width; ++x) out.at(x, y) = a.at(y, x);
  return out;
}

/// Random map on the 8-bit grid, so it survives a PGM round trip unchanged.
Image random_quantized(Rng& rng, std::size_t w, std::size_t h) {
  Image img = Image::blank(w, h, 1);
  for (auto& v : img.data) v = from_byte(static_cast<unsigned char>(rng.below(256)));
  return img;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("threshold grid") {
  CHECK(threshold(0) == 0.0);
  CHECK(threshold(255) == 1.0);
  CHECK(threshold(51) == doctest::Approx(0.2));
}

TEST_CASE("mae hand cases") {
  Rng rng(3);
  const Image g = test::random_mask(rng, 7, 5);
  CHECK(mae(g, g) == 0.0);
  CHECK(mae(Image::blank(7, 5, 1, 0.5), g) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(mae(complement(g), g) == 1.0);
}

TEST_CASE("max F of an all-ones prediction on a half mask") {
  const Image g = half_split(4);
  const CurveScore f = max_f_measure(Image::blank(4, 4, 1, 1.0), g);
  CHECK(f.max == doctest::Approx(1.3 * 0.5 / (0.3 * 0.5 + 1.0)).epsilon(1e-7));
  CHECK(f.max == doctest::Approx(0.5652).epsilon(1e-4));
  for (double v : f.curve) CHECK(v == doctest::Approx(f.max).epsilon(1e-12));
}

TEST_CASE("perfect binary prediction scores ideal values") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Image g = test::random_mask(rng, 12, 9, 0.3);
    const SaliencyEval e = evaluate(g, g);
    CHECK(e.mae == 0.0);
    CHECK(e.f_beta_max == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(e.e_xi_max == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(e.s_alpha == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("S-measure") {
  SUBCASE("all-zero gt and prediction") {
    CHECK(s_measure(Image::blank(6, 6, 1), Image::blank(6, 6, 1)) == 1.0);
  }
  SUBCASE("all-one gt uses the prediction mean") {
    CHECK(s_measure(Image::blank(4, 4, 1, 0.25), Image::blank(4, 4, 1, 1.0)) == 0.25);
    CHECK(s_measure(Image::blank(4, 4, 1, 0.25), Image::blank(4, 4, 1, 0.0)) == 0.75);
  }
  SUBCASE("complement on a half split") {
    const Image g = half_split(4);
    const double s = s_measure(complement(g), g);
    CHECK(s < 0.5);
    CHECK(s >= 0.0);
  }
  SUBCASE("in range on random maps") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const double s = s_measure(test::random_image(rng, 10, 10), test::random_mask(rng, 10, 10));
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
  SUBCASE("invariant under transposition") {
    Rng rng(6);
    for (int trial = 0; trial < 10; ++trial) {
      const Image p = test::random_image(rng, 9, 13);
      const Image g = test::random_mask(rng, 9, 13);
      CHECK(std::fabs(s_measure(p, g) - s_measure(transpose(p), transpose(g))) < 1e-12);
    }
  }
  SUBCASE("better prediction scores higher") {
    const Image g = half_split(8);
    Image noisy = g;
    for (std::size_t i = 0; i < noisy.data.size(); i += 5) noisy.data[i] = 1.0 - noisy.data[i];
    CHECK(s_measure(noisy, g) > s_measure(complement(g), g));
    CHECK(s_measure(noisy, g) < 1.0);
  }
}

TEST_CASE("max E on match and complement") {
  const Image g = from_rows(4, 4, {1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  CHECK(max_e_measure(g, g).max == doctest::Approx(1.0).epsilon(1e-7));
  const CurveScore c = max_e_measure(complement(g), g);
  CHECK(std::fabs(c.max - curve_max(oracle_e_curve(complement(g), g))) < 1e-9);
  CHECK(c.max < 0.8);
}

TEST_CASE("max E degenerate branches") {
  const Image zeros = Image::blank(4, 4, 1), ones = Image::blank(4, 4, 1, 1.0);
  CHECK(max_e_measure(zeros, zeros).max == 1.0);
  CHECK(max_e_measure(ones, ones).max == 1.0);
  // Threshold 0 keeps every pixel; thresholds above 0 drop them all.
  CHECK(max_e_measure(zeros, ones).curve[0] == 1.0);
  CHECK(max_e_measure(zeros, ones).curve[1] == 0.0);
}

TEST_CASE("random 16x16 cases match naive oracles") {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    const Image p = test::random_image(rng, 16, 16);
    const Image g = test::random_mask(rng, 16, 16, rng.uniform(0.05, 0.9));
    CHECK(std::fabs(mae(p, g) - oracle_mae(p, g)) < 1e-9);

    const CurveScore f = max_f_measure(p, g);
    const Curve fo = oracle_f_curve(p, g);
    CHECK(std::fabs(f.max - curve_max(fo)) < 1e-9);
    CHECK(test::max_abs_diff(f.curve, fo) < 1e-9);

    const CurveScore e = max_e_measure(p, g);
    const Curve eo = oracle_e_curve(p, g);
    CHECK(std::fabs(e.max - curve_max(eo)) < 1e-9);
    CHECK(test::max_abs_diff(e.curve, eo) < 1e-9);
  }
}

TEST_CASE("values on the threshold grid bin exactly") {
  // Every grid value k/255 must count as >= its own threshold.
  Image p = Image::blank(256, 1, 1);
  Image g = Image::blank(256, 1, 1);
  for (std::size_t k = 0; k < 256; ++k) {
    p.data[k] = threshold(k);
    g.data[k] = k >= 128 ? 1 : 0;
  }
  const Curve fo = oracle_f_curve(p, g);
  CHECK(test::max_abs_diff(max_f_measure(p, g).curve, fo) < 1e-12);
  CHECK(max_f_measure(p, g).max == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("flip invariance of MAE, max F and max E") {
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    const Image p = test::random_image(rng, 11, 8);
    const Image g = test::random_mask(rng, 11, 8);
    const Image pf = hflip(p), gf = hflip(g);
    CHECK(std::fabs(mae(p, g) - mae(pf, gf)) < 1e-12);
    CHECK(max_f_measure(p, g).max == max_f_measure(pf, gf).max);
    CHECK(max_e_measure(p, g).max == max_e_measure(pf, gf).max);
  }
}

TEST_CASE("mae complement identity") {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const Image p = test::random_image(rng, 10, 6);
    const Image g = test::random_mask(rng, 10, 6);
    CHECK(std::fabs(mae(p, g) - mae(complement(p), complement(g))) < 1e-12);
  }
}

TEST_CASE("max F invariant under monotone rescaling of quantized maps") {
  Rng rng(9);
  const Image g = test::random_mask(rng, 12, 12);
  Image p = Image::blank(12, 12, 1);
  std::vector<int> level(p.data.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    level[i] = static_cast<int>(rng.below(16));
    p.data[i] = level[i] / 255.0;
  }
  Image affine = p, squared = p;
  for (std::size_t i = 0; i < level.size(); ++i) {
    affine.data[i] = (16 * level[i] + 3) / 255.0;
    squared.data[i] = (level[i] * level[i]) / 255.0;
  }
  const double base = max_f_measure(p, g).max;
  CHECK(max_f_measure(affine, g).max == doctest::Approx(base).epsilon(1e-12));
  CHECK(max_f_measure(squared, g).max == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(max_f_measure(Image::blank(4, 4, 1, 0.3), Image::blank(4, 4, 1)), EmptyMaskError);
  CHECK_THROWS_AS(mae(Image::blank(4, 4, 1), Image::blank(4, 5, 1)), std::invalid_argument);
  CHECK_THROWS_AS(s_measure(Image::blank(4, 4, 3), Image::blank(4, 4, 1)), std::invalid_argument);
  const SaliencyEval e = evaluate(Image::blank(4, 4, 1, 0.3), Image::blank(4, 4, 1));
  CHECK(e.empty_gt);
  CHECK(e.f_beta_max == 0.0);
}

TEST_CASE("evaluate_dir") {
  TempDir dir("dftr_metrics");
  const auto pred = dir / "pred";
  const auto gt = dir / "gt";
  std::filesystem::create_directories(pred);
  std::filesystem::create_directories(gt / "mask");
  Rng rng(31);

  SUBCASE("identical directory") {
    for (int i = 0; i < 3; ++i) {
      const Image g = test::random_mask(rng, 16, 16);
      save_pgm(pred / ("s" + std::to_string(i) + ".pgm"), g);
      save_pgm(gt / "mask" / ("s" + std::to_string(i) + ".pgm"), g);
    }
    const DirEval d = evaluate_dir(pred, gt);
    REQUIRE(d.images.size() == 3);
    CHECK(d.unmatched.empty());
    CHECK(d.mean.mae == 0.0);
    CHECK(d.mean.s_alpha == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(d.mean.f_beta_max == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(d.mean.e_xi_max == doctest::Approx(1.0).epsilon(1e-7));
  }

  SUBCASE("singleton equals the per-image scores") {
    save_pgm(pred / "a.pgm", random_quantized(rng, 16, 16));
    save_pgm(gt / "mask" / "a.pgm", test::random_mask(rng, 16, 16));
    const DirEval d = evaluate_dir(pred, gt);
    REQUIRE(d.images.size() == 1);
    const SaliencyEval& e = d.images[0].second;
    CHECK(d.mean.mae == e.mae);
    CHECK(d.mean.s_alpha == e.s_alpha);
    CHECK(d.mean.f_beta_max == e.f_beta_max);
    CHECK(d.mean.e_xi_max == e.e_xi_max);
  }

  SUBCASE("two images against mean-curve oracle") {
    const std::array<Image, 2> ps{random_quantized(rng, 16, 16), random_quantized(rng, 16, 16)};
    const std::array<Image, 2> gs{test::random_mask(rng, 16, 16, 0.3),
                                  test::random_mask(rng, 16, 16, 0.6)};
    for (int i = 0; i < 2; ++i) {
      save_pgm(pred / ("x" + std::to_string(i) + ".pgm"), ps[i]);
      save_pgm(gt / ("x" + std::to_string(i) + ".pgm"), gs[i]);
    }
    std::filesystem::remove_all(gt / "mask");
    const DirEval d = evaluate_dir(pred, gt);
    REQUIRE(d.images.size() == 2);

    Curve f{}, e{};
    for (int i = 0; i < 2; ++i) {
      const Curve fi = oracle_f_curve(ps[i], gs[i]), ei = oracle_e_curve(ps[i], gs[i]);
      for (int k = 0; k < 256; ++k) {
        f[k] += fi[k] / 2;
        e[k] += ei[k] / 2;
      }
    }
    const double m = (oracle_mae(ps[0], gs[0]) + oracle_mae(ps[1], gs[1])) / 2;
    const double s = (s_measure(ps[0], gs[0]) + s_measure(ps[1], gs[1])) / 2;
    CHECK(std::fabs(d.mean.mae - m) < 1e-9);
    CHECK(std::fabs(d.mean.f_beta_max - curve_max(f)) < 1e-9);
    CHECK(std::fabs(d.mean.e_xi_max - curve_max(e)) < 1e-9);
    CHECK(std::fabs(d.mean.s_alpha - s) < 1e-9);
  }

  SUBCASE("unmatched names and corrupt files") {
    save_pgm(pred / "both.pgm", random_quantized(rng, 8, 8));
    save_pgm(gt / "mask" / "both.pgm", test::random_mask(rng, 8, 8));
    save_pgm(pred / "only_pred.pgm", random_quantized(rng, 8, 8));
    save_pgm(gt / "mask" / "only_gt.pgm", test::random_mask(rng, 8, 8));
    save_pgm(gt / "mask" / "broken.pgm", test::random_mask(rng, 8, 8));
    std::ofstream(pred / "broken.pgm") << "P5\n8 8\n255\nxx";
    const DirEval d = evaluate_dir(pred, gt);
    CHECK(d.images.size() == 1);
    CHECK(d.unmatched == std::vector<std::string>{"only_gt", "only_pred"});
    REQUIRE(d.skipped.size() == 1);
    CHECK(d.skipped[0].first == "broken");
  }

  SUBCASE("report layout") {
    save_pgm(pred / "a.pgm", Image::blank(4, 4, 1, 0.0));
    save_pgm(gt / "mask" / "a.pgm", Image::blank(4, 4, 1, 0.0));
    save_pgm(pred / "b.pgm", half_split(4));
    save_pgm(gt / "mask" / "b.pgm", half_split(4));
    const std::string r = format_report(evaluate_dir(pred, gt));
    CHECK(r ==
          "name\tS\tmaxF\tmaxE\tMAE\n"
          "a\t1.0000\tNA\t1.0000\t0.0000\n"
          "b\t1.0000\t1.0000\t1.0000\t0.0000\n"
          "MEAN\t1.0000\t1.0000\t1.0000\t0.0000\n");
  }

  SUBCASE("missing directory") {
    CHECK_THROWS_AS(evaluate_dir(dir / "nope", gt), IoError);
  }
}

}  // TEST_SUITE
