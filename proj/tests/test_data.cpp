// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dftr/data.hpp"
#include "helpers.hpp"

using namespace dftr;
using namespace dftr::data;
using dftr::test::TempDir;

namespace {

bool is_binary(const Image& m) {
  for (double v : m.data)
    if (v != 0.0 && v != 1.0) return false;
  return true;
}

double coverage(const Image& m) {
  double s = 0;
  for (double v : m.data) s += v;
  return s / static_cast<double>(m.data.size());
}

Image gradient(std::size_t w, std::size_t h) {
  Image img = Image::blank(w, h, 1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      img.at(y, x) = 0.5 * static_cast<double>(x) / static_cast<double>(w - 1) +
                     0.3 * static_cast<double>(y) / static_cast<double>(h - 1);
  return img;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("netpbm minimal file") {
  Image white = Image::blank(1, 1, 3, 1.0);
  const std::string bytes = encode_pnm(white);
  CHECK(bytes == std::string("P6\n1 1\n255\n\xFF\xFF\xFF", 14));
  CHECK(decode_pnm(bytes, 3) == white);
  CHECK(encode_pnm(Image::blank(2, 1, 1, 0.0)) == std::string("P5\n2 1\n255\n\0\0", 13));
}

TEST_CASE("byte quantization") {
  CHECK(to_byte(0.0) == 0);
  CHECK(to_byte(1.0) == 255);
  CHECK(to_byte(-0.3) == 0);
  CHECK(to_byte(2.0) == 255);
  CHECK(to_byte(0.5) == 128);
  for (int v = 0; v < 256; ++v) CHECK(to_byte(from_byte(static_cast<unsigned char>(v))) == v);
}

TEST_CASE("file round trips are byte-identical") {
  TempDir dir("dftr_data");
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Image rgb = test::random_image(rng, 8, 8, 3);
    const Image gray = test::random_image(rng, 8, 8, 1);
    save_ppm(dir / "a.ppm", rgb);
    save_pgm(dir / "a.pgm", gray);
    const std::string ppm = read_file(dir / "a.ppm"), pgm = read_file(dir / "a.pgm");
    const Image rgb2 = load_ppm(dir / "a.ppm"), gray2 = load_pgm(dir / "a.pgm");
    save_ppm(dir / "b.ppm", rgb2);
    save_pgm(dir / "b.pgm", gray2);
    CHECK(read_file(dir / "b.ppm") == ppm);
    CHECK(read_file(dir / "b.pgm") == pgm);
    CHECK(load_ppm(dir / "b.ppm") == rgb2);
    CHECK(test::max_abs_diff(rgb.data, rgb2.data) <= 0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("parse errors carry a byte offset") {
  const std::string good = encode_pnm(Image::blank(2, 2, 1, 0.5));  // header is 11 bytes
  SUBCASE("bad magic") {
    try {
      decode_pnm("P6" + good.substr(2), 1);
      FAIL("expected a parse error");
    } catch (const ImageParseError& e) {
      CHECK(e.offset == 0);
    }
  }
  SUBCASE("truncated payload") {
    try {
      decode_pnm(good.substr(0, good.size() - 1), 1, "t.pgm");
      FAIL("expected a parse error");
    } catch (const ImageParseError& e) {
      CHECK(e.offset == good.size() - 1);
      const std::string msg = e.what();
      CHECK(msg.find("expected 4 bytes, got 3") != std::string::npos);
      CHECK(msg.find("t.pgm") != std::string::npos);
    }
  }
  SUBCASE("trailing bytes") {
    CHECK_THROWS_AS(decode_pnm(good + "x", 1), ImageParseError);
  }
  SUBCASE("bad maxval") {
    try {
      decode_pnm("P5\n2 2\n15\n\1\1\1\1", 1);
      FAIL("expected a parse error");
    } catch (const ImageParseError& e) {
      CHECK(e.offset == 6);
    }
  }
  SUBCASE("missing width") {
    CHECK_THROWS_AS(decode_pnm("P5\nx 2\n255\n", 1), ImageParseError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_pgm("/nonexistent/dir/x.pgm"), IoError);
  }
}

TEST_CASE("shape names") {
  CHECK(parse_shape("blob") == ShapeKind::Blob);
  CHECK(to_string(ShapeKind::Triangle) == "triangle");
  CHECK(parse_shape_list("disk,rectangle").size() == 2);
  CHECK_THROWS_AS(parse_shape("star"), std::invalid_argument);
  CHECK_THROWS_AS(parse_shape_list(""), std::invalid_argument);
}

TEST_CASE("scene generation is deterministic") {
  SceneSpec spec;
  spec.seed = 7;
  spec.shapes = {ShapeKind::Disk};
  const Sample a = make_scene(spec, 0), b = make_scene(spec, 0);
  CHECK(a.rgb == b.rgb);
  CHECK(a.depth == b.depth);
  CHECK(a.mask == b.mask);
  CHECK(a.shape == ShapeKind::Disk);

  TempDir d1("dftr_gen"), d2("dftr_gen");
  generate(spec, 1, d1.path());
  generate(spec, 1, d2.path());
  for (const char* f : {"rgb/000000.ppm", "depth/000000.pgm", "mask/000000.pgm", "manifest.tsv"})
    CHECK(read_file(d1 / f) == read_file(d2 / f));

  spec.seed = 8;
  CHECK_FALSE(make_scene(spec, 0).rgb == a.rgb);
}

TEST_CASE("generated files load back to the in-memory sample") {
  SceneSpec spec;
  spec.seed = 3;
  TempDir dir("dftr_gen");
  generate(spec, 3, dir.path());
  const auto loaded = load_dataset(dir.path());
  REQUIRE(loaded.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const Sample s = make_scene(spec, i);
    CHECK(loaded[i].name == s.name);
    CHECK(loaded[i].seed == s.seed);
    CHECK(loaded[i].shape == s.shape);
    CHECK(loaded[i].rgb == s.rgb);
    CHECK(loaded[i].depth == s.depth);
    CHECK(loaded[i].mask == s.mask);
  }
}

TEST_CASE("scene invariants over 100 seeds") {
  std::set<ShapeKind> seen;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SceneSpec spec;
    spec.seed = seed;
    const Sample s = make_scene(spec, 0);
    seen.insert(s.shape);
    REQUIRE(is_binary(s.mask));
    const double cov = coverage(s.mask);
    CHECK(cov >= 0.02);
    CHECK(cov <= 0.60);

    double min_in = 2, max_out = -1;
    for (std::size_t i = 0; i < s.mask.data.size(); ++i) {
      if (s.mask.data[i] == 1.0)
        min_in = std::min(min_in, s.depth.data[i]);
      else
        max_out = std::max(max_out, s.depth.data[i]);
    }
    CHECK(min_in - max_out >= 0.1);

    // Object at least two pixels from every border.
    bool inside = true;
    for (std::size_t y = 0; y < s.mask.height; ++y)
      for (std::size_t x = 0; x < s.mask.width; ++x)
        if (s.mask.at(y, x) == 1.0)
          inside = inside && x >= 2 && y >= 2 && x + 2 < s.mask.width && y + 2 < s.mask.height;
    CHECK(inside);
    CHECK(std::all_of(s.rgb.data.begin(), s.rgb.data.end(),
                      [](double v) { return v >= 0.0 && v <= 1.0; }));
  }
  CHECK(seen.size() == 4);
}

TEST_CASE("resampling") {
  Rng rng(12);
  SUBCASE("same size is the identity") {
    const Image img = test::random_image(rng, 9, 7, 3);
    CHECK(resize_bilinear(img, 9, 7) == img);
    CHECK(resize_nearest(img, 9, 7) == img);
  }
  SUBCASE("constant stays constant") {
    const Image c = Image::blank(10, 6, 3, 0.37);
    const Image up = resize_bilinear(c, 23, 17), down = resize_bilinear(c, 3, 2);
    CHECK(test::max_abs_diff(up.data, Image::blank(23, 17, 3, 0.37).data) < 1e-14);
    CHECK(test::max_abs_diff(down.data, Image::blank(3, 2, 3, 0.37).data) < 1e-14);
  }
  SUBCASE("smooth gradient survives down and up") {
    const Image g = gradient(64, 64);
    const Image back = resize_bilinear(resize_bilinear(g, 32, 32), 64, 64);
    CHECK(test::max_abs_diff(back.data, g.data) < 0.05);
  }
  SUBCASE("nearest keeps masks binary") {
    const Image m = test::random_mask(rng, 13, 11);
    CHECK(is_binary(resize_nearest(m, 7, 29)));
  }
  SUBCASE("flip is an involution") {
    const Image img = test::random_image(rng, 8, 5, 3);
    CHECK(flip_horizontal(flip_horizontal(img)) == img);
    CHECK(flip_horizontal(img).at(2, 0, 1) == img.at(2, 7, 1));
  }
  SUBCASE("crop") {
    const Image img = test::random_image(rng, 8, 6, 1);
    const Image c = crop(img, 2, 1, 4, 3);
    CHECK(c.width == 4);
    CHECK(c.height == 3);
    CHECK(c.at(2, 3) == img.at(3, 5));
    CHECK_THROWS_AS(crop(img, 6, 0, 4, 2), std::invalid_argument);
  }
  SUBCASE("input resize and prediction rescale") {
    SceneSpec spec;
    spec.size = 48;
    const Sample s = make_scene(spec, 0);
    const Sample r = resize_to_input(s, 32);
    CHECK(r.rgb.width == 32);
    CHECK(r.depth.height == 32);
    CHECK(is_binary(r.mask));
    CHECK(resize_to_input(s, 48).rgb == s.rgb);
    const Image back = rescale_prediction(r.depth, 48, 48);
    CHECK(back.width == 48);
    CHECK(back.height == 48);
  }
}

TEST_CASE("augmentation") {
  SceneSpec spec;
  spec.seed = 21;
  const Sample s = make_scene(spec, 0);
  const std::size_t side = s.rgb.width;

  SUBCASE("identity parameters leave the sample unchanged") {
    const Sample a = apply_augment(s, AugmentParams::identity(side, side, side), side);
    CHECK(a.rgb == s.rgb);
    CHECK(a.depth == s.depth);
    CHECK(a.mask == s.mask);
  }
  SUBCASE("double flip restores the sample") {
    AugmentParams p = AugmentParams::identity(side, side, side);
    p.flip = true;
    const Sample once = apply_augment(s, p, side);
    CHECK_FALSE(once.rgb == s.rgb);
    const Sample twice = apply_augment(once, p, side);
    CHECK(twice.rgb == s.rgb);
    CHECK(twice.depth == s.depth);
    CHECK(twice.mask == s.mask);
  }
  SUBCASE("flip is shared by all three maps") {
    AugmentParams p = AugmentParams::identity(side, side, side);
    p.flip = true;
    const Sample f = apply_augment(s, p, side);
    CHECK(f.rgb == flip_horizontal(s.rgb));
    CHECK(f.depth == flip_horizontal(s.depth));
    CHECK(f.mask == flip_horizontal(s.mask));
  }
  SUBCASE("drawn parameters respect the configuration") {
    Rng rng(99);
    AugmentConfig cfg;
    int flips = 0;
    for (int i = 0; i < 200; ++i) {
      const AugmentParams p = draw_augment(rng, cfg, side, side, side);
      flips += p.flip;
      CHECK(p.crop_w >= static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(side))));
      CHECK(p.crop_w <= side);
      CHECK(p.crop_x + p.crop_w <= side);
      CHECK(p.crop_y + p.crop_h <= side);
      CHECK(p.scale_side % cfg.snap == 0);
      const bool known = p.scale_side == snapped_side(0.75, side, 16) ||
                         p.scale_side == snapped_side(1.0, side, 16) ||
                         p.scale_side == snapped_side(1.25, side, 16);
      CHECK(known);
    }
    CHECK(flips > 60);
    CHECK(flips < 140);
  }
  SUBCASE("snapped sides") {
    CHECK(snapped_side(1.0, 64, 16) == 64);
    CHECK(snapped_side(0.75, 64, 16) == 48);
    CHECK(snapped_side(1.25, 64, 16) == 80);
  }
  SUBCASE("masks stay binary over 100 augmentations") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
      const Sample a = augment(make_scene(spec, static_cast<std::size_t>(i % 10)), rng, {}, side);
      CHECK(a.rgb.width == side);
      CHECK(a.mask.height == side);
      CHECK(is_binary(a.mask));
    }
  }
  SUBCASE("augmentation is a pure function of the rng state") {
    Rng r1(17), r2(17);
    const Sample a = augment(s, r1, {}, side), b = augment(s, r2, {}, side);
    CHECK(a.rgb == b.rgb);
    CHECK(a.mask == b.mask);
  }
}

TEST_CASE("tensor views round-trip") {
  Rng rng(2);
  const Image img = test::random_image(rng, 5, 4, 3);
  const Tensor t = to_tensor(img);
  CHECK(t.dim(0) == 20);
  CHECK(t.dim(1) == 3);
  CHECK(to_image(t, 5, 4) == img);
}

TEST_CASE("dataset loading errors") {
  TempDir dir("dftr_ds");
  CHECK_THROWS_AS(load_dataset(dir / "missing"), IoError);
  SceneSpec spec;
  generate(spec, 2, dir.path());
  std::filesystem::remove(dir / "mask/000001.pgm");
  CHECK_THROWS_AS(load_dataset(dir.path()), IoError);
}

}  // TEST_SUITE
