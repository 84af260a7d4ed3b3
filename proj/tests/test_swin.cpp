// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "dftr/ops.hpp"
#include "dftr/swin.hpp"
#include "dftr/verify.hpp"
#include "helpers.hpp"

using namespace dftr;
using namespace dftr::swin;

namespace {

struct Fixture {
  ParamStore store;
  Rng rng{21};
  Initializer init{store, rng};
};

TokenMap random_map(Rng& rng, std::size_t h, std::size_t w, std::size_t c) {
  return TokenMap::make(Tensor::from({h * w, c}, test::uniform_values(rng, h * w * c)), h, w);
}

void zero(Tensor& t) {
  for (auto& v : t.mutable_data()) v = 0;
}

}  // namespace

TEST_SUITE("swin") {

TEST_CASE("window partition orders windows and tokens row-major") {
  Rng rng(1);
  const auto x = random_map(rng, 4, 4, 1);
  const auto one = window_partition(x, 4);
  CHECK(one.shape() == Shape{1, 16, 1});
  CHECK(test::max_abs_diff(one.data(), x.tokens.data()) == 0);

  const auto four = window_partition(x, 2);
  CHECK(four.shape() == Shape{4, 4, 1});
  const std::size_t expect[] = {0, 1, 4, 5};
  for (std::size_t i = 0; i < 4; ++i) CHECK(four[i] == x.tokens[expect[i]]);
  CHECK_THROWS_AS(window_partition(x, 3), DimensionError);
}

TEST_CASE("window reverse inverts partition bit-exactly") {
  Rng rng(2);
  const auto x = random_map(rng, 8, 8, 5);
  for (std::size_t win : {1, 2, 4, 8}) {
    const auto back = window_reverse(window_partition(x, win), win, 8, 8);
    CHECK(test::max_abs_diff(back.tokens.data(), x.tokens.data()) == 0);
  }
}

TEST_CASE("cyclic shift reads from the wrapped offset and inverts") {
  Rng rng(3);
  const auto x = random_map(rng, 4, 6, 2);
  const auto s = cyclic_shift(x, 1, 2);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t k = 0; k < 2; ++k)
        CHECK(s.tokens[(r * 6 + c) * 2 + k] == x.tokens[(((r + 1) % 4) * 6 + (c + 2) % 6) * 2 + k]);
  const auto back = cyclic_shift(s, -1, -2);
  CHECK(test::max_abs_diff(back.tokens.data(), x.tokens.data()) == 0);
}

TEST_CASE("shifted window mask blocks exactly the pairs split by the wrap") {
  const std::size_t n = 4, win = 2, shift = 1;
  const auto mask = shifted_window_mask(n, n, win, shift);
  CHECK(mask.shape() == Shape{4, 4, 4});
  for (std::size_t wy = 0; wy < 2; ++wy)
    for (std::size_t wx = 0; wx < 2; ++wx)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) {
          const std::size_t ri = wy * win + i / win, ci = wx * win + i % win;
          const std::size_t rj = wy * win + j / win, cj = wx * win + j % win;
          const bool same = (ri + shift >= n) == (rj + shift >= n) && (ci + shift >= n) == (cj + shift >= n);
          const double v = mask[((wy * 2 + wx) * 4 + i) * 4 + j];
          CHECK(v == (same ? 0.0 : kMaskedLogit));
        }
}

TEST_CASE("relative position index covers the table and is translation invariant") {
  const std::size_t win = 3, t = 9;
  const auto idx = relative_position_index(win);
  CHECK(idx.size() == t * t);
  for (std::size_t i = 0; i < t; ++i) CHECK(idx[i * t + i] == (win - 1) * (2 * win - 1) + (win - 1));
  for (auto v : idx) CHECK(v < (2 * win - 1) * (2 * win - 1));
  CHECK(idx[0 * t + 4] == idx[4 * t + 8]);
}

TEST_CASE("single-token windows reduce attention to the value projection") {
  Fixture f;
  Rng rng(4);
  auto p = make_block(f.init, "b", {4, 2, 1, 0, 4, true});
  const auto x = random_map(rng, 2, 2, 4);
  const auto out = wmsa(x, p);
  const auto qkv = linear(x.tokens, p.qkv.weight, p.qkv.bias);
  const auto expect = linear(slice(qkv, 1, 8, 4), p.proj.weight, p.proj.bias);
  CHECK(test::max_abs_diff(out.tokens.data(), expect.data()) < 1e-14);
}

TEST_CASE("attention rows sum to one over unmasked keys") {
  Fixture f;
  Rng rng(5);
  auto p = make_block(f.init, "b", {4, 2, 2, 1, 4, true});
  for (auto& v : p.rel_bias_table.mutable_data()) v = rng.uniform(-1, 1);
  Tensor probs;
  sw_msa(random_map(rng, 4, 4, 4), p, &probs);
  const auto mask = shifted_window_mask(4, 4, 2, 1);
  CHECK(probs.shape() == Shape{4, 2, 4, 4});
  for (std::size_t w = 0; w < 4; ++w)
    for (std::size_t h = 0; h < 2; ++h)
      for (std::size_t i = 0; i < 4; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < 4; ++j) {
          const double pr = probs[((w * 2 + h) * 4 + i) * 4 + j];
          if (mask[(w * 4 + i) * 4 + j] != 0) CHECK(pr < 1e-12);
          s += pr;
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
}

TEST_CASE("zero shift makes sw_msa identical to wmsa") {
  Fixture f;
  Rng rng(6);
  const auto p = make_block(f.init, "b", {4, 2, 2, 0, 4, true});
  const auto x = random_map(rng, 4, 4, 4);
  CHECK(test::max_abs_diff(sw_msa(x, p).tokens.data(), wmsa(x, p).tokens.data()) == 0);
}

TEST_CASE("zeroed output projections make a block the identity") {
  Fixture f;
  Rng rng(7);
  auto p = make_block(f.init, "b", {8, 2, 2, 1, 4, true});
  zero(p.proj.weight);
  zero(p.proj.bias);
  zero(p.fc2.weight);
  zero(p.fc2.bias);
  const auto x = random_map(rng, 4, 4, 8);
  const auto y = swin_block(x, p);
  CHECK(y.tokens.shape() == x.tokens.shape());
  CHECK(test::max_abs_diff(y.tokens.data(), x.tokens.data()) == 0);
}

TEST_CASE("block parameters validate heads and shift") {
  Fixture f;
  CHECK_THROWS_AS(make_block(f.init, "a", {6, 4, 2, 0, 4, true}), std::invalid_argument);
  CHECK_THROWS_AS(make_block(f.init, "b", {4, 1, 4, 1, 4, true}), std::invalid_argument);
}

TEST_CASE("patch embedding: shapes, linearity and one-hot probes") {
  Fixture f;
  auto proj = make_linear(f.init, "pe", 48, 2);
  const auto t = patch_embed(Tensor::zeros({64, 3}), 8, 8, proj);
  CHECK(t.tokens.shape() == Shape{4, 2});
  for (double v : t.tokens.data()) CHECK(v == 0);

  auto rgb = Tensor::zeros({64, 3});
  const std::size_t ky = 2, kx = 1, ch = 2;
  rgb.mutable_data()[((4 + ky) * 8 + 4 + kx) * 3 + ch] = 1.0;  // patch (1,1)
  const auto probe = patch_embed(rgb, 8, 8, proj);
  const std::size_t row = (ky * 4 + kx) * 3 + ch;
  for (std::size_t k = 0; k < 2; ++k) CHECK(probe.tokens[3 * 2 + k] == proj.weight[row * 2 + k]);
  CHECK_THROWS_AS(patch_embed(Tensor::zeros({36, 3}), 6, 6, proj), DimensionError);
}

TEST_CASE("patch merge halves the grid and sums neighbours under hand-built weights") {
  Fixture f;
  auto p = make_patch_merge(f.init, "pm", 3);
  CHECK(patch_merge(TokenMap::make(Tensor::zeros({16, 3}), 4, 4), p).tokens.shape() == Shape{4, 6});

  for (auto& v : p.reduction.mutable_data()) v = 0;
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t j = 0; j < 3; ++j) p.reduction.mutable_data()[(n * 3 + j) * 6 + j] = 1.0;
  const std::vector<double> u{0.3, -1.2, 2.0};
  std::vector<double> tokens;
  for (int i = 0; i < 16; ++i) tokens.insert(tokens.end(), u.begin(), u.end());
  const auto out = patch_merge(TokenMap::make(Tensor::from({16, 3}, tokens), 4, 4), p);
  const double mean = (u[0] + u[1] + u[2]) / 3;
  double var = 0;
  for (double v : u) var += (v - mean) * (v - mean) / 3;
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(out.tokens[t * 6 + j] == doctest::Approx(4 * (u[j] - mean) / std::sqrt(var + 1e-5)).epsilon(1e-12));
      CHECK(out.tokens[t * 6 + 3 + j] == 0);
    }
  CHECK_THROWS_AS(patch_merge(TokenMap::make(Tensor::zeros({9, 3}), 3, 3), p), DimensionError);
}

TEST_CASE("encoder produces the four-level pyramid deterministically") {
  EncoderConfig cfg;
  auto encode_once = [&] {
    ParamStore store;
    Rng rng(9);
    Initializer init(store, rng);
    Encoder enc(cfg, init);
    Rng data(10);
    return enc.encode(Tensor::from({64 * 64, 3}, test::uniform_values(data, 64 * 64 * 3, 0, 1)));
  };
  const auto a = encode_once(), b = encode_once();
  const std::pair<std::size_t, std::size_t> expect[] = {{256, 16}, {64, 32}, {16, 64}, {4, 128}};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a[i].tokens.shape() == Shape{expect[i].first, expect[i].second});
    CHECK(test::max_abs_diff(a[i].tokens.data(), b[i].tokens.data()) == 0);
  }
}

TEST_CASE("full-scale shapes are constructible") {
  EncoderConfig cfg;
  cfg.img_size = 352;
  cfg.embed_dim = 128;
  cfg.depths = {2, 2, 18, 2};
  cfg.heads = {4, 8, 16, 32};
  cfg.window = 11;
  cfg.validate();
  const auto s = cfg.feature_shapes();
  CHECK(s[0] == std::pair<std::size_t, std::size_t>{7744, 128});
  CHECK(s[1] == std::pair<std::size_t, std::size_t>{1936, 256});
  CHECK(s[2] == std::pair<std::size_t, std::size_t>{484, 512});
  CHECK(s[3] == std::pair<std::size_t, std::size_t>{121, 1024});
}

TEST_CASE("encoder configuration errors") {
  EncoderConfig bad;
  bad.img_size = 60;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  EncoderConfig heads;
  heads.heads = {3, 2, 4, 8};
  CHECK_THROWS_AS(heads.validate(), std::invalid_argument);
}

TEST_CASE("window and shift rules for decoder chains") {
  CHECK(window_and_shift(8, 4, 0) == std::pair<std::size_t, std::size_t>{4, 0});
  CHECK(window_and_shift(8, 4, 1) == std::pair<std::size_t, std::size_t>{4, 2});
  CHECK(window_and_shift(2, 4, 1) == std::pair<std::size_t, std::size_t>{2, 0});
  CHECK(decoder_heads(2) == 1);
  CHECK(decoder_heads(16) == 2);
  CHECK(decoder_heads(48) == 6);
  CHECK(decoder_heads(12) == 1);
}

TEST_CASE("attention matches the pairwise oracle on small grids") {
  Fixture f;
  Rng rng(11);
  auto p = make_block(f.init, "b", {4, 2, 2, 1, 4, true});
  for (auto& v : p.rel_bias_table.mutable_data()) v = rng.uniform(-1, 1);
  const auto x = random_map(rng, 4, 4, 4);
  const auto oracle = verify::attention_oracle(x.tokens, 4, 4, p, 2, 1);
  CHECK(test::max_abs_diff(sw_msa(x, p).tokens.data(), oracle.data()) < 1e-12);
}

}  // TEST_SUITE
