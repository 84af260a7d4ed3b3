// SPDX-License-Identifier: Apache-2.0
#include "dftr/swin.hpp"

#include <cmath>
#include <stdexcept>

#include "dftr/ops.hpp"

namespace dftr::swin {
namespace {

std::size_t wrap(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

std::string block_name(const std::string& prefix, const char* leaf) { return prefix + "." + leaf; }

}  // namespace

TokenMap TokenMap::make(Tensor tokens, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw DimensionError("token grid must be at least 1x1");
  if (tokens.rank() != 2 || tokens.dim(0) != h * w)
    throw DimensionError("token tensor " + to_string(tokens.shape()) + " does not match grid " +
                         std::to_string(h) + "x" + std::to_string(w));
  return TokenMap{std::move(tokens), h, w};
}

// ---------------------------------------------------------------------------
// configuration

std::size_t EncoderConfig::stage_grid(int stage) const {
  return static_cast<std::size_t>(img_size / patch_size) >> stage;
}

std::size_t EncoderConfig::stage_channels(int stage) const {
  return static_cast<std::size_t>(embed_dim) << stage;
}

std::size_t EncoderConfig::stage_window(int stage) const {
  return window_and_shift(stage_grid(stage), static_cast<std::size_t>(window), 0).first;
}

void EncoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("encoder config: " + m); };
  if (patch_size <= 0 || embed_dim <= 0 || window <= 0 || mlp_ratio <= 0)
    fail("patch_size, embed_dim, window and mlp_ratio must be positive");
  if (img_size <= 0 || img_size % (patch_size * 8) != 0)
    fail("img_size " + std::to_string(img_size) + " must be a positive multiple of " +
         std::to_string(patch_size * 8));
  for (int k = 0; k < 4; ++k) {
    if (depths[k] < 1) fail("stage " + std::to_string(k) + " needs at least one block");
    if (heads[k] < 1 || stage_channels(k) % static_cast<std::size_t>(heads[k]) != 0)
      fail("stage " + std::to_string(k) + " channels " + std::to_string(stage_channels(k)) +
           " not divisible by " + std::to_string(heads[k]) + " heads");
    const std::size_t grid = stage_grid(k);
    const std::size_t win = std::min(grid, static_cast<std::size_t>(window));
    if (grid % win != 0)
      fail("stage " + std::to_string(k) + " grid " + std::to_string(grid) +
           " not divisible by window " + std::to_string(window));
  }
}

std::array<std::pair<std::size_t, std::size_t>, 4> EncoderConfig::feature_shapes() const {
  std::array<std::pair<std::size_t, std::size_t>, 4> out;
  for (int k = 0; k < 4; ++k) out[k] = {stage_grid(k) * stage_grid(k), stage_channels(k)};
  return out;
}

std::size_t decoder_heads(std::size_t channels) {
  std::size_t h = std::max<std::size_t>(1, channels / 8);
  while (channels % h != 0) --h;
  return h;
}

std::pair<std::size_t, std::size_t> window_and_shift(std::size_t grid, std::size_t window,
                                                     std::size_t index) {
  const std::size_t win = window >= grid ? grid : window;
  if (win == 0 || grid % win != 0)
    throw std::invalid_argument("grid " + std::to_string(grid) + " not divisible by window " +
                                std::to_string(window));
  const std::size_t shift = (index % 2 == 1 && win < grid) ? win / 2 : 0;
  return {win, shift};
}

// ---------------------------------------------------------------------------
// parameters

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

LinearParams make_linear(Initializer& init, const std::string& name, std::size_t in,
                         std::size_t out, bool bias, double std) {
  LinearParams p;
  p.weight = init.truncated_normal(name + ".weight", {in, out}, std);
  if (bias) p.bias = init.zeros(name + ".bias", {out});
  return p;
}

LayerNormParams make_layernorm(Initializer& init, const std::string& name, std::size_t d) {
  return {init.ones(name + ".gamma", {d}), init.zeros(name + ".beta", {d})};
}

SwinBlockParams make_block(Initializer& init, const std::string& name, const BlockSpec& spec) {
  const std::size_t c = spec.channels;
  if (spec.heads == 0 || c % spec.heads != 0)
    throw std::invalid_argument(name + ": channels " + std::to_string(c) +
                                " not divisible by heads " + std::to_string(spec.heads));
  if (spec.shift != 0 && spec.shift != spec.window / 2)
    throw std::invalid_argument(name + ": shift must be 0 or window/2");
  SwinBlockParams p;
  p.heads = spec.heads;
  p.window = spec.window;
  p.shift = spec.shift;
  const auto std_for = [&](std::size_t fan_in) {
    return spec.fan_in_init ? fan_in_std(fan_in) : kInitStd;
  };
  p.norm1 = make_layernorm(init, block_name(name, "norm1"), c);
  p.qkv = make_linear(init, block_name(name, "attn.qkv"), c, 3 * c, true, std_for(c));
  p.proj = make_linear(init, block_name(name, "attn.proj"), c, c, true, std_for(c));
  if (spec.rel_pos_bias) {
    const std::size_t span = 2 * spec.window - 1;
    p.rel_bias_table = init.zeros(block_name(name, "attn.rel_bias"), {span * span, spec.heads});
  }
  p.norm2 = make_layernorm(init, block_name(name, "norm2"), c);
  const std::size_t hidden = c * static_cast<std::size_t>(spec.mlp_ratio);
  p.fc1 = make_linear(init, block_name(name, "mlp.fc1"), c, hidden, true, std_for(c));
  p.fc2 = make_linear(init, block_name(name, "mlp.fc2"), hidden, c, true, std_for(hidden));
  return p;
}

Tensor apply(const LinearParams& p, const Tensor& x) { return linear(x, p.weight, p.bias); }
Tensor apply(const LayerNormParams& p, const Tensor& x) { return layernorm(x, p.gamma, p.beta); }

// ---------------------------------------------------------------------------
// window geometry

Tensor window_partition(const TokenMap& x, std::size_t win) {
  if (win == 0 || x.h % win != 0 || x.w % win != 0)
    throw DimensionError("grid " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                         " not divisible by window " + std::to_string(win));
  const std::size_t c = x.channels();
  const std::size_t nwh = x.h / win, nww = x.w / win, t = win * win;
  std::vector<std::size_t> index;
  index.reserve(x.tokens.numel());
  for (std::size_t wy = 0; wy < nwh; ++wy)
    for (std::size_t wx = 0; wx < nww; ++wx)
      for (std::size_t iy = 0; iy < win; ++iy)
        for (std::size_t ix = 0; ix < win; ++ix) {
          const std::size_t tok = (wy * win + iy) * x.w + wx * win + ix;
          for (std::size_t k = 0; k < c; ++k) index.push_back(tok * c + k);
        }
  return gather(x.tokens, std::move(index), {nwh * nww, t, c});
}

TokenMap window_reverse(const Tensor& windows, std::size_t win, std::size_t h, std::size_t w) {
  if (win == 0 || h % win != 0 || w % win != 0)
    throw DimensionError("grid " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by window " + std::to_string(win));
  const std::size_t nww = w / win, t = win * win;
  if (windows.rank() != 3 || windows.dim(0) != (h / win) * nww || windows.dim(1) != t)
    throw DimensionError("window tensor " + to_string(windows.shape()) + " does not tile a " +
                         std::to_string(h) + "x" + std::to_string(w) + " grid");
  const std::size_t c = windows.dim(2);
  std::vector<std::size_t> index(h * w * c);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t col = 0; col < w; ++col) {
      const std::size_t widx = (r / win) * nww + col / win;
      const std::size_t inner = (r % win) * win + col % win;
      for (std::size_t k = 0; k < c; ++k) index[(r * w + col) * c + k] = (widx * t + inner) * c + k;
    }
  return TokenMap::make(gather(windows, std::move(index), {h * w, c}), h, w);
}

TokenMap cyclic_shift(const TokenMap& x, long dy, long dx) {
  const std::size_t c = x.channels();
  std::vector<std::size_t> index(x.tokens.numel());
  for (std::size_t r = 0; r < x.h; ++r)
    for (std::size_t col = 0; col < x.w; ++col) {
      const std::size_t src = wrap(static_cast<long>(r) + dy, x.h) * x.w +
                              wrap(static_cast<long>(col) + dx, x.w);
      for (std::size_t k = 0; k < c; ++k) index[(r * x.w + col) * c + k] = src * c + k;
    }
  return TokenMap::make(gather(x.tokens, std::move(index), x.tokens.shape()), x.h, x.w);
}

std::vector<int> shift_region_ids(std::size_t h, std::size_t w, std::size_t win, std::size_t shift) {
  auto band = [&](std::size_t v, std::size_t n) {
    if (v < n - win) return 0;
    if (v < n - shift) return 1;
    return 2;
  };
  std::vector<int> ids(h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) ids[r * w + c] = 3 * band(r, h) + band(c, w);
  return ids;
}

Tensor shifted_window_mask(std::size_t h, std::size_t w, std::size_t win, std::size_t shift) {
  const auto ids = shift_region_ids(h, w, win, shift);
  const std::size_t nwh = h / win, nww = w / win, t = win * win;
  std::vector<double> mask(nwh * nww * t * t, 0.0);
  for (std::size_t wy = 0; wy < nwh; ++wy)
    for (std::size_t wx = 0; wx < nww; ++wx) {
      const std::size_t widx = wy * nww + wx;
      auto id = [&](std::size_t i) {
        return ids[(wy * win + i / win) * w + wx * win + i % win];
      };
      for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < t; ++j)
          if (id(i) != id(j)) mask[(widx * t + i) * t + j] = kMaskedLogit;
    }
  return Tensor::from({nwh * nww, t, t}, std::move(mask));
}

std::vector<std::size_t> relative_position_index(std::size_t win) {
  const std::size_t t = win * win, span = 2 * win - 1;
  std::vector<std::size_t> idx(t * t);
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      const std::size_t dy = i / win + win - 1 - j / win;
      const std::size_t dx = i % win + win - 1 - j % win;
      idx[i * t + j] = dy * span + dx;
    }
  return idx;
}

// ---------------------------------------------------------------------------
// attention

Tensor window_attention(const Tensor& xw, const SwinBlockParams& p, const Tensor& mask,
                        Tensor* probs) {
  const std::size_t nw = xw.dim(0), t = xw.dim(1), c = xw.dim(2);
  const std::size_t heads = p.heads;
  if (heads == 0 || c % heads != 0)
    throw DimensionError("channels " + std::to_string(c) + " not divisible by " +
                         std::to_string(heads) + " heads");
  const std::size_t hd = c / heads;

  Tensor qkv = apply(p.qkv, reshape(xw, {nw * t, c}));
  qkv = permute(reshape(qkv, {nw, t, 3, heads, hd}), {2, 0, 3, 1, 4});
  auto parts = split(qkv, 0, {1, 1, 1});
  const Shape per_head{nw * heads, t, hd};
  Tensor q = scale(reshape(parts[0], per_head), 1.0 / std::sqrt(static_cast<double>(hd)));
  Tensor k = reshape(parts[1], per_head);
  Tensor v = reshape(parts[2], per_head);

  Tensor logits = reshape(bmm(q, k, kernels::Trans::Yes), {nw, heads, t, t});
  if (p.rel_bias_table.defined()) {
    const auto rel = relative_position_index(p.window);
    if (p.window * p.window != t)
      throw DimensionError("relative bias built for window " + std::to_string(p.window) +
                           " applied to " + std::to_string(t) + "-token windows");
    std::vector<std::size_t> index(heads * t * t);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t ij = 0; ij < t * t; ++ij) index[h * t * t + ij] = rel[ij] * heads + h;
    logits = add(logits, gather(p.rel_bias_table, std::move(index), {heads, t, t}));
  }
  if (mask.defined()) logits = add(logits, reshape(mask, {nw, 1, t, t}));

  Tensor attn = softmax_lastdim(logits);
  if (probs != nullptr) *probs = attn;
  Tensor out = bmm(reshape(attn, {nw * heads, t, t}), v);
  out = permute(reshape(out, {nw, heads, t, hd}), {0, 2, 1, 3});
  out = apply(p.proj, reshape(out, {nw * t, c}));
  return reshape(out, {nw, t, c});
}

TokenMap wmsa(const TokenMap& x, const SwinBlockParams& p, Tensor* probs) {
  Tensor windows = window_partition(x, p.window);
  return window_reverse(window_attention(windows, p, Tensor(), probs), p.window, x.h, x.w);
}

TokenMap sw_msa(const TokenMap& x, const SwinBlockParams& p, Tensor* probs) {
  if (p.shift == 0) return wmsa(x, p, probs);
  if (p.shift != p.window / 2) throw std::invalid_argument("shift must equal window/2");
  const long s = static_cast<long>(p.shift);
  TokenMap shifted = cyclic_shift(x, s, s);
  Tensor windows = window_partition(shifted, p.window);
  Tensor mask = shifted_window_mask(x.h, x.w, p.window, p.shift);
  TokenMap merged = window_reverse(window_attention(windows, p, mask, probs), p.window, x.h, x.w);
  return cyclic_shift(merged, -s, -s);
}

TokenMap swin_block(const TokenMap& x, const SwinBlockParams& p) {
  TokenMap normed = TokenMap::make(apply(p.norm1, x.tokens), x.h, x.w);
  Tensor y = add(x.tokens, sw_msa(normed, p).tokens);
  Tensor hidden = gelu(apply(p.fc1, apply(p.norm2, y)));
  return TokenMap::make(add(y, apply(p.fc2, hidden)), x.h, x.w);
}

// ---------------------------------------------------------------------------
// patch embedding / merging

PatchMergeParams make_patch_merge(Initializer& init, const std::string& name, std::size_t c) {
  PatchMergeParams p;
  p.norm = make_layernorm(init, name + ".norm", 4 * c);
  p.reduction = init.truncated_normal(name + ".reduction.weight", {4 * c, 2 * c});
  return p;
}

TokenMap patch_merge(const TokenMap& x, const PatchMergeParams& p) {
  if (x.h % 2 != 0 || x.w % 2 != 0)
    throw DimensionError("patch merge needs an even grid, got " + std::to_string(x.h) + "x" +
                         std::to_string(x.w));
  const std::size_t c = x.channels(), oh = x.h / 2, ow = x.w / 2;
  constexpr std::size_t offsets[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  std::vector<std::size_t> index;
  index.reserve(x.tokens.numel());
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t col = 0; col < ow; ++col)
      for (const auto& o : offsets) {
        const std::size_t tok = (2 * r + o[0]) * x.w + 2 * col + o[1];
        for (std::size_t k = 0; k < c; ++k) index.push_back(tok * c + k);
      }
  Tensor grouped = gather(x.tokens, std::move(index), {oh * ow, 4 * c});
  Tensor out = linear(apply(p.norm, grouped), p.reduction, Tensor());
  return TokenMap::make(out, oh, ow);
}

TokenMap patch_embed(const Tensor& rgb, std::size_t height, std::size_t width,
                     const LinearParams& proj, std::size_t patch) {
  if (rgb.rank() != 2 || rgb.dim(0) != height * width || rgb.dim(1) != 3)
    throw DimensionError("patch_embed expects [H*W, 3] pixels, got " + to_string(rgb.shape()));
  if (height % patch != 0 || width % patch != 0)
    throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                         " not divisible by patch size " + std::to_string(patch));
  const std::size_t gh = height / patch, gw = width / patch, feat = patch * patch * 3;
  std::vector<std::size_t> index;
  index.reserve(gh * gw * feat);
  for (std::size_t ty = 0; ty < gh; ++ty)
    for (std::size_t tx = 0; tx < gw; ++tx)
      for (std::size_t ky = 0; ky < patch; ++ky)
        for (std::size_t kx = 0; kx < patch; ++kx)
          for (std::size_t ch = 0; ch < 3; ++ch)
            index.push_back(((ty * patch + ky) * width + tx * patch + kx) * 3 + ch);
  Tensor patches = gather(rgb, std::move(index), {gh * gw, feat});
  return TokenMap::make(apply(proj, patches), gh, gw);
}

// ---------------------------------------------------------------------------
// encoder

Encoder::Encoder(const EncoderConfig& cfg, Initializer& init) : cfg_(cfg) {
  cfg_.validate();
  const auto patch = static_cast<std::size_t>(cfg_.patch_size);
  patch_embed_ = make_linear(init, "encoder.patch_embed", patch * patch * 3,
                             static_cast<std::size_t>(cfg_.embed_dim));
  for (int k = 0; k < 4; ++k) {
    const std::string prefix = "encoder.stages." + std::to_string(k);
    if (k > 0) stages_[k].downsample = make_patch_merge(init, prefix + ".downsample", cfg_.stage_channels(k - 1));
    for (int j = 0; j < cfg_.depths[k]; ++j) {
      const auto [win, shift] = window_and_shift(cfg_.stage_grid(k),
                                                 static_cast<std::size_t>(cfg_.window),
                                                 static_cast<std::size_t>(j));
      BlockSpec spec{cfg_.stage_channels(k), static_cast<std::size_t>(cfg_.heads[k]), win, shift,
                     cfg_.mlp_ratio, cfg_.rel_pos_bias};
      stages_[k].blocks.push_back(make_block(init, prefix + ".blocks." + std::to_string(j), spec));
    }
  }
}

std::array<TokenMap, 4> Encoder::encode(const Tensor& rgb) const {
  const auto side = static_cast<std::size_t>(cfg_.img_size);
  if (rgb.rank() != 2 || rgb.dim(0) != side * side || rgb.dim(1) != 3)
    throw DimensionError("encoder configured for " + std::to_string(side) + "x" +
                         std::to_string(side) + " RGB input, got " + to_string(rgb.shape()));
  std::array<TokenMap, 4> features;
  TokenMap x = patch_embed(rgb, side, side, patch_embed_, static_cast<std::size_t>(cfg_.patch_size));
  for (int k = 0; k < 4; ++k) {
    if (k > 0) x = patch_merge(x, stages_[k].downsample);
    for (const auto& block : stages_[k].blocks) x = swin_block(x, block);
    features[k] = x;
  }
  return features;
}

}  // namespace dftr::swin
