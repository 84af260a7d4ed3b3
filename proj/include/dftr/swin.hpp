// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dftr/params.hpp"
#include "dftr/tensor.hpp"

// Hierarchical windowed-attention encoder: patch embedding, (shifted) window
// attention blocks, patch merging and the four-level feature pyramid.
namespace dftr::swin {

/// Logit added to attention pairs that must not interact.
inline constexpr double kMaskedLogit = -1e9;

/// Token sequence tokens[h*w, c] laid out row-major over an h x w grid.
struct TokenMap {
  Tensor tokens;
  std::size_t h = 0;
  std::size_t w = 0;

  static TokenMap make(Tensor tokens, std::size_t h, std::size_t w);
  std::size_t channels() const { return tokens.dim(1); }
  std::size_t count() const { return h * w; }
};

struct EncoderConfig {
  int img_size = 64;
  int patch_size = 4;
  int embed_dim = 16;
  std::array<int, 4> depths{1, 1, 2, 1};
  std::array<int, 4> heads{1, 2, 4, 8};
  int window = 4;
  int mlp_ratio = 4;
  bool rel_pos_bias = true;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  std::size_t stage_grid(int stage) const;
  std::size_t stage_channels(int stage) const;
  /// Window actually used at a stage: the configured one, or the whole grid
  /// when the grid is not larger than the window.
  std::size_t stage_window(int stage) const;
  /// (tokens, channels) of F4, F3, F2, F1 in that order.
  std::array<std::pair<std::size_t, std::size_t>, 4> feature_shapes() const;
};

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out], may be undefined
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

struct SwinBlockParams {
  LayerNormParams norm1;
  LinearParams qkv;
  LinearParams proj;
  Tensor rel_bias_table;  // [(2·window-1)², heads], undefined when disabled
  LayerNormParams norm2;
  LinearParams fc1;
  LinearParams fc2;
  std::size_t heads = 1;
  std::size_t window = 1;
  std::size_t shift = 0;
};

struct BlockSpec {
  std::size_t channels = 0;
  std::size_t heads = 1;
  std::size_t window = 1;
  std::size_t shift = 0;
  int mlp_ratio = 4;
  bool rel_pos_bias = true;
  bool fan_in_init = false;  // weights with std 1/sqrt(fan_in) instead of kInitStd
};

/// Weight std of encoder projections.
inline constexpr double kInitStd = 0.02;
/// Weight std for a projection with `fan_in` inputs under fan-in scaling.
double fan_in_std(std::size_t fan_in);

LinearParams make_linear(Initializer& init, const std::string& name, std::size_t in,
                         std::size_t out, bool bias = true, double std = kInitStd);
LayerNormParams make_layernorm(Initializer& init, const std::string& name, std::size_t d);
SwinBlockParams make_block(Initializer& init, const std::string& name, const BlockSpec& spec);

Tensor apply(const LinearParams& p, const Tensor& x);
Tensor apply(const LayerNormParams& p, const Tensor& x);

/// Largest divisor of `channels` not above max(1, channels/8).
std::size_t decoder_heads(std::size_t channels);
/// Window and shift for block `index` of a chain running on a square grid:
/// the window shrinks to the grid when it does not fit, and odd blocks shift
/// by half a window unless one window already covers the grid.
std::pair<std::size_t, std::size_t> window_and_shift(std::size_t grid, std::size_t window,
                                                     std::size_t index);

/// [nWindows, win², c]; windows in row-major order, tokens row-major inside.
Tensor window_partition(const TokenMap& x, std::size_t win);
TokenMap window_reverse(const Tensor& windows, std::size_t win, std::size_t h, std::size_t w);

/// out(r, c) = x((r + dy) mod h, (c + dx) mod w); i.e. a roll by (-dy, -dx).
TokenMap cyclic_shift(const TokenMap& x, long dy, long dx);

/// Region label of each token of the shifted grid (row-major): the three
/// bands [0, h-win), [h-win, h-shift), [h-shift, h) per axis, id = 3·row_band + col_band.
std::vector<int> shift_region_ids(std::size_t h, std::size_t w, std::size_t win, std::size_t shift);
/// [nWindows, win², win²] with 0 for pairs in the same region, kMaskedLogit otherwise.
Tensor shifted_window_mask(std::size_t h, std::size_t w, std::size_t win, std::size_t shift);
/// Index into the relative-position table for every (i, j) pair of a window.
std::vector<std::size_t> relative_position_index(std::size_t win);

/// Multi-head attention inside each window of xw[nW, T, c]; `mask` is
/// [nW, T, T] or undefined. When `probs` is non-null it receives the
/// attention matrix [nW, heads, T, T].
Tensor window_attention(const Tensor& xw, const SwinBlockParams& p, const Tensor& mask,
                        Tensor* probs = nullptr);

/// Window attention on the unshifted partition (the block's shift is ignored).
TokenMap wmsa(const TokenMap& x, const SwinBlockParams& p, Tensor* probs = nullptr);
/// Shifted-window attention using p.shift; shift 0 is identical to wmsa.
TokenMap sw_msa(const TokenMap& x, const SwinBlockParams& p, Tensor* probs = nullptr);
/// x + attn(LN(x)), then + MLP(LN(·)).
TokenMap swin_block(const TokenMap& x, const SwinBlockParams& p);

struct PatchMergeParams {
  LayerNormParams norm;  // over 4c
  Tensor reduction;      // [4c, 2c], no bias
};

PatchMergeParams make_patch_merge(Initializer& init, const std::string& name, std::size_t c);
/// Concatenates each 2x2 neighbourhood as (r,c), (r+1,c), (r,c+1), (r+1,c+1),
/// normalizes, and projects 4c -> 2c.
TokenMap patch_merge(const TokenMap& x, const PatchMergeParams& p);

/// rgb is [H*W, 3] (row-major pixels). Each token is the linear projection of
/// its 4x4x3 patch flattened as (row, col, channel).
TokenMap patch_embed(const Tensor& rgb, std::size_t height, std::size_t width,
                     const LinearParams& proj, std::size_t patch = 4);

struct Stage {
  std::vector<SwinBlockParams> blocks;
  PatchMergeParams downsample;  // unused for stage 0
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& cfg, Initializer& init);

  /// Returns {F4, F3, F2, F1}: highest resolution first.
  std::array<TokenMap, 4> encode(const Tensor& rgb) const;
  const EncoderConfig& config() const { return cfg_; }
  const std::array<Stage, 4>& stages() const { return stages_; }

 private:
  EncoderConfig cfg_;
  LinearParams patch_embed_;
  std::array<Stage, 4> stages_;
};

}  // namespace dftr::swin
