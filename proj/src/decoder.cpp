// SPDX-License-Identifier: Apache-2.0
#include "dftr/decoder.hpp"

#include <stdexcept>

#include "dftr/ops.hpp"

namespace dftr {
namespace {

std::string level_tag(int level) { return std::to_string(level); }

LinearParams decoder_linear(Initializer& init, const std::string& name, std::size_t in,
                            std::size_t out) {
  return swin::make_linear(init, name, in, out, true, swin::fan_in_std(in));
}

}  // namespace

void DftrConfig::validate() const {
  encoder.validate();
  const auto& d = decoder;
  if (d.down <= 0) throw std::invalid_argument("decoder.down must be positive");
  if (d.block_depth < 1) throw std::invalid_argument("decoder.block_depth must be at least 1");
  if (static_cast<std::size_t>(encoder.embed_dim) % static_cast<std::size_t>(d.down) != 0)
    throw std::invalid_argument("decoder.down " + std::to_string(d.down) +
                                " does not divide embed_dim " + std::to_string(encoder.embed_dim));
  if (d.use_mff && !(d.use_mfa && d.use_depth_stream))
    throw std::invalid_argument("decoder.use_mff requires use_mfa and use_depth_stream");
  if (d.use_mls && !d.use_mfa) throw std::invalid_argument("decoder.use_mls requires use_mfa");
}

std::size_t DftrConfig::level_channels(int level) const {
  return encoder.stage_channels(4 - level) / static_cast<std::size_t>(decoder.down);
}

std::size_t DftrConfig::level_grid(int level) const { return encoder.stage_grid(4 - level); }

DecoderConfig ablation_flags(char letter, DecoderConfig base) {
  const int rank = letter - 'a';
  if (rank < 0 || rank > 4) throw std::invalid_argument(std::string("unknown ablation '") + letter + "'");
  base.use_mfa = rank >= 1;
  base.use_depth_stream = rank >= 2;
  base.use_mff = rank >= 3;
  base.use_mls = rank >= 4;
  return base;
}

// ---------------------------------------------------------------------------
// building blocks

std::vector<SwinBlockParams> make_block_chain(Initializer& init, const std::string& name,
                                              std::size_t channels, std::size_t grid,
                                              const ChainSpec& spec) {
  std::vector<SwinBlockParams> chain;
  for (int j = 0; j < spec.depth; ++j) {
    const auto [win, shift] = swin::window_and_shift(grid, spec.window, static_cast<std::size_t>(j));
    const swin::BlockSpec block{channels, swin::decoder_heads(channels), win, shift, spec.mlp_ratio,
                                spec.rel_pos_bias};
    chain.push_back(swin::make_block(init, name + "." + std::to_string(j), block));
  }
  return chain;
}

TokenMap run_block_chain(const TokenMap& x, const std::vector<SwinBlockParams>& chain) {
  TokenMap y = x;
  for (const auto& b : chain) y = swin::swin_block(y, b);
  return y;
}

MfaParams make_mfa(Initializer& init, const std::string& name, std::size_t fine_channels,
                   std::size_t fine_grid, const ChainSpec& spec) {
  const std::size_t d = fine_channels;
  MfaParams p;
  p.fine_blocks = make_block_chain(init, name + ".fine", d, fine_grid, spec);
  p.expand = decoder_linear(init, name + ".expand", d, 2 * d);
  p.cat_blocks = make_block_chain(init, name + ".cat", 6 * d, fine_grid, spec);
  p.reduce = decoder_linear(init, name + ".reduce", 6 * d, d);
  return p;
}

MffParams make_mff(Initializer& init, const std::string& name, std::size_t channels,
                   std::size_t grid, const ChainSpec& spec) {
  const std::size_t d = channels;
  MffParams p;
  p.fuse_blocks = make_block_chain(init, name + ".fuse", 3 * d, grid, spec);
  p.squeeze = decoder_linear(init, name + ".squeeze", 3 * d, d);
  p.saliency_blocks = make_block_chain(init, name + ".s", d, grid, spec);
  p.depth_blocks = make_block_chain(init, name + ".d", d, grid, spec);
  return p;
}

TokenMap stream_reduce(const TokenMap& f, const LinearParams& p) {
  if (f.channels() != p.weight.dim(0))
    throw DimensionError("stream_reduce: " + std::to_string(f.channels()) +
                         " input channels for a " + to_string(p.weight.shape()) + " projection");
  return TokenMap::make(swin::apply(p, f.tokens), f.h, f.w);
}

TokenMap mfa_forward(const TokenMap& coarse, const TokenMap& fine, const MfaParams& p) {
  if (coarse.h * 2 != fine.h || coarse.w * 2 != fine.w)
    throw DimensionError("MFA: coarse grid " + std::to_string(coarse.h) + "x" +
                         std::to_string(coarse.w) + " is not half of fine grid " +
                         std::to_string(fine.h) + "x" + std::to_string(fine.w));
  if (coarse.channels() != 2 * fine.channels())
    throw DimensionError("MFA: coarse channels " + std::to_string(coarse.channels()) +
                         " must be twice fine channels " + std::to_string(fine.channels()));
  Tensor up = bilinear_resize(coarse.tokens, coarse.h, coarse.w, fine.h, fine.w);
  Tensor mid = swin::apply(p.expand, run_block_chain(fine, p.fine_blocks).tokens);
  Tensor prod = mul(up, mid);
  const Tensor parts[] = {up, mid, prod};
  TokenMap cat = TokenMap::make(concat(parts, 1), fine.h, fine.w);
  Tensor z = swin::apply(p.reduce, run_block_chain(cat, p.cat_blocks).tokens);
  return TokenMap::make(z, fine.h, fine.w);
}

TokenMap mff_fuse(const TokenMap& zs, const TokenMap& zd, const MffParams& p) {
  if (zs.h != zd.h || zs.w != zd.w || zs.channels() != zd.channels())
    throw DimensionError("MFF: stream shapes differ (" + to_string(zs.tokens.shape()) + " vs " +
                         to_string(zd.tokens.shape()) + ")");
  const Tensor parts[] = {zd.tokens, zs.tokens, mul(zd.tokens, zs.tokens)};
  TokenMap cat = TokenMap::make(concat(parts, 1), zs.h, zs.w);
  return TokenMap::make(swin::apply(p.squeeze, run_block_chain(cat, p.fuse_blocks).tokens), zs.h, zs.w);
}

std::pair<TokenMap, TokenMap> mff_forward(const TokenMap& zs, const TokenMap& zd,
                                          const MffParams& p) {
  TokenMap shared = mff_fuse(zs, zd, p);
  return {run_block_chain(shared, p.saliency_blocks), run_block_chain(shared, p.depth_blocks)};
}

Tensor mls_head(const TokenMap& f, const LinearParams& head, std::size_t height, std::size_t width) {
  return bilinear_resize(swin::apply(head, f.tokens), f.h, f.w, height, width);
}

// ---------------------------------------------------------------------------
// model

ChainSpec DftrModel::chain_spec() const {
  return {static_cast<std::size_t>(cfg_.encoder.window), cfg_.decoder.block_depth,
          cfg_.encoder.mlp_ratio, cfg_.encoder.rel_pos_bias};
}

DftrModel::StreamParams DftrModel::make_stream(Initializer& init, const std::string& name) {
  StreamParams p;
  const auto& d = cfg_.decoder;
  if (!d.use_mfa) {
    const std::size_t c = cfg_.encoder.stage_channels(3);
    p.baseline_fc1 = decoder_linear(init, name + ".baseline.fc1", c, c);
    p.baseline_fc2 = decoder_linear(init, name + ".baseline.fc2", c, 1);
    return p;
  }
  for (int level = 1; level <= 4; ++level)
    p.reduce[level - 1] = decoder_linear(init, name + ".reduce." + level_tag(level),
                                         cfg_.encoder.stage_channels(4 - level),
                                         cfg_.level_channels(level));
  for (int level = 2; level <= 4; ++level)
    p.mfa[level - 2] = make_mfa(init, name + ".mfa." + level_tag(level), cfg_.level_channels(level),
                                cfg_.level_grid(level), chain_spec());
  return p;
}

DftrModel::DftrModel(const DftrConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  Initializer init(params_, rng);
  encoder_ = swin::Encoder(cfg_.encoder, init);
  const auto& d = cfg_.decoder;
  saliency_ = make_stream(init, "decoder.s");
  if (d.use_depth_stream) depth_ = make_stream(init, "decoder.d");
  if (!d.use_mfa) return;
  if (d.use_mff)
    for (int level = 2; level <= 4; ++level)
      mff_[level - 2] = make_mff(init, "decoder.mff." + level_tag(level), cfg_.level_channels(level),
                                 cfg_.level_grid(level), chain_spec());
  if (d.use_mls)
    for (int level = 2; level <= 4; ++level)
      mls_[level - 2] = decoder_linear(init, "decoder.mls." + level_tag(level),
                                       cfg_.level_channels(level), 1);
  head_saliency_ = decoder_linear(init, "decoder.head.s", cfg_.level_channels(4), 1);
  if (d.use_depth_stream)
    head_depth_ = decoder_linear(init, "decoder.head.d", cfg_.level_channels(4), 1);
}

void DftrModel::check_ladder(const StreamFeatures& f) const {
  for (int level = 1; level <= 4; ++level) {
    const std::size_t grid = cfg_.level_grid(level), ch = cfg_.level_channels(level);
    for (const TokenMap* m : {&f.reduced[level - 1], &f.fused[level - 1]})
      if (m->h != grid || m->w != grid || m->channels() != ch)
        throw std::logic_error("stream feature ladder broken at level " + level_tag(level) + ": " +
                               to_string(m->tokens.shape()) + " on " + std::to_string(m->h) + "x" +
                               std::to_string(m->w));
  }
}

Predictions DftrModel::forward(const Tensor& rgb) const {
  const auto& d = cfg_.decoder;
  const std::size_t side = cfg_.image_side();
  const auto pyramid = encoder_.encode(rgb);  // F4, F3, F2, F1
  auto level_map = [&](int level) -> const TokenMap& { return pyramid[4 - level]; };

  Predictions out;
  out.height = side;
  out.width = side;

  if (!d.use_mfa) {
    // Linear baseline on the coarsest features.
    const TokenMap& f1 = level_map(1);
    auto baseline = [&](const StreamParams& p) {
      Tensor hidden = gelu(swin::apply(p.baseline_fc1, f1.tokens));
      return bilinear_resize(swin::apply(p.baseline_fc2, hidden), f1.h, f1.w, side, side);
    };
    out.saliency_logits = baseline(saliency_);
    if (d.use_depth_stream) out.depth = sigmoid(baseline(depth_));
    return out;
  }

  StreamFeatures s, dp;
  for (int level = 1; level <= 4; ++level) {
    s.reduced[level - 1] = stream_reduce(level_map(level), saliency_.reduce[level - 1]);
    if (d.use_depth_stream)
      dp.reduced[level - 1] = stream_reduce(level_map(level), depth_.reduce[level - 1]);
  }
  s.fused[0] = s.reduced[0];
  dp.fused[0] = dp.reduced[0];
  for (int i = 1; i <= 3; ++i) {
    s.aggregated[i] = mfa_forward(s.fused[i - 1], s.reduced[i], saliency_.mfa[i - 1]);
    if (d.use_depth_stream)
      dp.aggregated[i] = mfa_forward(dp.fused[i - 1], dp.reduced[i], depth_.mfa[i - 1]);
    if (d.use_mff) {
      auto [fs, fd] = mff_forward(s.aggregated[i], dp.aggregated[i], mff_[i - 1]);
      s.fused[i] = fs;
      dp.fused[i] = fd;
    } else {
      s.fused[i] = s.aggregated[i];
      dp.fused[i] = dp.aggregated[i];
    }
  }
  check_ladder(s);
  if (d.use_depth_stream) check_ladder(dp);

  const TokenMap& top_s = s.fused[3];
  out.saliency_logits = mls_head(top_s, head_saliency_, side, side);
  if (d.use_depth_stream) out.depth = sigmoid(mls_head(dp.fused[3], head_depth_, side, side));
  if (d.use_mls)
    for (int level = 2; level <= 4; ++level)
      out.mls_logits.push_back(mls_head(s.fused[level - 1], mls_[level - 2], side, side));
  out.saliency_stream = std::move(s);
  if (d.use_depth_stream) out.depth_stream = std::move(dp);
  return out;
}

}  // namespace dftr
