// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dftr/params.hpp"
#include "dftr/swin.hpp"

// Dual-stream decoder: per-stream channel reduction, coarse-to-fine
// aggregation (MFA), cross-stream fusion (MFF), multi-level saliency heads and
// the final saliency / depth heads. Also hosts the full model.
namespace dftr {

struct DecoderConfig {
  int down = 8;         // channel reduction ratio of the input linears
  int block_depth = 1;  // attention blocks per transformer slot in MFA / MFF
  bool use_mfa = true;
  bool use_depth_stream = true;
  bool use_mff = true;
  bool use_mls = true;
};

struct DftrConfig {
  swin::EncoderConfig encoder;
  DecoderConfig decoder;

  void validate() const;
  std::size_t image_side() const { return static_cast<std::size_t>(encoder.img_size); }
  /// Channels of level i (1 = coarsest) after the input linears.
  std::size_t level_channels(int level) const;
  std::size_t level_grid(int level) const;
};

/// Component switches for the five ablation rows:
/// a = linear baseline, b = +MFA, c = +depth supervision, d = +MFF, e = +MLS.
DecoderConfig ablation_flags(char letter, DecoderConfig base = {});

using swin::LinearParams;
using swin::SwinBlockParams;
using swin::TokenMap;

struct MfaParams {
  std::vector<SwinBlockParams> fine_blocks;  // on the fine map, D channels
  LinearParams expand;                       // D -> 2D
  std::vector<SwinBlockParams> cat_blocks;   // on the concatenation, 6D channels
  LinearParams reduce;                       // 6D -> D
};

struct MffParams {
  std::vector<SwinBlockParams> fuse_blocks;  // 3D channels
  LinearParams squeeze;                      // 3D -> D
  std::vector<SwinBlockParams> saliency_blocks;
  std::vector<SwinBlockParams> depth_blocks;
};

/// Shared settings of the attention-block chains inside MFA / MFF.
struct ChainSpec {
  std::size_t window = 4;
  int depth = 1;
  int mlp_ratio = 4;
  bool rel_pos_bias = true;
};

/// Builds `spec.depth` blocks for a square grid; heads and window follow the
/// decoder rules in swin::decoder_heads / swin::window_and_shift.
std::vector<SwinBlockParams> make_block_chain(Initializer& init, const std::string& name,
                                              std::size_t channels, std::size_t grid,
                                              const ChainSpec& spec);
TokenMap run_block_chain(const TokenMap& x, const std::vector<SwinBlockParams>& chain);

MfaParams make_mfa(Initializer& init, const std::string& name, std::size_t fine_channels,
                   std::size_t fine_grid, const ChainSpec& spec);
MffParams make_mff(Initializer& init, const std::string& name, std::size_t channels,
                   std::size_t grid, const ChainSpec& spec);

TokenMap stream_reduce(const TokenMap& f, const LinearParams& p);

/// Aggregates a coarse map (h, w, 2D) into a fine map (2h, 2w, D):
/// up = upsample(coarse), mid = expand(blocks(fine)),
/// Z = reduce(blocks(up ⓒ mid ⓒ up⊙mid)).
TokenMap mfa_forward(const TokenMap& coarse, const TokenMap& fine, const MfaParams& p);

/// Fuses the two streams: shared = squeeze(blocks(Zd ⓒ Zs ⓒ Zd⊙Zs)); returns
/// (saliency_blocks(shared), depth_blocks(shared)).
std::pair<TokenMap, TokenMap> mff_forward(const TokenMap& zs, const TokenMap& zd,
                                          const MffParams& p);
/// Shared squeeze stage of mff_forward, exposed for testing.
TokenMap mff_fuse(const TokenMap& zs, const TokenMap& zd, const MffParams& p);

/// Per-token projection to one channel, bilinearly resized to height x width.
Tensor mls_head(const TokenMap& f, const LinearParams& head, std::size_t height, std::size_t width);

/// Per-level maps of one decoding stream; index 0 is level 1 (coarsest).
struct StreamFeatures {
  std::array<TokenMap, 4> reduced;     // F_i after the input linear
  std::array<TokenMap, 4> aggregated;  // Z_i (levels 2..4)
  std::array<TokenMap, 4> fused;       // F̃_i
};

struct Predictions {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor saliency_logits;           // [H*W, 1]
  Tensor depth;                     // [H*W, 1] in (0,1); undefined without depth stream
  std::vector<Tensor> mls_logits;   // from F̃2, F̃3, F̃4; empty without MLS
  StreamFeatures saliency_stream;
  std::optional<StreamFeatures> depth_stream;
};

class DftrModel {
 public:
  DftrModel(const DftrConfig& cfg, std::uint64_t seed);

  /// rgb is [side*side, 3] with values in [0,1].
  Predictions forward(const Tensor& rgb) const;

  const DftrConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  const swin::Encoder& encoder() const { return encoder_; }

 private:
  struct StreamParams {
    std::array<LinearParams, 4> reduce;
    std::array<MfaParams, 3> mfa;  // produces levels 2..4
    LinearParams baseline_fc1;
    LinearParams baseline_fc2;
  };

  StreamParams make_stream(Initializer& init, const std::string& name);
  ChainSpec chain_spec() const;
  void check_ladder(const StreamFeatures& f) const;

  DftrConfig cfg_;
  ParamStore params_;
  swin::Encoder encoder_;
  StreamParams saliency_;
  StreamParams depth_;
  std::array<MffParams, 3> mff_;
  std::array<LinearParams, 3> mls_;
  LinearParams head_saliency_;
  LinearParams head_depth_;
};

}  // namespace dftr
