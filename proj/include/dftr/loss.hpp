// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <span>
#include <vector>

#include "dftr/decoder.hpp"
#include "dftr/tensor.hpp"

namespace dftr {

/// Weights of the four saliency supervision levels. Levels 0..2 are the
/// intermediate maps from F̃2, F̃3, F̃4; level 3 is the final prediction.
struct LossWeights {
  std::array<double, 4> lambda{0.4, 0.6, 0.8, 1.0};
  void validate() const;
};

inline constexpr double kIouSmooth = 1.0;
inline constexpr double kLogMseEps = 1e-2;
inline constexpr double kDecWeightEps = 1e-8;

/// Mean binary cross-entropy of logits against a {0,1} mask.
Tensor bce_loss(const Tensor& logits, const Tensor& gt);
/// 1 - (Σpg + 1) / (Σp + Σg - Σpg + 1) with p = sigmoid(logits).
Tensor iou_loss(const Tensor& logits, const Tensor& gt);
/// mean((log(pred + 0.01) - log(gt + 0.01))²); both maps must lie in [0, 1].
Tensor logmse_loss(const Tensor& pred, const Tensor& gt);

/// |depth_pred - depth_gt| divided by its maximum (all zero when the maximum is 0).
std::vector<double> dec_weights(const Tensor& depth_pred, const Tensor& depth_gt);
/// Σ w·bce / (Σ w + 1e-8). The weights carry no gradient. Passing `weights`
/// overrides the ones derived from the depth maps.
Tensor dec_loss(const Tensor& logits, const Tensor& gt, const Tensor& depth_pred,
                const Tensor& depth_gt, std::span<const double> weights = {});

struct LossReport {
  Tensor total_tensor;  // differentiable total
  double total = 0;
  std::array<double, 4> bce{};
  std::array<double, 4> iou{};
  std::array<double, 4> dec{};
  std::array<bool, 4> level_active{};
  double logmse = 0;

  /// logmse + Σ λ_i (bce_i + iou_i + dec_i) over active levels.
  double recompose(const LossWeights& w) const;
};

struct LossOptions {
  /// Frozen DEC weights; empty means "derive from the current depth prediction".
  std::vector<double> dec_weights;
};

/// `mask` and `depth` are [H*W, 1] targets for one sample.
LossReport total_loss(const Predictions& preds, const Tensor& mask, const Tensor& depth,
                      const LossWeights& weights, const DecoderConfig& cfg,
                      const LossOptions& options = {});

}  // namespace dftr
