// SPDX-License-Identifier: Apache-2.0
#include "dftr/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dftr/ops.hpp"

namespace dftr {
namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + ": shape " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

void check_binary(const Tensor& gt, const char* what) {
  for (double v : gt.data())
    if (v != 0.0 && v != 1.0)
      throw DomainError(std::string(what) + ": mask value " + std::to_string(v) + " is not 0 or 1");
}

void check_unit_range(const Tensor& t, const char* what) {
  for (double v : t.data())
    if (!(v >= 0.0 && v <= 1.0))
      throw DomainError(std::string(what) + ": value " + std::to_string(v) + " outside [0, 1]");
}

Tensor one_minus(const Tensor& x) { return add_scalar(scale(x, -1.0), 1.0); }

Tensor iou_unchecked(const Tensor& logits, const Tensor& gt) {
  Tensor p = sigmoid(logits);
  Tensor inter = sum(mul(p, gt));
  double g_sum = 0;
  for (double v : gt.data()) g_sum += v;
  Tensor uni = add_scalar(sub(sum(p), inter), g_sum + kIouSmooth);
  return one_minus(div(add_scalar(inter, kIouSmooth), uni));
}

/// Weighted mean of per-pixel BCE terms under fixed weights.
Tensor weighted_bce(const Tensor& per_pixel, std::vector<double> w) {
  double w_sum = 0;
  for (double v : w) w_sum += v;
  Tensor wt = Tensor::from(per_pixel.shape(), std::move(w));
  return scale(sum(mul(per_pixel, wt)), 1.0 / (w_sum + kDecWeightEps));
}

}  // namespace

void LossWeights::validate() const {
  for (double l : lambda)
    if (!(l > 0.0) || !std::isfinite(l))
      throw std::invalid_argument("loss weights must be positive, got " + std::to_string(l));
}

Tensor bce_loss(const Tensor& logits, const Tensor& gt) {
  check_pair(logits, gt, "bce_loss");
  check_binary(gt, "bce_loss");
  return mean(bce_with_logits(logits, gt));
}

Tensor iou_loss(const Tensor& logits, const Tensor& gt) {
  check_pair(logits, gt, "iou_loss");
  check_binary(gt, "iou_loss");
  return iou_unchecked(logits, gt);
}

Tensor logmse_loss(const Tensor& pred, const Tensor& gt) {
  check_pair(pred, gt, "logmse_loss");
  check_unit_range(pred, "logmse_loss prediction");
  check_unit_range(gt, "logmse_loss target");
  Tensor diff = sub(log(add_scalar(pred, kLogMseEps)), log(add_scalar(gt, kLogMseEps)));
  return mean(square(diff));
}

std::vector<double> dec_weights(const Tensor& depth_pred, const Tensor& depth_gt) {
  check_pair(depth_pred, depth_gt, "dec_weights");
  std::vector<double> w(depth_pred.numel());
  double peak = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::abs(depth_pred[i] - depth_gt[i]);
    peak = std::max(peak, w[i]);
  }
  if (peak == 0.0) return std::vector<double>(w.size(), 0.0);
  for (auto& v : w) v /= peak;
  return w;
}

Tensor dec_loss(const Tensor& logits, const Tensor& gt, const Tensor& depth_pred,
                const Tensor& depth_gt, std::span<const double> weights) {
  check_pair(logits, gt, "dec_loss");
  check_pair(logits, depth_pred, "dec_loss");
  check_binary(gt, "dec_loss");
  std::vector<double> w;
  if (weights.empty()) {
    w = dec_weights(depth_pred, depth_gt);
  } else {
    if (weights.size() != logits.numel())
      throw DimensionError("dec_loss: " + std::to_string(weights.size()) + " weights for " +
                           std::to_string(logits.numel()) + " pixels");
    w.assign(weights.begin(), weights.end());
  }
  return weighted_bce(bce_with_logits(logits, gt), std::move(w));
}

double LossReport::recompose(const LossWeights& w) const {
  double t = logmse;
  for (std::size_t k = 0; k < 4; ++k)
    if (level_active[k]) t += w.lambda[k] * (bce[k] + iou[k] + dec[k]);
  return t;
}

LossReport total_loss(const Predictions& preds, const Tensor& mask, const Tensor& depth,
                      const LossWeights& weights, const DecoderConfig& cfg,
                      const LossOptions& options) {
  weights.validate();
  if (preds.saliency_logits.shape() != mask.shape())
    throw DimensionError("total_loss: prediction " + to_string(preds.saliency_logits.shape()) +
                         " vs mask " + to_string(mask.shape()));
  const bool with_depth = cfg.use_depth_stream;
  if (with_depth && !preds.depth.defined())
    throw std::invalid_argument("total_loss: depth stream enabled but no depth prediction");

  check_binary(mask, "total_loss");
  std::vector<double> frozen = options.dec_weights;
  if (with_depth) {
    check_pair(preds.depth, depth, "total_loss");
    if (frozen.empty()) frozen = dec_weights(preds.depth, depth);
    if (frozen.size() != mask.numel())
      throw DimensionError("total_loss: " + std::to_string(frozen.size()) + " dec weights for " +
                           std::to_string(mask.numel()) + " pixels");
  }

  LossReport r;
  Tensor total;
  auto accumulate = [&](const Tensor& term) { total = total.defined() ? add(total, term) : term; };

  std::array<const Tensor*, 4> maps{};
  if (cfg.use_mls) {
    if (preds.mls_logits.size() != 3)
      throw std::invalid_argument("total_loss: expected 3 intermediate maps, got " +
                                  std::to_string(preds.mls_logits.size()));
    for (std::size_t k = 0; k < 3; ++k) maps[k] = &preds.mls_logits[k];
  }
  maps[3] = &preds.saliency_logits;

  for (std::size_t k = 0; k < 4; ++k) {
    if (maps[k] == nullptr) continue;
    r.level_active[k] = true;
    check_pair(*maps[k], mask, "total_loss");
    Tensor per_pixel = bce_with_logits(*maps[k], mask);
    Tensor b = mean(per_pixel);
    Tensor i = iou_unchecked(*maps[k], mask);
    Tensor level = add(b, i);
    r.bce[k] = b.item();
    r.iou[k] = i.item();
    if (with_depth) {
      Tensor d = weighted_bce(per_pixel, frozen);
      r.dec[k] = d.item();
      level = add(level, d);
    }
    accumulate(scale(level, weights.lambda[k]));
  }
  if (with_depth) {
    Tensor lm = logmse_loss(preds.depth, depth);
    r.logmse = lm.item();
    accumulate(lm);
  }
  r.total_tensor = total;
  r.total = total.item();
  return r;
}

}  // namespace dftr
