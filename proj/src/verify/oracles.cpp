// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dftr/verify.hpp"

namespace dftr::verify {
namespace {

/// y = x W + b for one row.
std::vector<double> affine(std::span<const double> x, const swin::LinearParams& p) {
  const std::size_t in = p.weight.dim(0), out = p.weight.dim(1);
  std::vector<double> y(out, 0.0);
  for (std::size_t o = 0; o < out; ++o) {
    double s = p.bias.defined() ? p.bias[o] : 0.0;
    for (std::size_t i = 0; i < in; ++i) s += x[i] * p.weight[i * out + o];
    y[o] = s;
  }
  return y;
}

bool binarized(double p, std::size_t k) { return p >= static_cast<double>(k) / 255.0; }

}  // namespace

Tensor attention_oracle(const Tensor& x, std::size_t h, std::size_t w, const swin::SwinBlockParams& p,
                        std::size_t window, std::size_t shift) {
  const std::size_t n = h * w, c = x.dim(1), heads = p.heads, hd = c / heads;
  std::vector<std::vector<double>> qkv(n);
  for (std::size_t i = 0; i < n; ++i) qkv[i] = affine(x.data().subspan(i * c, c), p.qkv);

  // Position of every token on the shifted canvas.
  auto canvas = [&](std::size_t i) {
    const std::size_t r = i / w, col = i % w;
    return std::pair{(r + h - shift) % h, (col + w - shift) % w};
  };
  const std::size_t span = 2 * window - 1;
  std::vector<double> merged(n * c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto [ri, ci] = canvas(i);
    for (std::size_t head = 0; head < heads; ++head) {
      std::vector<std::pair<std::size_t, double>> logits;
      for (std::size_t j = 0; j < n; ++j) {
        const auto [rj, cj] = canvas(j);
        if (ri / window != rj / window || ci / window != cj / window) continue;
        const long dy = static_cast<long>(i / w) - static_cast<long>(j / w);
        const long dx = static_cast<long>(i % w) - static_cast<long>(j % w);
        if (dy != static_cast<long>(ri) - static_cast<long>(rj) || dx != static_cast<long>(ci) - static_cast<long>(cj))
          continue;
        double dot = 0;
        for (std::size_t d = 0; d < hd; ++d) dot += qkv[i][head * hd + d] * qkv[j][c + head * hd + d];
        double logit = dot / std::sqrt(static_cast<double>(hd));
        if (p.rel_bias_table.defined()) {
          const auto row = static_cast<std::size_t>((dy + static_cast<long>(window) - 1) * static_cast<long>(span) +
                                                    dx + static_cast<long>(window) - 1);
          logit += p.rel_bias_table[row * heads + head];
        }
        logits.emplace_back(j, logit);
      }
      double peak = -INFINITY;
      for (const auto& [_, l] : logits) peak = std::max(peak, l);
      double z = 0;
      for (const auto& [_, l] : logits) z += std::exp(l - peak);
      for (const auto& [j, l] : logits) {
        const double a = std::exp(l - peak) / z;
        for (std::size_t d = 0; d < hd; ++d) merged[i * c + head * hd + d] += a * qkv[j][2 * c + head * hd + d];
      }
    }
  }
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const auto y = affine(std::span<const double>(merged).subspan(i * c, c), p.proj);
    std::copy(y.begin(), y.end(), out.begin() + static_cast<long>(i * c));
  }
  return Tensor::from({n, c}, std::move(out));
}

double naive_mae(const Image& pred, const Image& gt) {
  double s = 0;
  for (std::size_t y = 0; y < gt.height; ++y)
    for (std::size_t x = 0; x < gt.width; ++x) s += std::fabs(pred.at(y, x) - gt.at(y, x));
  return s / static_cast<double>(gt.width * gt.height);
}

double naive_max_f(const Image& pred, const Image& gt, double beta2) {
  double best = 0;
  for (std::size_t k = 0; k < 256; ++k) {
    double tp = 0, pp = 0, gp = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
      const bool p = binarized(pred.data[i], k), g = gt.data[i] >= 0.5;
      tp += (p && g) ? 1 : 0;
      pp += p ? 1 : 0;
      gp += g ? 1 : 0;
    }
    const double precision = tp / (pp + 1e-8), recall = tp / (gp + 1e-8);
    best = std::max(best, (1 + beta2) * precision * recall / (beta2 * precision + recall + 1e-8));
  }
  return best;
}

double naive_max_e(const Image& pred, const Image& gt) {
  const std::size_t n = pred.data.size();
  double best = 0;
  for (std::size_t k = 0; k < 256; ++k) {
    std::vector<double> p(n), g(n);
    double mp = 0, mg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = binarized(pred.data[i], k) ? 1.0 : 0.0;
      g[i] = gt.data[i] >= 0.5 ? 1.0 : 0.0;
      mp += p[i];
      mg += g[i];
    }
    mp /= static_cast<double>(n);
    mg /= static_cast<double>(n);
    double score = 0;
    if (mg == 0 || mg == 1) {
      for (std::size_t i = 0; i < n; ++i) score += p[i] == g[i] ? 1.0 : 0.0;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const double a = p[i] - mp, b = g[i] - mg;
        const double phi = 2 * a * b / (a * a + b * b + 1e-8);
        score += (phi + 1) * (phi + 1) / 4;
      }
    }
    best = std::max(best, score / static_cast<double>(n));
  }
  return best;
}

double naive_bce(const std::vector<double>& logits, const std::vector<double>& gt) {
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    s -= gt[i] * std::log(p) + (1 - gt[i]) * std::log(1 - p);
  }
  return s / static_cast<double>(logits.size());
}

double naive_iou(const std::vector<double>& logits, const std::vector<double>& gt) {
  double inter = 0, ps = 0, gs = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = 1.0 / (1.0 + std::exp(-logits[i]));
    inter += p * gt[i];
    ps += p;
    gs += gt[i];
  }
  return 1 - (inter + 1) / (ps + gs - inter + 1);
}

}  // namespace dftr::verify
