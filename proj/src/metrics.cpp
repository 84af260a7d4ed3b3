// SPDX-License-Identifier: Apache-2.0
#include "dftr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

namespace dftr::metrics {
namespace {

constexpr double kGuard = 1e-8;
constexpr double kSsimEps = std::numeric_limits<double>::epsilon();

void check_pair(const Image& pred, const Image& gt) {
  if (pred.channels != 1 || gt.channels != 1)
    throw std::invalid_argument("metrics take single-channel maps");
  if (pred.width != gt.width || pred.height != gt.height)
    throw std::invalid_argument("metrics: prediction " + std::to_string(pred.width) + "x" +
                                std::to_string(pred.height) + " vs ground truth " +
                                std::to_string(gt.width) + "x" + std::to_string(gt.height));
  if (pred.data.empty()) throw std::invalid_argument("metrics: empty image");
}

bool positive(double g) { return g >= 0.5; }

/// Largest k with p >= threshold(k); -1 never happens for p >= 0.
std::size_t bin_of(double p) {
  long k = std::clamp(static_cast<long>(std::floor(p * 255.0)), 0L, 255L);
  while (k < 255 && p >= threshold(static_cast<std::size_t>(k + 1))) ++k;
  while (k > 0 && p < threshold(static_cast<std::size_t>(k))) --k;
  return static_cast<std::size_t>(k);
}

/// Per-threshold confusion counts of the binarized prediction.
struct Counts {
  std::array<double, kThresholds> predicted{};  // pred >= t
  std::array<double, kThresholds> hits{};       // pred >= t and gt positive
  double gt_positive = 0;
  double n = 0;
};

Counts sweep(const Image& pred, const Image& gt) {
  std::array<double, kThresholds> all{}, pos{};
  Counts c;
  c.n = static_cast<double>(pred.data.size());
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const std::size_t b = bin_of(pred.data[i]);
    all[b] += 1;
    if (positive(gt.data[i])) {
      pos[b] += 1;
      c.gt_positive += 1;
    }
  }
  double run_all = 0, run_pos = 0;
  for (std::size_t k = kThresholds; k-- > 0;) {
    run_all += all[k];
    run_pos += pos[k];
    c.predicted[k] = run_all;
    c.hits[k] = run_pos;
  }
  return c;
}

double enhanced(double p, double g, double mp, double mg) {
  const double dp = p - mp, dg = g - mg;
  const double phi = 2.0 * dp * dg / (dp * dp + dg * dg + kGuard);
  return (phi + 1.0) * (phi + 1.0) / 4.0;
}

double e_score(double predicted, double hits, double gt_positive, double n) {
  if (gt_positive == 0) return (n - predicted) / n;
  if (gt_positive == n) return predicted / n;
  const double mp = predicted / n, mg = gt_positive / n;
  const double n11 = hits, n10 = predicted - hits, n01 = gt_positive - hits;
  const double n00 = n - predicted - gt_positive + hits;
  return (n11 * enhanced(1, 1, mp, mg) + n10 * enhanced(1, 0, mp, mg) +
          n01 * enhanced(0, 1, mp, mg) + n00 * enhanced(0, 0, mp, mg)) /
         n;
}

struct Block {
  std::vector<double> pred;
  std::vector<double> gt;
};

double s_object_part(const std::vector<double>& values) {
  if (values.empty()) return 0;
  double m = 0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  double sigma = 0;
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - m) * (v - m);
    sigma = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return 2.0 * m / (m * m + 1.0 + sigma + kSsimEps);
}

double s_object(const Image& pred, const Image& gt, double fg_ratio) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    if (positive(gt.data[i]))
      fg.push_back(pred.data[i]);
    else
      bg.push_back(1.0 - pred.data[i]);
  }
  return fg_ratio * s_object_part(fg) + (1.0 - fg_ratio) * s_object_part(bg);
}

double ssim(const Block& b) {
  const std::size_t n = b.pred.size();
  if (n == 0) return 0;
  double x = 0, y = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x += b.pred[i];
    y += b.gt[i];
  }
  x /= static_cast<double>(n);
  y /= static_cast<double>(n);
  double sx = 0, sy = 0, sxy = 0;
  if (n > 1) {
    for (std::size_t i = 0; i < n; ++i) {
      sx += (b.pred[i] - x) * (b.pred[i] - x);
      sy += (b.gt[i] - y) * (b.gt[i] - y);
      sxy += (b.pred[i] - x) * (b.gt[i] - y);
    }
    const double d = static_cast<double>(n - 1);
    sx /= d;
    sy /= d;
    sxy /= d;
  }
  const double alpha = 4.0 * x * y * sxy;
  const double beta = (x * x + y * y) * (sx + sy);
  if (alpha != 0) return alpha / (beta + kSsimEps);
  return beta == 0 ? 1.0 : 0.0;
}

double s_region(const Image& pred, const Image& gt) {
  const std::size_t h = gt.height, w = gt.width;
  double sy = 0, sx = 0, count = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      if (positive(gt.at(r, c))) {
        sy += static_cast<double>(r);
        sx += static_cast<double>(c);
        count += 1;
      }
  std::size_t cx, cy;
  if (count == 0) {
    cx = static_cast<std::size_t>(std::nearbyint(static_cast<double>(w) / 2.0));
    cy = static_cast<std::size_t>(std::nearbyint(static_cast<double>(h) / 2.0));
  } else {
    cx = static_cast<std::size_t>(std::nearbyint(sx / count));
    cy = static_cast<std::size_t>(std::nearbyint(sy / count));
  }
  // Split after the centroid pixel.
  cx = std::min(cx + 1, w);
  cy = std::min(cy + 1, h);

  std::array<Block, 4> blocks;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t q = (r < cy ? 0 : 2) + (c < cx ? 0 : 1);
      blocks[q].pred.push_back(pred.at(r, c));
      blocks[q].gt.push_back(positive(gt.at(r, c)) ? 1.0 : 0.0);
    }
  const double area = static_cast<double>(h * w);
  const double w1 = static_cast<double>(cx * cy) / area;
  const double w2 = static_cast<double>((w - cx) * cy) / area;
  const double w3 = static_cast<double>(cx * (h - cy)) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  return w1 * ssim(blocks[0]) + w2 * ssim(blocks[1]) + w3 * ssim(blocks[2]) + w4 * ssim(blocks[3]);
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::map<std::string, std::filesystem::path> list_pgm(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::map<std::string, std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") out[e.path().stem().string()] = e.path();
  return out;
}

}  // namespace

double threshold(std::size_t k) { return static_cast<double>(k) / 255.0; }

double mae(const Image& pred, const Image& gt) {
  check_pair(pred, gt);
  double s = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) s += std::abs(pred.data[i] - gt.data[i]);
  return s / static_cast<double>(pred.data.size());
}

CurveScore max_f_measure(const Image& pred, const Image& gt, double beta2) {
  check_pair(pred, gt);
  const Counts c = sweep(pred, gt);
  if (c.gt_positive == 0) throw EmptyMaskError("max_f_measure: ground truth has no positive pixel");
  CurveScore out;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    const double p = c.hits[k] / (c.predicted[k] + kGuard);
    const double r = c.hits[k] / (c.gt_positive + kGuard);
    out.curve[k] = (1.0 + beta2) * p * r / (beta2 * p + r + kGuard);
  }
  out.max = *std::max_element(out.curve.begin(), out.curve.end());
  return out;
}

CurveScore max_e_measure(const Image& pred, const Image& gt) {
  check_pair(pred, gt);
  const Counts c = sweep(pred, gt);
  CurveScore out;
  for (std::size_t k = 0; k < kThresholds; ++k)
    out.curve[k] = e_score(c.predicted[k], c.hits[k], c.gt_positive, c.n);
  out.max = *std::max_element(out.curve.begin(), out.curve.end());
  return out;
}

double s_measure(const Image& pred, const Image& gt, double alpha) {
  check_pair(pred, gt);
  double fg = 0, pm = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    fg += positive(gt.data[i]) ? 1.0 : 0.0;
    pm += pred.data[i];
  }
  const double n = static_cast<double>(pred.data.size());
  const double ratio = fg / n;
  pm /= n;
  if (ratio == 0) return 1.0 - pm;
  if (ratio == 1) return pm;
  const double s = alpha * s_object(pred, gt, ratio) + (1.0 - alpha) * s_region(pred, gt);
  return std::max(0.0, s);
}

SaliencyEval evaluate(const Image& pred, const Image& gt) {
  check_pair(pred, gt);
  SaliencyEval e;
  e.mae = mae(pred, gt);
  e.s_alpha = s_measure(pred, gt);
  const Counts c = sweep(pred, gt);
  e.empty_gt = c.gt_positive == 0;
  for (std::size_t k = 0; k < kThresholds; ++k) {
    e.e_curve[k] = e_score(c.predicted[k], c.hits[k], c.gt_positive, c.n);
    if (e.empty_gt) continue;
    e.precision[k] = c.hits[k] / (c.predicted[k] + kGuard);
    e.recall[k] = c.hits[k] / (c.gt_positive + kGuard);
    e.f_curve[k] = (1.0 + kBeta2) * e.precision[k] * e.recall[k] /
                   (kBeta2 * e.precision[k] + e.recall[k] + kGuard);
  }
  e.f_beta_max = *std::max_element(e.f_curve.begin(), e.f_curve.end());
  e.e_xi_max = *std::max_element(e.e_curve.begin(), e.e_curve.end());
  return e;
}

DirEval evaluate_dir(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir) {
  std::filesystem::path gt_root = gt_dir;
  if (std::filesystem::is_directory(gt_dir / "mask")) gt_root = gt_dir / "mask";
  const auto preds = list_pgm(pred_dir);
  const auto gts = list_pgm(gt_root);

  DirEval out;
  std::set<std::string> names;
  for (const auto& [n, _] : preds) names.insert(n);
  for (const auto& [n, _] : gts) names.insert(n);
  for (const auto& name : names) {
    auto p = preds.find(name), g = gts.find(name);
    if (p == preds.end() || g == gts.end()) {
      out.unmatched.push_back(name);
      continue;
    }
    try {
      out.images.emplace_back(name, evaluate(load_pgm(p->second), load_pgm(g->second)));
    } catch (const std::exception& ex) {
      out.skipped.emplace_back(name, ex.what());
    }
  }

  const auto n = static_cast<double>(out.images.size());
  if (n == 0) return out;
  std::size_t f_count = 0;
  for (const auto& [_, e] : out.images) {
    out.mean.s_alpha += e.s_alpha / n;
    out.mean.mae += e.mae / n;
    for (std::size_t k = 0; k < kThresholds; ++k) out.mean.e_curve[k] += e.e_curve[k] / n;
    if (!e.empty_gt) ++f_count;
  }
  if (f_count > 0) {
    const auto fn = static_cast<double>(f_count);
    for (const auto& [_, e] : out.images) {
      if (e.empty_gt) continue;
      for (std::size_t k = 0; k < kThresholds; ++k) {
        out.mean.precision[k] += e.precision[k] / fn;
        out.mean.recall[k] += e.recall[k] / fn;
        out.mean.f_curve[k] += e.f_curve[k] / fn;
      }
    }
  } else {
    out.mean.empty_gt = true;
  }
  out.mean.f_beta_max = *std::max_element(out.mean.f_curve.begin(), out.mean.f_curve.end());
  out.mean.e_xi_max = *std::max_element(out.mean.e_curve.begin(), out.mean.e_curve.end());
  return out;
}

std::string format_report(const DirEval& eval) {
  std::string out = "name\tS\tmaxF\tmaxE\tMAE\n";
  auto row = [&](const std::string& name, const SaliencyEval& e) {
    out += name + '\t' + fmt4(e.s_alpha) + '\t' + (e.empty_gt ? std::string("NA") : fmt4(e.f_beta_max)) +
           '\t' + fmt4(e.e_xi_max) + '\t' + fmt4(e.mae) + '\n';
  };
  for (const auto& [name, e] : eval.images) row(name, e);
  row("MEAN", eval.mean);
  return out;
}

}  // namespace dftr::metrics
