// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dftr/image.hpp"

// Saliency evaluation: MAE, max F-measure, S-measure and max E-measure.
// Predictions are single-channel maps in [0,1]; ground truth is binarized at 0.5.
namespace dftr::metrics {

inline constexpr std::size_t kThresholds = 256;
inline constexpr double kBeta2 = 0.3;
inline constexpr double kAlpha = 0.5;

using Curve = std::array<double, kThresholds>;

struct EmptyMaskError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Threshold k of the sweep: k / 255.
double threshold(std::size_t k);

double mae(const Image& pred, const Image& gt);

struct CurveScore {
  double max = 0;
  Curve curve{};
};

/// Throws EmptyMaskError when gt has no positive pixel.
CurveScore max_f_measure(const Image& pred, const Image& gt, double beta2 = kBeta2);
CurveScore max_e_measure(const Image& pred, const Image& gt);
double s_measure(const Image& pred, const Image& gt, double alpha = kAlpha);

struct SaliencyEval {
  double s_alpha = 0;
  double f_beta_max = 0;
  double e_xi_max = 0;
  double mae = 0;
  Curve precision{};
  Curve recall{};
  Curve f_curve{};
  Curve e_curve{};
  bool empty_gt = false;  // F-measure undefined; excluded from dataset F curves
};

SaliencyEval evaluate(const Image& pred, const Image& gt);

struct DirEval {
  std::vector<std::pair<std::string, SaliencyEval>> images;
  SaliencyEval mean;
  std::vector<std::string> unmatched;                        // names present on one side only
  std::vector<std::pair<std::string, std::string>> skipped;  // (name, reason)
};

/// Pairs `<pred_dir>/<name>.pgm` with `<gt_dir>/<name>.pgm` (or `<gt_dir>/mask/<name>.pgm`
/// when gt_dir is a dataset root). Dataset S and MAE are per-image means; max-F and
/// max-E are maxima of the mean curves.
DirEval evaluate_dir(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir);

/// Tab-separated rows (name, S, maxF, maxE, MAE) plus a MEAN row, 4 decimals.
std::string format_report(const DirEval& eval);

}  // namespace dftr::metrics
