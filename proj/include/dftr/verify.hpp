// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "dftr/decoder.hpp"
#include "dftr/image.hpp"
#include "dftr/metrics.hpp"
#include "dftr/swin.hpp"
#include "dftr/tensor.hpp"

// Independent reference implementations and the verification suites behind
// `dftr verify`.
namespace dftr::verify {

struct CheckResult {
  std::string name;
  double error = 0;
  double tolerance = 0;
  bool pass = false;
  std::string detail;
};

struct SuiteReport {
  std::vector<CheckResult> checks;
  double seconds = 0;

  bool all_pass() const;
  void add(std::string name, double error, double tolerance, std::string detail = {});
  void add_bool(std::string name, bool ok, std::string detail = {});
  void merge(const SuiteReport& other);
  void print(std::ostream& os) const;
};

// ---------------------------------------------------------------------------
// oracles

/// Attention over all tokens of x[h*w, c] computed pair by pair. With shift
/// > 0 a pair interacts only when both tokens sit in the same shifted window
/// and the shift did not wrap them apart; window == grid and shift == 0 gives
/// plain dense multi-head attention. Returns the block's attention output
/// (after the output projection), without residual or normalization.
Tensor attention_oracle(const Tensor& x, std::size_t h, std::size_t w, const swin::SwinBlockParams& p,
                        std::size_t window, std::size_t shift);

double naive_mae(const Image& pred, const Image& gt);
/// Per-threshold loops straight from the definitions.
double naive_max_f(const Image& pred, const Image& gt, double beta2 = 0.3);
double naive_max_e(const Image& pred, const Image& gt);

double naive_bce(const std::vector<double>& logits, const std::vector<double>& gt);
double naive_iou(const std::vector<double>& logits, const std::vector<double>& gt);

// ---------------------------------------------------------------------------
// finite differences

struct GradcheckOptions {
  double h = 1e-4;
  /// Coordinates checked per input tensor (0 = all). Sampled coordinates
  /// always include the one with the largest analytic gradient.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-3;
};

struct GradcheckResult {
  double max_rel_err = 0;
  std::size_t coords = 0;
  std::string worst;
};

/// Compares the tape gradient of `loss()` with central differences for every
/// named input. Inputs must require gradients.
GradcheckResult gradcheck(const std::function<Tensor()>& loss,
                          const std::vector<std::pair<std::string, Tensor>>& inputs,
                          const GradcheckOptions& options = {});

/// Smallest model used for whole-network gradient checks.
DftrConfig tiny_config();

// ---------------------------------------------------------------------------
// suites

SuiteReport shapes_suite();
SuiteReport oracle_suite();
/// Op-level checks (tolerance 1e-4) and whole-model checks (1e-3).
SuiteReport gradcheck_suite();
SuiteReport op_gradcheck_suite();
SuiteReport model_gradcheck_suite();

/// "shapes", "oracle", "gradcheck" or "all"; throws std::invalid_argument otherwise.
SuiteReport run_suite(const std::string& name);

}  // namespace dftr::verify
