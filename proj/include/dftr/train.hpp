// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dftr/data.hpp"
#include "dftr/decoder.hpp"
#include "dftr/loss.hpp"
#include "dftr/params.hpp"
#include "dftr/rng.hpp"

namespace dftr {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 4;
  double max_lr_backbone = 0.002;
  double max_lr_other = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double grad_clip = 0;  // max global gradient norm per step; 0 = no clipping
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between intermediate checkpoints; 0 = end only
  bool augment = true;
  int threads = 1;
  LossWeights loss;

  void validate() const;
};

struct RunConfig;

/// Single triangle: rises linearly from 0 to max_lr at total/2, then falls to
/// 0 at total-1; every value is floored at max_lr·1e-3.
double cyclic_lr(std::size_t step, std::size_t total_steps, double max_lr);

/// Momentum buffers, one per parameter, in ParamStore order.
struct SgdState {
  std::vector<std::vector<double>> velocity;
  void ensure(const ParamStore& params);
};

struct MissingGradError : std::logic_error {
  using std::logic_error::logic_error;
};

/// v <- m·v + g + wd·p; p <- p - lr·v, with lr chosen by parameter group.
/// Parameters and buffers are rounded to single precision after the update.
void sgd_step(ParamStore& params, SgdState& state, double lr_backbone, double lr_other,
              double momentum, double weight_decay);

/// Rescales all gradients so their joint L2 norm is at most max_norm and
/// returns the norm before rescaling. max_norm <= 0 only measures.
double clip_grad_norm(ParamStore& params, double max_norm);

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Everything besides parameters that a resumed run needs.
struct TrainState {
  std::size_t step = 0;
  Rng rng;
  SgdState sgd;
};

TrainState initial_train_state(const TrainConfig& cfg);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::ostream* console = nullptr;
  std::size_t stop_at_step = std::numeric_limits<std::size_t>::max();
};

struct TrainSummary {
  std::size_t total_steps = 0;
  std::vector<double> step_losses;  // mean batch total per executed step
  std::string digest;
};

std::size_t steps_per_epoch(std::size_t samples, int batch_size);

/// Tab-separated log header matching the per-step lines.
std::string train_log_header();

/// Runs from state.step to the end of the schedule (or stop_at_step). The
/// sample order of an epoch depends only on (seed, epoch), and augmentation
/// draws from state.rng, so a run resumed from a checkpoint continues exactly.
TrainSummary train_loop(DftrModel& model, TrainState& state, const RunConfig& cfg,
                        const std::vector<data::Sample>& dataset, const TrainOptions& options = {});

/// Forward one rgb sample and return the saliency probability map at the
/// sample's own size.
Image predict_saliency(const DftrModel& model, const Image& rgb, Image* depth = nullptr);

}  // namespace dftr
