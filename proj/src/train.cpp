// SPDX-License-Identifier: Apache-2.0
#include "dftr/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>

#include "dftr/checkpoint.hpp"
#include "dftr/kernels.hpp"
#include "dftr/ops.hpp"
#include "dftr/run_config.hpp"

namespace dftr {
namespace {

constexpr std::uint64_t kShuffleSalt = 0x53687566666c65ULL;
constexpr std::uint64_t kAugmentSalt = 0x4175676d656e74ULL;

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::size_t epoch, std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed ^ kShuffleSalt, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

struct BatchStats {
  double total = 0;
  std::array<double, 4> bce{}, iou{}, dec{};
  double logmse = 0;

  void add(const LossReport& r, double w) {
    total += w * r.total;
    logmse += w * r.logmse;
    for (std::size_t k = 0; k < 4; ++k) {
      bce[k] += w * r.bce[k];
      iou[k] += w * r.iou[k];
      dec[k] += w * r.dec[k];
    }
  }
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

std::string log_line(std::size_t step, double lr_b, double lr_o, const BatchStats& s) {
  std::string line = std::to_string(step) + '\t' + fmt(lr_b) + '\t' + fmt(lr_o) + '\t' + fmt(s.total);
  for (const auto* arr : {&s.bce, &s.iou, &s.dec})
    for (double v : *arr) line += '\t' + fmt(v);
  line += '\t' + fmt(s.logmse);
  return line;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train.epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be at least 1");
  if (!(max_lr_backbone > 0) || !(max_lr_other > 0)) throw std::invalid_argument("learning rates must be positive");
  if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("train.momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw std::invalid_argument("train.weight_decay must be non-negative");
  if (!(grad_clip >= 0)) throw std::invalid_argument("train.grad_clip must be non-negative");
  if (checkpoint_every < 0) throw std::invalid_argument("train.checkpoint_every must be non-negative");
  if (threads < 1) throw std::invalid_argument("train.threads must be at least 1");
  loss.validate();
}

double cyclic_lr(std::size_t step, std::size_t total_steps, double max_lr) {
  if (step >= total_steps)
    throw std::out_of_range("cyclic_lr: step " + std::to_string(step) + " outside schedule of " +
                            std::to_string(total_steps));
  const std::size_t peak = total_steps / 2;
  double frac;
  if (step <= peak)
    frac = peak == 0 ? 1.0 : static_cast<double>(step) / static_cast<double>(peak);
  else
    frac = static_cast<double>(total_steps - 1 - step) / static_cast<double>(total_steps - 1 - peak);
  return std::max(max_lr * frac, max_lr * 1e-3);
}

void SgdState::ensure(const ParamStore& params) {
  const auto& entries = params.entries();
  if (velocity.size() == entries.size()) return;
  velocity.clear();
  for (const auto& p : entries) velocity.emplace_back(p.value.numel(), 0.0);
}

void sgd_step(ParamStore& params, SgdState& state, double lr_backbone, double lr_other, double momentum,
              double weight_decay) {
  state.ensure(params);
  auto& entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Parameter& p = entries[i];
    if (!p.value.has_grad()) throw MissingGradError("parameter " + p.name + " has no gradient");
    const double lr = p.group == ParamGroup::Backbone ? lr_backbone : lr_other;
    auto values = p.value.mutable_data();
    const auto grad = p.value.grad();
    auto& v = state.velocity[i];
    for (std::size_t k = 0; k < values.size(); ++k) {
      v[k] = round_to_f32(momentum * v[k] + grad[k] + weight_decay * values[k]);
      values[k] = round_to_f32(values[k] - lr * v[k]);
      if (!std::isfinite(values[k])) throw DivergenceError("parameter " + p.name + " became non-finite");
    }
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  double sum = 0;
  for (const auto& p : params.entries())
    for (double g : p.value.grad()) sum += g * g;
  const double norm = std::sqrt(sum);
  if (max_norm > 0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& p : params.entries())
      if (p.value.has_grad())
        for (double& g : p.value.grad_buffer()) g *= factor;
  }
  return norm;
}

TrainState initial_train_state(const TrainConfig& cfg) {
  TrainState s;
  s.rng = Rng(derive_seed(cfg.seed, kAugmentSalt));
  return s;
}

std::size_t steps_per_epoch(std::size_t samples, int batch_size) {
  const auto b = static_cast<std::size_t>(batch_size);
  return (samples + b - 1) / b;
}

std::string train_log_header() {
  std::string h = "step\tlr_backbone\tlr_other\ttotal";
  for (const char* term : {"bce", "iou", "dec"})
    for (int k = 1; k <= 4; ++k) h += std::string("\t") + term + std::to_string(k);
  return h + "\tlogmse";
}

TrainSummary train_loop(DftrModel& model, TrainState& state, const RunConfig& cfg,
                        const std::vector<data::Sample>& dataset, const TrainOptions& options) {
  cfg.validate();
  const auto& tc = cfg.train;
  const std::size_t n = dataset.size();
  if (n == 0 && tc.epochs > 0) throw std::invalid_argument("training dataset is empty");
  const std::size_t per_epoch = n == 0 ? 0 : steps_per_epoch(n, tc.batch_size);
  TrainSummary summary;
  summary.total_steps = static_cast<std::size_t>(tc.epochs) * per_epoch;
  const std::size_t side = model.config().image_side();
  const std::string digest = config_digest(cfg);
  kernels::set_num_threads(tc.threads);

  std::ofstream log;
  if (!options.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());
    write_file_atomic(options.out_dir / "config.resolved", resolved_text(cfg));
    const bool append = state.step > 0;
    log.open(options.out_dir / "train.log", append ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot write " + (options.out_dir / "train.log").string());
    if (!append) log << train_log_header() << '\n';
  }
  if (options.console != nullptr && state.step < summary.total_steps)
    *options.console << train_log_header() << '\n';

  state.sgd.ensure(model.params());
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::size_t> order;

  while (state.step < summary.total_steps && state.step < options.stop_at_step) {
    const std::size_t epoch = state.step / per_epoch, batch = state.step % per_epoch;
    if (epoch != cached_epoch) {
      order = epoch_order(tc.seed, epoch, n);
      cached_epoch = epoch;
    }
    const std::size_t first = batch * static_cast<std::size_t>(tc.batch_size);
    const std::size_t last = std::min(n, first + static_cast<std::size_t>(tc.batch_size));
    const double lr_b = cyclic_lr(state.step, summary.total_steps, tc.max_lr_backbone);
    const double lr_o = cyclic_lr(state.step, summary.total_steps, tc.max_lr_other);
    const double weight = 1.0 / static_cast<double>(last - first);

    model.params().clear_grads();
    BatchStats stats;
    try {
      for (std::size_t i = first; i < last; ++i) {
        const data::Sample& raw = dataset[order[i]];
        const data::Sample s = tc.augment ? data::augment(raw, state.rng, cfg.augment, side)
                                          : data::resize_to_input(raw, side);
        Tape tape;
        TapeScope scope(tape);
        const Predictions preds = model.forward(data::to_tensor(s.rgb));
        const LossReport report = total_loss(preds, data::to_tensor(s.mask), data::to_tensor(s.depth), tc.loss,
                                             model.config().decoder);
        stats.add(report, weight);
        tape.backward(scale(report.total_tensor, weight));
      }
    } catch (const NonFiniteError& e) {
      throw DivergenceError("step " + std::to_string(state.step) + ": " + e.what());
    }
    if (tc.grad_clip > 0) clip_grad_norm(model.params(), tc.grad_clip);
    sgd_step(model.params(), state.sgd, lr_b, lr_o, tc.momentum, tc.weight_decay);
    const std::string line = log_line(state.step, lr_b, lr_o, stats);
    if (log.is_open()) log << line << '\n' << std::flush;
    if (options.console != nullptr) *options.console << line << '\n';
    summary.step_losses.push_back(stats.total);
    ++state.step;

    if (!options.out_dir.empty() && tc.checkpoint_every > 0 && state.step % per_epoch == 0) {
      const std::size_t done = state.step / per_epoch;
      if (done % static_cast<std::size_t>(tc.checkpoint_every) == 0 && state.step < summary.total_steps) {
        char name[32];
        std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", done);
        save_checkpoint(options.out_dir / name, capture(model, state, digest));
      }
    }
  }
  if (!options.out_dir.empty()) save_checkpoint(options.out_dir / "checkpoint.bin", capture(model, state, digest));
  summary.digest = parameter_digest(model.params());
  return summary;
}

Image predict_saliency(const DftrModel& model, const Image& rgb, Image* depth) {
  if (rgb.channels != 3) throw std::invalid_argument("predict_saliency expects an RGB image");
  const std::size_t side = model.config().image_side();
  const Image input = data::resize_bilinear(rgb, side, side);
  const Predictions preds = model.forward(data::to_tensor(input));
  const Image prob = data::to_image(sigmoid(preds.saliency_logits), side, side);
  if (depth != nullptr && preds.depth.defined())
    *depth = data::rescale_prediction(data::to_image(preds.depth, side, side), rgb.width, rgb.height);
  return data::rescale_prediction(prob, rgb.width, rgb.height);
}

}  // namespace dftr
