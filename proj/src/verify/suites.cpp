// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "dftr/data.hpp"
#include "dftr/loss.hpp"
#include "dftr/ops.hpp"
#include "dftr/verify.hpp"

namespace dftr::verify {
namespace {

constexpr double kAttentionTolerance = 1e-6;
constexpr double kMetricTolerance = 1e-9;
constexpr double kLossTolerance = 1e-6;

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

using Clock = std::chrono::steady_clock;
double since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

void attention_checks(SuiteReport& report) {
  for (std::size_t grid : {4u, 8u}) {
    const std::size_t c = 8, heads = 2;
    Rng rng(100 + grid);
    std::vector<double> xv(grid * grid * c);
    for (auto& v : xv) v = rng.uniform(-1, 1);
    const Tensor x = Tensor::from({grid * grid, c}, xv);
    const TokenMap map = TokenMap::make(x, grid, grid);
    const std::string g = std::to_string(grid) + "x" + std::to_string(grid);

    auto make = [&](std::size_t window, std::size_t shift) {
      ParamStore store;
      Rng init_rng(7 * grid + window);
      Initializer init(store, init_rng);
      auto p = swin::make_block(init, "b", {c, heads, window, shift, 4, true});
      for (auto& e : store.entries())
        for (auto& v : e.value.mutable_data()) v = 0.5 * init_rng.normal();
      return std::pair{std::move(store), std::move(p)};
    };

    {
      auto [store, p] = make(grid, 0);
      const Tensor got = swin::wmsa(map, p).tokens;
      const Tensor want = attention_oracle(x, grid, grid, p, grid, 0);
      report.add("oracle/attention/wmsa_full_grid_vs_dense/" + g, max_abs_diff(got.data(), want.data()),
                 kAttentionTolerance);
    }
    const std::size_t win = grid / 2;
    {
      auto [store, p] = make(win, 0);
      const Tensor got = swin::wmsa(map, p).tokens;
      const Tensor want = attention_oracle(x, grid, grid, p, win, 0);
      report.add("oracle/attention/wmsa_windowed_vs_block_dense/" + g, max_abs_diff(got.data(), want.data()),
                 kAttentionTolerance);
    }
    {
      auto [store, p] = make(win, win / 2);
      const Tensor got = swin::sw_msa(map, p).tokens;
      const Tensor want = attention_oracle(x, grid, grid, p, win, win / 2);
      report.add("oracle/attention/sw_msa_vs_masked_dense/" + g, max_abs_diff(got.data(), want.data()),
                 kAttentionTolerance);
    }
  }
}

Image random_pred(Rng& rng, std::size_t n, bool quantized) {
  Image img = Image::blank(n, n, 1);
  for (auto& v : img.data) v = quantized ? static_cast<double>(rng.below(256)) / 255.0 : rng.uniform();
  return img;
}

Image random_mask(Rng& rng, std::size_t n) {
  Image img = Image::blank(n, n, 1);
  const double cx = rng.uniform(3, n - 3.0), cy = rng.uniform(3, n - 3.0), r = rng.uniform(2, n / 3.0);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      img.at(y, x) = (dx * dx + dy * dy <= r * r) ? 1.0 : 0.0;
    }
  return img;
}

void metric_checks(SuiteReport& report) {
  Rng rng(4242);
  double mae_err = 0, f_err = 0, e_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Image gt = random_mask(rng, 16);
    Image pred = random_pred(rng, 16, trial % 2 == 0);
    // Correlate half of the cases with the mask so the maxima are not trivial.
    if (trial % 4 < 2)
      for (std::size_t i = 0; i < pred.data.size(); ++i) pred.data[i] = 0.6 * gt.data[i] + 0.4 * pred.data[i];
    mae_err = std::max(mae_err, std::abs(metrics::mae(pred, gt) - naive_mae(pred, gt)));
    f_err = std::max(f_err, std::abs(metrics::max_f_measure(pred, gt).max - naive_max_f(pred, gt)));
    e_err = std::max(e_err, std::abs(metrics::max_e_measure(pred, gt).max - naive_max_e(pred, gt)));
  }
  report.add("oracle/metrics/mae_vs_naive_16x16", mae_err, kMetricTolerance);
  report.add("oracle/metrics/max_f_vs_naive_16x16", f_err, kMetricTolerance);
  report.add("oracle/metrics/max_e_vs_naive_16x16", e_err, kMetricTolerance);

  const Image gt = random_mask(rng, 16);
  const auto ideal = metrics::evaluate(gt, gt);
  report.add("oracle/metrics/ideal_s", std::abs(ideal.s_alpha - 1.0), kMetricTolerance);
  report.add("oracle/metrics/ideal_max_f", std::abs(ideal.f_beta_max - 1.0), 1e-6);
  report.add("oracle/metrics/ideal_max_e", std::abs(ideal.e_xi_max - 1.0), 1e-6);
  report.add("oracle/metrics/ideal_mae", ideal.mae, kMetricTolerance);
}

void loss_checks(SuiteReport& report) {
  Rng rng(8);
  std::vector<double> logits(64), gt(64);
  for (std::size_t i = 0; i < 64; ++i) {
    logits[i] = rng.uniform(-4, 4);
    gt[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  }
  const Tensor lt = Tensor::from({64, 1}, logits), gtt = Tensor::from({64, 1}, gt);
  report.add("oracle/loss/bce_vs_direct_formula", std::abs(bce_loss(lt, gtt).item() - naive_bce(logits, gt)),
             kLossTolerance);
  report.add("oracle/loss/iou_vs_direct_formula", std::abs(iou_loss(lt, gtt).item() - naive_iou(logits, gt)),
             kLossTolerance);

  DftrConfig cfg = tiny_config();
  DftrModel model(cfg, 21);
  data::SceneSpec spec;
  spec.size = 32;
  const auto s = data::make_scene(spec, 3);
  const Tensor mask = data::to_tensor(s.mask), depth = data::to_tensor(s.depth);
  const LossReport r = total_loss(model.forward(data::to_tensor(s.rgb)), mask, depth, {}, cfg.decoder);
  double parts = r.logmse;
  const LossWeights w;
  for (std::size_t k = 0; k < 4; ++k) parts += w.lambda[k] * (r.bce[k] + r.iou[k] + r.dec[k]);
  report.add("oracle/loss/total_recomposes_from_parts", std::abs(r.total - parts), kLossTolerance);

  // Saturated logits matching the mask and an exact depth map.
  Predictions perfect;
  std::vector<double> sat(mask.numel());
  for (std::size_t i = 0; i < sat.size(); ++i) sat[i] = mask[i] > 0.5 ? 40.0 : -40.0;
  perfect.saliency_logits = Tensor::from(mask.shape(), sat);
  for (int k = 0; k < 3; ++k) perfect.mls_logits.push_back(perfect.saliency_logits);
  perfect.depth = depth;
  const LossReport pr = total_loss(perfect, mask, depth, {}, cfg.decoder);
  double worst = pr.logmse;
  for (std::size_t k = 0; k < 4; ++k) worst = std::max({worst, pr.bce[k], pr.iou[k], pr.dec[k]});
  report.add("oracle/loss/perfect_prediction_terms", worst, 1e-5);
}

}  // namespace

bool SuiteReport::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

void SuiteReport::add(std::string name, double error, double tolerance, std::string detail) {
  checks.push_back({std::move(name), error, tolerance, std::isfinite(error) && error < tolerance, std::move(detail)});
}

void SuiteReport::add_bool(std::string name, bool ok, std::string detail) {
  checks.push_back({std::move(name), ok ? 0.0 : 1.0, 0.5, ok, std::move(detail)});
}

void SuiteReport::merge(const SuiteReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
  seconds += other.seconds;
}

void SuiteReport::print(std::ostream& os) const {
  for (const auto& c : checks) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "err=%.3e tol=%.1e", c.error, c.tolerance);
    os << (c.pass ? "PASS  " : "FAIL  ") << c.name << "  " << buf;
    if (!c.pass && !c.detail.empty()) os << "  (" << c.detail << ")";
    os << '\n';
  }
}

SuiteReport shapes_suite() {
  SuiteReport report;
  const auto start = Clock::now();
  {
    swin::EncoderConfig ec;
    ParamStore store;
    Rng rng(1);
    Initializer init(store, rng);
    const swin::Encoder enc(ec, init);
    const auto pyramid = enc.encode(Tensor::full({64 * 64, 3}, 0.5));
    const std::size_t want[4][2] = {{256, 16}, {64, 32}, {16, 64}, {4, 128}};
    for (std::size_t k = 0; k < 4; ++k) {
      const auto& t = pyramid[k].tokens;
      const bool ok = t.dim(0) == want[k][0] && t.dim(1) == want[k][1];
      report.add_bool("shapes/encoder_img64_C16/F" + std::to_string(4 - k), ok, to_string(t.shape()));
    }
  }
  for (int c : {16, 128}) {
    swin::EncoderConfig ec;
    ec.img_size = 352;
    ec.embed_dim = c;
    ec.window = 11;
    const auto shapes = ec.feature_shapes();
    const auto cc = static_cast<std::size_t>(c);
    const std::pair<std::size_t, std::size_t> want[4] = {{88 * 88, cc}, {44 * 44, 2 * cc}, {22 * 22, 4 * cc}, {11 * 11, 8 * cc}};
    bool ok = true;
    for (std::size_t k = 0; k < 4; ++k) ok = ok && shapes[k] == want[k];
    report.add_bool("shapes/feature_shapes_img352_C" + std::to_string(c), ok);
  }
  for (int down : {4, 8, 16}) {
    DftrConfig cfg;
    cfg.decoder.down = down;
    DftrModel model(cfg, 2);
    bool ok = true;
    std::string detail;
    try {
      const auto p = model.forward(Tensor::full({64 * 64, 3}, 0.25));
      for (const StreamFeatures* sf : {&p.saliency_stream, &*p.depth_stream})
        for (int level = 1; level <= 4; ++level) {
          const std::size_t grid = cfg.level_grid(level), ch = cfg.level_channels(level);
          std::vector<const TokenMap*> maps{&sf->reduced[level - 1], &sf->fused[level - 1]};
          if (level > 1) maps.push_back(&sf->aggregated[level - 1]);
          for (const TokenMap* m : maps)
            if (m->h != grid || m->w != grid || m->tokens.dim(0) != grid * grid || m->channels() != ch) {
              ok = false;
              detail = "level " + std::to_string(level) + " " + to_string(m->tokens.shape());
            }
        }
      ok = ok && p.saliency_logits.dim(0) == 64 * 64 && p.mls_logits.size() == 3;
    } catch (const std::exception& e) {
      ok = false;
      detail = e.what();
    }
    report.add_bool("shapes/stream_features_down" + std::to_string(down), ok, detail);
  }
  report.seconds = since(start);
  return report;
}

SuiteReport oracle_suite() {
  SuiteReport report;
  const auto start = Clock::now();
  attention_checks(report);
  metric_checks(report);
  loss_checks(report);
  report.seconds = since(start);
  return report;
}

SuiteReport run_suite(const std::string& name) {
  if (name == "shapes") return shapes_suite();
  if (name == "oracle") return oracle_suite();
  if (name == "gradcheck") return gradcheck_suite();
  if (name == "all") {
    SuiteReport r = shapes_suite();
    r.merge(oracle_suite());
    r.merge(gradcheck_suite());
    return r;
  }
  throw std::invalid_argument("unknown suite '" + name + "' (expected gradcheck, oracle, shapes or all)");
}

}  // namespace dftr::verify
