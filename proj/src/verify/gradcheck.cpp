// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "dftr/data.hpp"
#include "dftr/loss.hpp"
#include "dftr/ops.hpp"
#include "dftr/rng.hpp"
#include "dftr/verify.hpp"

namespace dftr::verify {
namespace {

constexpr double kOpTolerance = 1e-4;
constexpr double kModelTolerance = 1e-3;

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  Tensor t = Tensor::from(std::move(shape), std::move(v));
  t.set_requires_grad(true);
  return t;
}

/// Σ y ⊙ R for a fixed pseudo-random R, so every output element contributes.
Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  std::vector<double> r(y.numel());
  for (auto& v : r) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, Tensor::from(y.shape(), std::move(r))));
}

/// Evaluation point for whole-model checks: weights drawn at a quarter of the
/// fan-in scale, perturbed norms and small offsets.
void condition(ParamStore& store, Rng& rng, double gain = 0.25) {
  for (auto& p : store.entries()) {
    const std::string& n = p.name;
    auto v = p.value.mutable_data();
    if (n.ends_with(".weight") && p.value.rank() == 2) {
      const double std = gain / std::sqrt(static_cast<double>(p.value.dim(0)));
      for (auto& x : v) x = std * rng.normal();
    } else if (n.ends_with(".gamma")) {
      for (auto& x : v) x = 1.0 + 0.1 * rng.normal();
    } else {
      for (auto& x : v) x = 0.1 * rng.normal();
    }
  }
}

struct OpCase {
  std::string name;
  std::vector<std::pair<std::string, Tensor>> inputs;
  std::function<Tensor()> loss;
};

std::vector<OpCase> op_cases() {
  Rng rng(2024);
  std::vector<OpCase> cases;
  auto unary = [&](std::string name, Tensor x, std::function<Tensor(const Tensor&)> f) {
    cases.push_back({std::move(name), {{"x", x}}, [x, f] { return probe(f(x)); }});
  };
  auto binary = [&](std::string name, Tensor a, Tensor b, std::function<Tensor(const Tensor&, const Tensor&)> f) {
    cases.push_back({std::move(name), {{"a", a}, {"b", b}}, [a, b, f] { return probe(f(a, b)); }});
  };

  binary("add_broadcast", random_tensor(rng, {3, 4}), random_tensor(rng, {4}), add);
  binary("sub_broadcast", random_tensor(rng, {2, 3, 4}), random_tensor(rng, {3, 1}), sub);
  binary("mul_broadcast", random_tensor(rng, {2, 3}), random_tensor(rng, {2, 1}), mul);
  binary("div", random_tensor(rng, {3, 3}), random_tensor(rng, {3, 3}, 0.5, 2.0), div);
  unary("gelu", random_tensor(rng, {4, 5}, -3, 3), gelu);
  unary("sigmoid", random_tensor(rng, {4, 5}, -3, 3), sigmoid);
  unary("log", random_tensor(rng, {4, 5}, 0.5, 2.0), [](const Tensor& x) { return log(x); });
  unary("exp", random_tensor(rng, {4, 5}), [](const Tensor& x) { return exp(x); });
  unary("scale", random_tensor(rng, {6}), [](const Tensor& x) { return scale(x, -1.7); });
  unary("add_scalar", random_tensor(rng, {6}), [](const Tensor& x) { return add_scalar(x, 0.3); });
  unary("square", random_tensor(rng, {6}), square);
  unary("sum", random_tensor(rng, {3, 4}), [](const Tensor& x) { return sum(x); });
  unary("mean", random_tensor(rng, {3, 4}), [](const Tensor& x) { return mean(x); });
  binary("matmul", random_tensor(rng, {3, 4}), random_tensor(rng, {4, 5}), matmul);
  binary("bmm", random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 4, 5}),
         [](const Tensor& a, const Tensor& b) { return bmm(a, b); });
  binary("bmm_transposed", random_tensor(rng, {2, 3, 4}), random_tensor(rng, {2, 5, 4}),
         [](const Tensor& a, const Tensor& b) { return bmm(a, b, kernels::Trans::Yes); });
  {
    Tensor x = random_tensor(rng, {5, 4}), w = random_tensor(rng, {4, 3}), b = random_tensor(rng, {3});
    cases.push_back({"linear", {{"x", x}, {"w", w}, {"b", b}}, [=] { return probe(linear(x, w, b)); }});
  }
  unary("softmax_lastdim", random_tensor(rng, {3, 6}, -2, 2), softmax_lastdim);
  {
    Tensor x = random_tensor(rng, {4, 6}, -2, 2), g = random_tensor(rng, {6}), b = random_tensor(rng, {6});
    cases.push_back({"layernorm", {{"x", x}, {"gamma", g}, {"beta", b}}, [=] { return probe(layernorm(x, g, b)); }});
  }
  unary("reshape", random_tensor(rng, {2, 6}), [](const Tensor& x) { return reshape(x, {3, 4}); });
  unary("permute", random_tensor(rng, {2, 3, 4}), [](const Tensor& x) { return permute(x, {2, 0, 1}); });
  binary("concat", random_tensor(rng, {3, 2}), random_tensor(rng, {3, 4}), [](const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat(parts, 1);
  });
  unary("slice", random_tensor(rng, {4, 5}), [](const Tensor& x) { return slice(x, 1, 1, 3); });
  unary("split", random_tensor(rng, {4, 5}), [](const Tensor& x) {
    auto parts = split(x, 0, {1, 3});
    return mul(sum(parts[0]), sum(parts[1]));
  });
  unary("gather_repeated", random_tensor(rng, {6}),
        [](const Tensor& x) { return gather(x, {0, 2, 2, 5, 0, 1}, {2, 3}); });
  unary("bilinear_up", random_tensor(rng, {9, 2}),
        [](const Tensor& x) { return bilinear_resize(x, 3, 3, 6, 6); });
  unary("bilinear_down", random_tensor(rng, {36, 2}),
        [](const Tensor& x) { return bilinear_resize(x, 6, 6, 4, 4); });
  {
    Tensor logits = random_tensor(rng, {10}, -4, 4);
    Tensor target = Tensor::from({10}, {0, 1, 1, 0, 1, 0, 0, 1, 1, 0});
    cases.push_back({"bce_with_logits", {{"logits", logits}}, [=] { return probe(bce_with_logits(logits, target)); }});
  }
  return cases;
}

/// Layer-level cases built from randomly initialized blocks.
struct LayerFixture {
  ParamStore store;
  Rng rng{77};
  Initializer init{store, rng};
};

std::vector<OpCase> layer_cases(LayerFixture& fx) {
  std::vector<OpCase> cases;
  Rng rng(31);
  auto named = [&](std::vector<std::pair<std::string, Tensor>> extra) {
    for (const auto& p : fx.store.entries()) extra.emplace_back(p.name, p.value);
    return extra;
  };

  const auto block_shift = swin::make_block(fx.init, "blk", {8, 2, 2, 1, 2, true});
  const auto merge = swin::make_patch_merge(fx.init, "merge", 4);
  const auto embed = swin::make_linear(fx.init, "embed", 48, 4);
  const auto mfa = make_mfa(fx.init, "mfa", 2, 4, {2, 2, 4, true});
  const auto mff = make_mff(fx.init, "mff", 2, 4, {2, 1, 4, true});
  condition(fx.store, fx.rng);

  Tensor x = random_tensor(rng, {16, 8});
  cases.push_back({"swin_block_shifted", named({{"x", x}}),
                   [=] { return probe(swin::swin_block(TokenMap::make(x, 4, 4), block_shift).tokens); }});
  Tensor xm = random_tensor(rng, {16, 4});
  cases.push_back({"patch_merge", {{"x", xm}}, [=] { return probe(swin::patch_merge(TokenMap::make(xm, 4, 4), merge).tokens); }});
  Tensor img = random_tensor(rng, {64, 3}, 0, 1);
  cases.push_back({"patch_embed", {{"rgb", img}}, [=] { return probe(swin::patch_embed(img, 8, 8, embed).tokens); }});
  Tensor coarse = random_tensor(rng, {4, 4}), fine = random_tensor(rng, {16, 2});
  cases.push_back({"mfa_forward", {{"coarse", coarse}, {"fine", fine}}, [=] {
                     return probe(mfa_forward(TokenMap::make(coarse, 2, 2), TokenMap::make(fine, 4, 4), mfa).tokens);
                   }});
  Tensor zs = random_tensor(rng, {16, 2}), zd = random_tensor(rng, {16, 2});
  cases.push_back({"mff_forward", {{"zs", zs}, {"zd", zd}}, [=] {
                     auto [s, d] = mff_forward(TokenMap::make(zs, 4, 4), TokenMap::make(zd, 4, 4), mff);
                     return add(probe(s.tokens, 5), probe(d.tokens, 6));
                   }});

  Tensor logits = random_tensor(rng, {16, 1}, -3, 3);
  std::vector<double> mask_v(16), depth_gt_v(16);
  for (std::size_t i = 0; i < 16; ++i) {
    mask_v[i] = (i % 3 == 0) ? 1.0 : 0.0;
    depth_gt_v[i] = rng.uniform(0.05, 0.95);
  }
  Tensor mask = Tensor::from({16, 1}, mask_v), depth_gt = Tensor::from({16, 1}, depth_gt_v);
  Tensor depth_pred = random_tensor(rng, {16, 1}, 0.05, 0.95);
  cases.push_back({"bce_loss", {{"logits", logits}}, [=] { return bce_loss(logits, mask); }});
  cases.push_back({"iou_loss", {{"logits", logits}}, [=] { return iou_loss(logits, mask); }});
  cases.push_back({"logmse_loss", {{"pred", depth_pred}}, [=] { return logmse_loss(depth_pred, depth_gt); }});
  const auto w = dec_weights(depth_pred, depth_gt);
  cases.push_back({"dec_loss", {{"logits", logits}}, [=] { return dec_loss(logits, mask, depth_pred, depth_gt, w); }});
  return cases;
}

}  // namespace

GradcheckResult gradcheck(const std::function<Tensor()>& loss,
                          const std::vector<std::pair<std::string, Tensor>>& inputs,
                          const GradcheckOptions& options) {
  for (const auto& [_, t] : inputs) t.clear_grad();
  {
    Tape tape;
    Tensor l;
    {
      TapeScope scope(tape);
      l = loss();
    }
    tape.backward(l);
  }
  GradcheckResult result;
  Rng rng(options.seed);
  for (const auto& [name, input] : inputs) {
    Tensor t = input;
    const std::size_t n = t.numel();
    std::vector<double> analytic(n, 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords > 0 && n > options.max_coords) {
      const auto top = static_cast<std::size_t>(
          std::max_element(analytic.begin(), analytic.end(),
                           [](double a, double b) { return std::abs(a) < std::abs(b); }) -
          analytic.begin());
      for (std::size_t i = n; i > 1; --i) std::swap(coords[i - 1], coords[rng.below(i)]);
      coords.resize(options.max_coords - 1);
      if (std::find(coords.begin(), coords.end(), top) == coords.end()) coords.push_back(top);
    }
    auto values = t.mutable_data();
    for (std::size_t k : coords) {
      const double saved = values[k];
      values[k] = saved + options.h;
      const double up = loss().item();
      values[k] = saved - options.h;
      const double down = loss().item();
      values[k] = saved;
      const double numeric = (up - down) / (2 * options.h);
      const double err = std::abs(analytic[k] - numeric) /
                         std::max({std::abs(analytic[k]), std::abs(numeric), options.floor});
      ++result.coords;
      if (err >= result.max_rel_err) {
        result.max_rel_err = err;
        result.worst = name + "[" + std::to_string(k) + "] analytic " + std::to_string(analytic[k]) +
                       " numeric " + std::to_string(numeric);
      }
    }
  }
  for (const auto& [_, t] : inputs) t.clear_grad();
  return result;
}

DftrConfig tiny_config() {
  DftrConfig cfg;
  cfg.encoder.img_size = 32;
  cfg.encoder.embed_dim = 2;
  cfg.encoder.depths = {2, 2, 1, 1};
  cfg.encoder.heads = {1, 1, 2, 2};
  cfg.encoder.window = 2;
  cfg.encoder.mlp_ratio = 1;
  cfg.decoder.down = 2;
  cfg.decoder.block_depth = 1;
  return cfg;
}

SuiteReport op_gradcheck_suite() {
  SuiteReport report;
  const auto start = std::chrono::steady_clock::now();
  auto run = [&](const OpCase& c) {
    const auto r = gradcheck(c.loss, c.inputs);
    report.add("gradcheck/op/" + c.name, r.max_rel_err, kOpTolerance, r.worst);
  };
  for (const auto& c : op_cases()) run(c);
  LayerFixture fx;
  for (const auto& c : layer_cases(fx)) run(c);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

SuiteReport model_gradcheck_suite() {
  SuiteReport report;
  const auto start = std::chrono::steady_clock::now();
  data::SceneSpec spec;
  spec.size = 32;
  spec.seed = 5;
  const data::Sample s = data::make_scene(spec, 0);
  const Tensor rgb = data::to_tensor(s.rgb), mask = data::to_tensor(s.mask), depth = data::to_tensor(s.depth);

  for (char ablation : {'a', 'e'}) {
    DftrConfig cfg = tiny_config();
    cfg.decoder = ablation_flags(ablation, cfg.decoder);
    DftrModel model(cfg, 11);
    Rng rng(12);
    condition(model.params(), rng);

    LossOptions options;
    if (cfg.decoder.use_depth_stream) options.dec_weights = dec_weights(model.forward(rgb).depth, depth);
    auto loss = [&] { return total_loss(model.forward(rgb), mask, depth, LossWeights{}, cfg.decoder, options).total_tensor; };
    std::vector<std::pair<std::string, Tensor>> inputs;
    for (const auto& p : model.params().entries()) inputs.emplace_back(p.name, p.value);
    GradcheckOptions go;
    go.max_coords = ablation == 'e' ? 0 : 8;  // the full model is checked exhaustively
    go.seed = 3;
    const auto r = gradcheck(loss, inputs, go);
    report.add(std::string("gradcheck/model/ablation_") + ablation + " (" + std::to_string(r.coords) + " coords, " +
                   std::to_string(model.params().scalar_count()) + " params)",
               r.max_rel_err, kModelTolerance, r.worst);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

SuiteReport gradcheck_suite() {
  SuiteReport r = op_gradcheck_suite();
  r.merge(model_gradcheck_suite());
  return r;
}

}  // namespace dftr::verify
