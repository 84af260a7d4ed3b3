// SPDX-License-Identifier: Apache-2.0
#include "commands.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <map>
#include <ostream>

#include "dftr/checkpoint.hpp"
#include "dftr/data.hpp"
#include "dftr/metrics.hpp"
#include "dftr/run_config.hpp"
#include "dftr/train.hpp"
#include "dftr/verify.hpp"

namespace dftr::cli {
namespace fs = std::filesystem;

namespace {

/// Maps library exceptions onto the documented exit codes.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigMismatchError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigMismatch;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << '\n';
    return kDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

int run_gen(const GenArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    data::SceneSpec spec;
    spec.size = a.size;
    spec.seed = a.seed;
    spec.shapes = data::parse_shape_list(a.shapes);
    data::generate(spec, a.n, a.out);
    std::map<std::string, std::size_t> counts;
    for (std::size_t i = 0; i < a.n; ++i) ++counts[data::to_string(data::make_scene(spec, i).shape)];
    out << "wrote " << a.n << " samples (" << a.size << "x" << a.size << ") to " << a.out << '\n';
    for (const auto& [shape, count] : counts) out << "  " << shape << '\t' << count << '\n';
    return static_cast<int>(kOk);
  });
}

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    RunConfig cfg;
    if (!a.config.empty()) cfg = load_run_config(a.config);
    for (const auto& o : a.overrides) apply_override(cfg, o);
    if (!a.ablation.empty()) {
      if (a.ablation.size() != 1) throw ConfigError("--ablation takes one letter a..e");
      cfg.model.decoder = ablation_flags(a.ablation[0], cfg.model.decoder);
    }
    cfg.validate();
    if (!fs::is_directory(a.data)) throw IoError("data directory not found: " + a.data);
    const auto dataset = data::load_dataset(a.data);

    DftrModel model(cfg.model, cfg.train.seed);
    TrainState state = initial_train_state(cfg.train);
    if (!a.resume.empty()) restore(model, state, load_checkpoint(a.resume), config_digest(cfg));

    TrainOptions options;
    options.out_dir = a.out;
    options.console = a.quiet ? nullptr : &out;
    const TrainSummary summary = train_loop(model, state, cfg, dataset, options);
    out << "steps\t" << state.step << '/' << summary.total_steps << '\n';
    out << "digest\t" << summary.digest << '\n';
    return static_cast<int>(kOk);
  });
}

int run_infer(const InferArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path ckpt_path = a.ckpt;
    const fs::path config_path = a.config.empty() ? ckpt_path.parent_path() / "config.resolved" : fs::path(a.config);
    const RunConfig cfg = load_run_config(config_path);
    cfg.validate();
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    DftrModel model(cfg.model, cfg.train.seed);
    TrainState state = initial_train_state(cfg.train);
    restore(model, state, ckpt, config_digest(cfg));

    fs::path in = a.in;
    if (fs::is_directory(in / "rgb")) in /= "rgb";
    if (!fs::is_directory(in)) throw IoError("input directory not found: " + a.in);
    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(in))
      if (e.is_regular_file() && e.path().extension() == ".ppm") inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());

    const fs::path out_dir = a.out;
    ensure_dir(out_dir);
    if (a.save_depth) ensure_dir(out_dir / "depth");
    write_file_atomic(out_dir / "config.resolved", resolved_text(cfg));
    for (const auto& path : inputs) {
      const Image rgb = load_ppm(path);
      Image depth;
      const Image sal = predict_saliency(model, rgb, a.save_depth ? &depth : nullptr);
      const std::string name = path.stem().string();
      save_pgm(out_dir / (name + ".pgm"), sal);
      if (a.save_depth && !depth.data.empty()) save_pgm(out_dir / "depth" / (name + ".pgm"), depth);
    }
    if (a.save_depth && !cfg.model.decoder.use_depth_stream)
      err << "note: model has no depth stream; no depth maps written\n";
    out << "wrote " << inputs.size() << " predictions to " << a.out << '\n';
    return static_cast<int>(kOk);
  });
}

int run_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto eval = metrics::evaluate_dir(a.pred, a.gt);
    for (const auto& [name, reason] : eval.skipped) err << "skipped " << name << ": " << reason << '\n';
    if (!eval.unmatched.empty()) {
      err << "error: " << eval.unmatched.size() << " file(s) without a counterpart:\n";
      for (const auto& n : eval.unmatched) err << "  " << n << '\n';
    }
    if (eval.images.empty()) {
      err << "error: no prediction/ground-truth pairs to evaluate\n";
      return static_cast<int>(kEvalPairing);
    }
    const std::string report = metrics::format_report(eval);
    if (!a.report.empty()) write_file_atomic(a.report, report);
    out << report;
    return static_cast<int>(eval.unmatched.empty() ? kOk : kEvalPairing);
  });
}

int run_verify(const std::string& suite, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto report = verify::run_suite(suite);
    report.print(out);
    std::size_t failed = 0;
    for (const auto& c : report.checks) failed += c.pass ? 0 : 1;
    out << report.checks.size() - failed << '/' << report.checks.size() << " checks passed in " << report.seconds
        << " s\n";
    return static_cast<int>(failed == 0 ? kOk : kVerifyFailure);
  });
}

int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Depth-supervised fusion transformer for salient object detection"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic RGB/depth/mask dataset");
  g->add_option("--out", gen.out, "Output dataset directory")->required();
  g->add_option("--n", gen.n, "Number of samples")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--size", gen.size, "Image side in pixels")->check(CLI::Range(8, 4096));
  g->add_option("--shapes", gen.shapes, "Comma-separated shape kinds");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--config", train.config, "key = value run configuration");
  t->add_option("--data", train.data, "Dataset directory")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--ablation", train.ablation, "Component set a..e")->check(CLI::IsMember({"a", "b", "c", "d", "e"}));
  t->add_option("--set", train.overrides, "Override a config key (key=value)");
  t->add_option("--resume", train.resume, "Checkpoint to resume from");
  t->add_flag("--quiet", train.quiet, "Only write train.log");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Predict saliency maps for a directory of PPM images");
  i->add_option("--ckpt", infer.ckpt, "Checkpoint file")->required();
  i->add_option("--in", infer.in, "Directory of .ppm images (or a dataset root)")->required();
  i->add_option("--out", infer.out, "Output directory")->required();
  i->add_option("--config", infer.config, "Resolved config (default: next to the checkpoint)");
  i->add_flag("--save-depth", infer.save_depth, "Also write predicted depth maps");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  e->add_option("--pred", ev.pred, "Prediction directory")->required();
  e->add_option("--gt", ev.gt, "Mask directory or dataset root")->required();
  e->add_option("--report", ev.report, "TSV report path");

  std::string suite = "all";
  auto* v = app.add_subcommand("verify", "Run verification suites");
  v->add_option("--suite", suite, "gradcheck, oracle, shapes or all")
      ->check(CLI::IsMember({"gradcheck", "oracle", "shapes", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << '\n';
    return kUsage;
  }

  if (*g) return run_gen(gen, out, err);
  if (*t) return run_train(train, out, err);
  if (*i) return run_infer(infer, out, err);
  if (*e) return run_eval(ev, out, err);
  return run_verify(suite, out, err);
}

}  // namespace dftr::cli
