// Command line front end: preprocess / train / eval / infer / ablate.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <CLI11.hpp>

#include <cstdio>
#include <optional>

#include "cfrg/commands.hpp"
#include "cfrg/config.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> category;
  bool desk_scale = false;
  std::optional<std::string> data_root;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--seed", opts.seed, "override the config seed");
  cmd->add_option("--category", opts.category, "restrict to a single category");
  cmd->add_flag("--desk-scale", opts.desk_scale, "use the tiny stand-in backbones");
  cmd->add_option("--data-root", opts.data_root, "dataset root directory");
  cmd->add_option("--output-dir", opts.output_dir, "run output directory");
}

cfrg::TrainConfig resolve_config(const CommonOpts& opts) {
  cfrg::TrainConfig cfg;
  if (!opts.config_path.empty()) cfg = cfrg::TrainConfig::load_file(opts.config_path);
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.category) cfg.categories = {*opts.category};
  if (opts.desk_scale) cfg.desk_scale = true;
  if (opts.data_root) cfg.data_root = *opts.data_root;
  if (opts.output_dir) cfg.output_dir = *opts.output_dir;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coarse-to-fine anomaly detection with recovery guidance"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "tile oversized images with overlap");
  cfrg::commands::PreprocessArgs pre_args;
  std::string pre_in, pre_out;
  pre->add_option("--input", pre_in, "input image directory")->required();
  pre->add_option("--output", pre_out, "output tile directory")->required();
  pre->add_option("--max-side", pre_args.tiles.max_side, "window side in pixels");
  pre->add_option("--overlap", pre_args.tiles.overlap_fraction, "window overlap fraction");
  pre->add_option("--min-keep", pre_args.tiles.min_keep_fraction,
                  "discard tiles smaller than this fraction of the window");

  // train
  auto* tr = app.add_subcommand("train", "train per-category models");
  CommonOpts tr_opts;
  add_common(tr, tr_opts);
  std::string tr_resume;
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");

  // eval
  auto* ev = app.add_subcommand("eval", "compute metrics for trained checkpoints");
  CommonOpts ev_opts;
  add_common(ev, ev_opts);
  std::string ev_ckpt, ev_preds;
  bool ev_allow_mismatch = false;
  ev->add_option("--checkpoint", ev_ckpt, "explicit checkpoint path");
  ev->add_option("--predictions", ev_preds, "consume prediction dumps from `infer`");
  ev->add_flag("--allow-hash-mismatch", ev_allow_mismatch,
               "proceed when the checkpoint config hash differs");

  // infer
  auto* in = app.add_subcommand("infer", "write anomaly maps and image scores");
  CommonOpts in_opts;
  add_common(in, in_opts);
  std::string in_ckpt, in_input, in_output = "predictions";
  bool in_allow_mismatch = false;
  in->add_option("--checkpoint", in_ckpt, "explicit checkpoint path");
  in->add_option("--input", in_input, "directory of images (default: dataset test split)");
  in->add_option("--output", in_output, "prediction dump directory");
  in->add_flag("--allow-hash-mismatch", in_allow_mismatch,
               "proceed when the checkpoint config hash differs");

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate the six component variants");
  CommonOpts ab_opts;
  add_common(ab, ab_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (pre->parsed()) {
      pre_args.input = pre_in;
      pre_args.output = pre_out;
      cfrg::commands::preprocess(pre_args);
    } else if (tr->parsed()) {
      std::optional<std::filesystem::path> resume;
      if (!tr_resume.empty()) resume = tr_resume;
      cfrg::commands::train(resolve_config(tr_opts), resume);
    } else if (ev->parsed()) {
      cfrg::commands::EvalArgs args;
      args.cfg = resolve_config(ev_opts);
      if (!ev_ckpt.empty()) args.checkpoint = ev_ckpt;
      if (!ev_preds.empty()) args.predictions_dir = ev_preds;
      args.allow_hash_mismatch = ev_allow_mismatch;
      cfrg::commands::eval(args);
    } else if (in->parsed()) {
      cfrg::commands::InferArgs args;
      args.cfg = resolve_config(in_opts);
      if (!in_ckpt.empty()) args.checkpoint = in_ckpt;
      if (!in_input.empty()) args.input_dir = in_input;
      args.output_dir = in_output;
      args.allow_hash_mismatch = in_allow_mismatch;
      cfrg::commands::infer(args);
    } else if (ab->parsed()) {
      cfrg::commands::ablate(resolve_config(ab_opts));
    }
  } catch (const cfrg::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const cfrg::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const cfrg::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const cfrg::MetricError& e) {
    std::fprintf(stderr, "metric undefined: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
