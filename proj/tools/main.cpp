#include <CLI11.hpp>

#include "pointsentinel/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"pointsentinel: single-point detection experiments on synthetic scenes"};
  app.require_subcommand(1);

  ps::cli::GlobalOpts opts;
  std::uint64_t seed_value = 0;
  std::string output_dir_value;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the configured seed");
  app.add_flag("--overwrite", opts.overwrite, "replace existing outputs");
  auto* outdir_opt =
      app.add_option("--output-dir", output_dir_value, "override the configured output directory");
  app.add_flag("--quiet", opts.quiet, "suppress progress output");

  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("generate", "render a synthetic dataset to disk");
  gen->add_option("config", gen_config, "scene config json")->required();
  gen->add_option("out_dir", gen_out, "output directory");

  std::string train_spec;
  bool resume = false;
  auto* tr = app.add_subcommand("train", "train every head x seed of an experiment spec");
  tr->add_option("spec", train_spec, "experiment spec json")->required();
  tr->add_flag("--resume", resume, "continue from saved checkpoints");

  std::string eval_spec;
  auto* ev = app.add_subcommand("evaluate", "evaluate trained checkpoints and emit reports");
  ev->add_option("spec", eval_spec, "experiment spec json")->required();

  std::string cmp_a, cmp_b;
  auto* cmp = app.add_subcommand("compare", "compare two evaluate outputs");
  cmp->add_option("run_a", cmp_a, "first run directory")->required();
  cmp->add_option("run_b", cmp_b, "second run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : ps::cli::kExitValidation;
  }

  if (seed_opt->count() > 0) opts.seed = seed_value;
  if (outdir_opt->count() > 0) opts.output_dir = output_dir_value;

  return ps::cli::run_command(opts, [&]() {
    if (gen->parsed()) {
      std::string out = gen_out;
      if (out.empty() && opts.output_dir) out = *opts.output_dir;
      PS_CHECK(!out.empty(), "generate: pass an output directory (positional or --output-dir)");
      ps::cli::cmd_generate(gen_config, out, opts);
    } else if (tr->parsed()) {
      ps::cli::cmd_train(train_spec, opts, resume);
    } else if (ev->parsed()) {
      ps::cli::cmd_evaluate(eval_spec, opts);
    } else if (cmp->parsed()) {
      ps::cli::cmd_compare(cmp_a, cmp_b, opts);
    }
  });
}
