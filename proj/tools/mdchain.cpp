#include <CLI11.hpp>
#include <iostream>

#include "mdchain/cli/commands.hpp"

using namespace mdchain;

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical multinomial diffusion over VQ token grids"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "INI run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for the selected command");
  app.add_option("--out", out_dir, "Output directory");

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic corpus");
  auto* train = app.add_subcommand("train", "Fit the codebook and train every scale");

  cli::SampleArgs sample_args;
  std::string sample_manifest;
  auto* sample = app.add_subcommand("sample", "Draw images from a trained chain");
  sample->add_option("--manifest", sample_manifest, "Chain manifest");
  sample->add_option("--count", sample_args.count, "Number of samples");
  sample->add_option("--class", sample_args.label, "Class label for conditional chains");

  cli::EditArgs edit_args;
  std::string edit_manifest;
  auto* edit = app.add_subcommand("edit", "Regenerate the masked part of an image");
  edit->add_option("--manifest", edit_manifest, "Chain manifest");
  edit->add_option("--image", edit_args.image, "Input PGM or PPM")->required();
  edit->add_option("--mask", edit_args.mask, "PGM mask, 255 marks pixels to regenerate")->required();
  edit->add_option("--rounds", edit_args.rounds, "Forward-backward rounds");
  edit->add_option("--class", edit_args.label, "Class label for conditional chains");
  edit->add_flag("--frames", edit_args.frames, "Write every trajectory state");

  cli::EvalArgs eval_args;
  std::string eval_manifest, eval_data;
  auto* eval = app.add_subcommand("eval", "ELBO terms, bits per token and reconstruction error");
  eval->add_option("--manifest", eval_manifest, "Chain manifest");
  eval->add_option("--data", eval_data, "Directory with labels.txt (default: held-out synthetic images)");
  eval->add_flag("--uniform", eval_args.uniform, "Evaluate uniform models in place of the trained ones");

  auto* bench = app.add_subcommand("bench", "Decode-time benchmark over encoder/decoder splits");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    cli::RunConfig config = config_path.empty() ? cli::RunConfig{} : cli::load_config(config_path);
    if (!out_dir.empty()) config.out = out_dir;
    if (!sample_manifest.empty()) sample_args.manifest = sample_manifest;
    if (!edit_manifest.empty()) edit_args.manifest = edit_manifest;
    if (!eval_manifest.empty()) eval_args.manifest = eval_manifest;
    if (!eval_data.empty()) eval_args.data = eval_data;

    if (gen->parsed()) {
      if (seed) config.data.seed = *seed;
      cli::cmd_gen_data(config, std::cout);
    } else if (train->parsed()) {
      if (seed) config.train.seed = config.codebook.seed = *seed;
      cli::cmd_train(config, std::cout);
    } else if (sample->parsed()) {
      if (seed) config.sample.seed = *seed;
      cli::cmd_sample(config, sample_args, std::cout);
    } else if (edit->parsed()) {
      if (seed) config.edit.seed = *seed;
      cli::cmd_edit(config, edit_args, std::cout);
    } else if (eval->parsed()) {
      if (seed) config.eval.seed = *seed;
      cli::cmd_eval(config, eval_args, std::cout);
    } else if (bench->parsed()) {
      if (seed) config.bench.seed = *seed;
      cli::cmd_bench(config, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "mdchain: " << e.what() << "\n";
    return cli::exit_code(e);
  }
  return 0;
}
