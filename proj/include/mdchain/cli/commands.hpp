#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "mdchain/cli/run_config.hpp"

namespace mdchain::cli {

// Layout under the output directory.
struct Paths {
  std::filesystem::path root;
  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path model() const { return root / "model"; }
  std::filesystem::path manifest() const { return model() / "chain.txt"; }
  std::filesystem::path samples() const { return root / "samples"; }
  std::filesystem::path edits() const { return root / "edit"; }
};

// Writes data/img_NNNNN.{pgm,ppm} and data/labels.txt.
void cmd_gen_data(const RunConfig& config, std::ostream& log);

// Fits and shrinks the codebook, trains every scale, writes model/.
void cmd_train(const RunConfig& config, std::ostream& log);

struct SampleArgs {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::size_t> count;
  std::optional<int> label;
};
void cmd_sample(const RunConfig& config, const SampleArgs& args, std::ostream& log);

struct EditArgs {
  std::optional<std::filesystem::path> manifest;
  std::filesystem::path image;
  std::filesystem::path mask;
  std::optional<std::size_t> rounds;
  std::optional<int> label;
  bool frames = false;
};
void cmd_edit(const RunConfig& config, const EditArgs& args, std::ostream& log);

struct EvalArgs {
  std::optional<std::filesystem::path> manifest;
  std::optional<std::filesystem::path> data;  // directory with labels.txt; default is a held-out corpus
  bool uniform = false;                       // replace every scale model by the uniform model
};
void cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& log);

void cmd_bench(const RunConfig& config, std::ostream& log);

// 2 usage or config, 3 numeric or training, 4 I/O, 1 anything else.
int exit_code(const std::exception& e);

}  // namespace mdchain::cli
