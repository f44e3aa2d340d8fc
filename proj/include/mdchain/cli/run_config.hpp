#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mdchain/chain/chain.hpp"
#include "mdchain/data/synthetic.hpp"

namespace mdchain::cli {

struct CodebookSpec {
  std::size_t k = 8;
  std::size_t patch = 4;
  std::size_t iterations = 50;
  bool shrink = true;
  std::uint64_t seed = 0;
};

struct SampleSpec {
  std::size_t count = 16;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

struct EditSpec {
  std::size_t rounds = 8;
  std::size_t round_scale = 2;
  double temperature = 1.0;
  bool frames = false;
  std::uint64_t seed = 0;
};

struct EvalSpec {
  std::size_t count = 256;  // held-out images, generated past the training corpus
  std::size_t draws = 1;
  std::uint64_t seed = 0;
};

struct BenchSpec {
  std::size_t trials = 11;
  std::size_t total_layers = 8;
  std::vector<std::size_t> decoder_layers{2, 4, 6, 8};
  std::size_t length = 64;
  std::uint64_t seed = 0;
};

struct RunConfig {
  data::SyntheticSpec data;
  CodebookSpec codebook;
  std::size_t T = 3;
  std::vector<double> betas{0.3, 0.6};
  model::DenoiserConfig model;  // vocab, length and classes are filled in by train
  chain::TrainConfig train;
  std::size_t threads = 1;
  SampleSpec sample;
  EditSpec edit;
  EvalSpec eval;
  BenchSpec bench;
  std::filesystem::path out = "out";
};

// INI text with [data], [codebook], [schedule], [model], [train], [sample],
// [edit], [eval], [bench] and [output] sections. Unknown sections or keys and
// malformed values raise ConfigError.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);

// Schedule and layer checks that do not depend on data.
void validate(const RunConfig& config);

}  // namespace mdchain::cli
