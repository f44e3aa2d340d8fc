#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mdchain/chain/chain.hpp"

namespace mdchain::eval {

// Half the L1 distance; DimensionError when supports differ in size.
double tv_distance(std::span<const double> p, std::span<const double> q);

// Outcomes are numbered with the first token as the most significant base-K digit.
std::size_t outcome_index(std::span<const int> tokens, std::size_t vocab);
TokenGrid outcome_grid(std::size_t index, std::size_t rows, std::size_t cols, std::size_t vocab);

constexpr double enumeration_budget = 1e7;

// p(target | source) for every target, in outcome order.
std::vector<double> transition_row(const model::DenoiserModel& model, std::span<const int> source,
                                   model::Condition cond, std::size_t rows, std::size_t cols);

// Exact distribution of x1 under the reverse chain from uniform x_T. Throws
// ConfigError when (T-1) K^N K^N reaches the enumeration budget.
std::vector<double> enumerate_chain_marginal(const chain::ChainModel& chain, model::Condition cond = std::nullopt);

// True reverse transition q(x_{t-1} | x_t) of the forward process started
// from `data`, a distribution over all K^N grids.
class ExactReverseModel final : public model::DenoiserModel {
 public:
  ExactReverseModel(std::span<const double> data, const diffusion::Schedule& schedule, std::size_t t,
                    std::size_t rows, std::size_t cols, std::size_t vocab);

  std::size_t vocab() const override { return vocab_; }
  std::size_t length() const override { return rows_ * cols_; }
  std::size_t classes() const override { return 0; }

  // Uniform when the prefix has zero probability.
  std::vector<double> conditional(std::span<const int> source, std::span<const int> prefix) const;

  num::Tensor log_probs(std::span<const int> source, model::Condition cond,
                        std::span<const int> target) const override;
  std::unique_ptr<model::DecodeSession> start(std::span<const int> source, model::Condition cond) const override;

 private:
  std::size_t rows_, cols_, vocab_, outcomes_;
  double beta_;
  std::vector<double> prev_;  // distribution of x_{t-1}
};

// Chain of exact reverse models for t = 2..T.
chain::ChainModel exact_chain(std::span<const double> data, const diffusion::Schedule& schedule, std::size_t rows,
                              std::size_t cols, std::size_t vocab);

double bits_per_token(const chain::ChainModel& chain, std::span<const chain::Example> dataset, Rng& rng,
                      std::size_t draws = 1);

struct SpeedConfig {
  std::size_t scales = 1;
  std::size_t encoder_layers = 0;
  std::size_t decoder_layers = 1;
  std::size_t data_dim = 1;
  double layer_cost = 1.0;
};

void validate(const SpeedConfig& config);

// scales * C * (n_enc + N n_dec)
double predicted_time(const SpeedConfig& config);

// Decoder-only time with `baseline_layers` layers over the encoder-decoder
// time; baseline_layers = 0 means n_enc + n_dec.
double predicted_speedup(const SpeedConfig& config, std::size_t baseline_layers = 0);

struct BenchResult {
  double seconds_per_sample = 0.0;  // median over trials
  double tokens_per_second = 0.0;
  std::vector<double> trials;
};

constexpr std::size_t bench_warmups = 3;

// Times full left-to-right samples from random sources.
BenchResult bench_decode(const model::DenoiserModel& model, std::size_t trials, Rng& rng);
BenchResult bench_decode(const chain::ChainModel& chain, std::size_t trials, Rng& rng);

struct SpeedComparison {
  model::DenoiserConfig fast;
  model::DenoiserConfig slow;
  BenchResult fast_result;
  BenchResult slow_result;
  double measured = 0.0;  // slow / fast
  double predicted = 0.0;
};

// Benchmarks two configurations (fresh weights from `seed`) next to the
// predicted time ratio, which is predicted_speedup when `slow` is
// decoder-only. Trials are interleaved so drift affects both sides alike.
SpeedComparison compare_decode_speed(const model::DenoiserConfig& fast, const model::DenoiserConfig& slow,
                                     std::size_t trials, std::uint64_t seed);

std::uint64_t fnv1a(std::string_view text);
std::string config_hash(const std::map<std::string, std::string>& provenance);

struct MetricRow {
  std::string metric;
  std::string config_hash;
  double value = 0.0;
  std::uint64_t seed = 0;
};

// Provenance lines as '# key=value' comments, then metric,config_hash,value,seed.
void write_csv(std::ostream& out, std::span<const MetricRow> rows,
               const std::map<std::string, std::string>& provenance = {});

}  // namespace mdchain::eval
