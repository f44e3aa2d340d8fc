#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mdchain/diffusion/schedule.hpp"
#include "mdchain/model/seq2seq.hpp"
#include "mdchain/numeric/optimizer.hpp"
#include "mdchain/vq/codebook.hpp"

namespace mdchain::chain {

using model::Condition;

struct Example {
  TokenGrid x1;
  Condition cond;
};

enum class LossKind { cross_entropy, analytic_kl };

struct ScaleLoss {
  std::size_t t = 2;
  double value = 0.0;  // nats per grid
  LossKind kind = LossKind::cross_entropy;
};

// -log p(x1 | x2) for one x2 ~ q(x2 | x1).
ScaleLoss loss_scale2(const model::DenoiserModel& model, const TokenGrid& x1, Condition cond,
                      const diffusion::Schedule& schedule, Rng& rng);

// x_t ~ q(x_t | x1), one teacher path y ~ q(x_{t-1} | x_t, x1), then
// sum_i KL(q_i || p(. | y_<i, x_t)). Requires t >= 3.
ScaleLoss loss_scale_t(const model::DenoiserModel& model, const TokenGrid& x1, Condition cond, std::size_t t,
                       const diffusion::Schedule& schedule, Rng& rng);

ScaleLoss scale_loss(const model::DenoiserModel& model, const TokenGrid& x1, Condition cond, std::size_t t,
                     const diffusion::Schedule& schedule, Rng& rng);

// Noise, teacher paths and soft targets for one training minibatch.
struct ScaleBatch {
  std::size_t t = 2;
  std::vector<std::vector<int>> sources;
  std::vector<std::vector<int>> targets;
  std::vector<Condition> conds;
  num::Tensor posteriors;  // (batch*N) x K, only for t >= 3
  double posterior_entropy = 0.0;
};

ScaleBatch make_scale_batch(std::span<const Example> examples, std::size_t t, const diffusion::Schedule& schedule,
                            std::size_t vocab, Rng& rng);

// Mean scale loss over the batch, recorded for backpropagation.
ad::Var scale_objective(model::Seq2SeqDenoiser& model, ad::Graph& graph, const ScaleBatch& batch);

struct TrainConfig {
  std::size_t batch = 32;
  std::size_t epochs = 10;
  std::size_t steps = 0;  // when nonzero, stop after this many updates
  num::AdamConfig adam;
  std::uint64_t seed = 0;
};

// Seeds derived from (seed, t) only, so scales never share random streams.
std::uint64_t scale_init_seed(std::uint64_t seed, std::size_t t);
std::uint64_t scale_data_seed(std::uint64_t seed, std::size_t t);

model::Seq2SeqDenoiser init_scale_model(const model::DenoiserConfig& config, std::size_t t, std::uint64_t seed);

using EpochCallback = std::function<void(std::size_t t, std::size_t epoch, double loss)>;

// Minibatch Adam on the scale-t loss, fresh noise for every example each
// epoch. Returns the mean loss (nats per grid) of each epoch. A non-finite
// loss or gradient raises TrainingError; the rejected update is never
// applied, so `model` keeps the last good parameters.
std::vector<double> train_scale(model::Seq2SeqDenoiser& model, std::size_t t, std::span<const Example> dataset,
                                const diffusion::Schedule& schedule, const TrainConfig& config,
                                const EpochCallback& on_epoch = {});

struct ChainModel {
  diffusion::Schedule schedule;
  std::optional<vq::Codebook> codebook;
  std::vector<std::shared_ptr<const model::DenoiserModel>> models;  // models[t - 2] for t = 2..T
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t classes = 0;

  std::size_t vocab() const;
  std::size_t length() const { return rows * cols; }
  const model::DenoiserModel& at(std::size_t t) const;
  // Throws ContractError when models are missing or disagree on K, N or classes.
  void validate() const;
};

struct SampleCounters {
  std::size_t model_passes = 0;
  std::size_t decodes = 0;
};

// x_T uniform, then x_{t-1} ~ p(. | x_t) for t = T..2.
TokenGrid sample_tokens(const ChainModel& chain, Condition cond, Rng& rng, double temperature = 1.0,
                        SampleCounters* counters = nullptr);

struct ChainSample {
  TokenGrid x1;
  vq::Image image;
};

ChainSample sample_chain(const ChainModel& chain, Condition cond, Rng& rng, double temperature = 1.0,
                         SampleCounters* counters = nullptr);

struct ElboReport {
  std::vector<double> scale_nats;  // mean L_t for t = 2..T
  double prior_nats = 0.0;
  double total_nats = 0.0;
  double bits_per_token = 0.0;
  std::optional<double> reconstruction_mse;
  std::vector<double> per_example_nats;
};

// Sum of per-scale losses plus the prior KL, averaged over the dataset with
// `draws` noise samples per example.
ElboReport elbo_report(const ChainModel& chain, std::span<const Example> dataset, Rng& rng, std::size_t draws = 1,
                       std::span<const vq::Image> images = {});

// Text manifest of key = value lines. Paths are stored relative to the
// manifest's directory.
struct Manifest {
  diffusion::Schedule schedule{2, {1.0}};
  std::filesystem::path codebook;
  std::vector<std::filesystem::path> checkpoints;  // t = 2..T
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t classes = 0;
};

void save_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);
ChainModel load_chain(const std::filesystem::path& manifest_path);

}  // namespace mdchain::chain
