#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mdchain/numeric/tensor.hpp"
#include "mdchain/rng.hpp"

namespace mdchain::model {

// Class label, or nothing for unconditional models.
using Condition = std::optional<int>;

// Left-to-right decoding state for one source sequence.
class DecodeSession {
 public:
  virtual ~DecodeSession() = default;
  // log p(x_i | pushed prefix, source, cond) for the next position i.
  virtual std::vector<double> next_log_probs() = 0;
  virtual void push(int token) = 0;
  virtual std::size_t position() const = 0;
};

// Reverse transition p(x_{t-1} | x_t, c) factorized autoregressively.
class DenoiserModel {
 public:
  virtual ~DenoiserModel() = default;

  virtual std::size_t vocab() const = 0;
  virtual std::size_t length() const = 0;
  virtual std::size_t classes() const = 0;

  // Teacher-forced N x K log-probabilities: row i conditions on target[0..i-1].
  virtual num::Tensor log_probs(std::span<const int> source, Condition cond, std::span<const int> target) const = 0;
  virtual std::unique_ptr<DecodeSession> start(std::span<const int> source, Condition cond) const = 0;

  // Throws DimensionError, IndexError or UsageError on malformed inputs.
  void check_source(std::span<const int> source, Condition cond) const;
  void check_target(std::span<const int> target) const;
};

// log p(x_i = k | ...) = -log K everywhere.
class UniformModel final : public DenoiserModel {
 public:
  UniformModel(std::size_t vocab, std::size_t length, std::size_t classes = 0)
      : vocab_(vocab), length_(length), classes_(classes) {}

  std::size_t vocab() const override { return vocab_; }
  std::size_t length() const override { return length_; }
  std::size_t classes() const override { return classes_; }
  num::Tensor log_probs(std::span<const int> source, Condition cond, std::span<const int> target) const override;
  std::unique_ptr<DecodeSession> start(std::span<const int> source, Condition cond) const override;

 private:
  std::size_t vocab_, length_, classes_;
};

// Draws x_i left to right. Temperature 0 takes the argmax (lowest index on
// ties). When `mask` is non-empty, positions with mask[i] == 0 are forced to
// keep[i] and consume no randomness; the forced token still enters the prefix.
std::vector<int> sample_sequence(const DenoiserModel& model, std::span<const int> source, Condition cond, Rng& rng,
                                 double temperature = 1.0, std::span<const int> keep = {},
                                 std::span<const std::uint8_t> mask = {});

// Draws from softmax(log_probs / temperature); temperature 0 is argmax.
int sample_token(std::span<const double> log_probs, double temperature, Rng& rng);

// -sum_i log p(target_i | target_<i, source, cond), in nats.
double nll(const DenoiserModel& model, std::span<const int> source, Condition cond, std::span<const int> target);

std::vector<double> log_softmax(std::span<const double> logits);

}  // namespace mdchain::model
