#include "mdchain/model/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mdchain/error.hpp"

namespace mdchain::model {

void DenoiserModel::check_source(std::span<const int> source, Condition cond) const {
  if (source.size() != length()) {
    throw DimensionError("source has " + std::to_string(source.size()) + " tokens, model expects " +
                         std::to_string(length()));
  }
  for (int v : source)
    if (v < 0 || static_cast<std::size_t>(v) >= vocab()) throw IndexError("source token out of vocabulary");
  if (cond && classes() == 0) throw UsageError("condition given to an unconditional model");
  if (!cond && classes() > 0) throw UsageError("conditional model needs a class label");
  if (cond && (*cond < 0 || static_cast<std::size_t>(*cond) >= classes())) throw IndexError("class label out of range");
}

void DenoiserModel::check_target(std::span<const int> target) const {
  if (target.size() != length()) throw DimensionError("target length does not match model");
  for (int v : target)
    if (v < 0 || static_cast<std::size_t>(v) >= vocab()) throw IndexError("target token out of vocabulary");
}

namespace {

class UniformSession final : public DecodeSession {
 public:
  explicit UniformSession(std::size_t vocab) : vocab_(vocab) {}
  std::vector<double> next_log_probs() override {
    return std::vector<double>(vocab_, -std::log(static_cast<double>(vocab_)));
  }
  void push(int) override { ++pos_; }
  std::size_t position() const override { return pos_; }

 private:
  std::size_t vocab_;
  std::size_t pos_ = 0;
};

}  // namespace

num::Tensor UniformModel::log_probs(std::span<const int> source, Condition cond, std::span<const int> target) const {
  check_source(source, cond);
  check_target(target);
  return num::Tensor({length_, vocab_}, -std::log(static_cast<double>(vocab_)));
}

std::unique_ptr<DecodeSession> UniformModel::start(std::span<const int> source, Condition cond) const {
  check_source(source, cond);
  return std::make_unique<UniformSession>(vocab_);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - mx);
  const double lse = mx + std::log(total);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

int sample_token(std::span<const double> log_probs, double temperature, Rng& rng) {
  if (!(temperature >= 0.0)) throw ContractError("temperature must be nonnegative");
  if (temperature == 0.0) {
    return static_cast<int>(std::max_element(log_probs.begin(), log_probs.end()) - log_probs.begin());
  }
  const double mx = *std::max_element(log_probs.begin(), log_probs.end());
  std::vector<double> w(log_probs.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp((log_probs[k] - mx) / temperature);
  return static_cast<int>(rng.categorical(w));
}

std::vector<int> sample_sequence(const DenoiserModel& model, std::span<const int> source, Condition cond, Rng& rng,
                                 double temperature, std::span<const int> keep, std::span<const std::uint8_t> mask) {
  const std::size_t n = model.length();
  if (!mask.empty()) {
    if (mask.size() != n || keep.size() != n) throw DimensionError("mask and kept tokens must cover the sequence");
    model.check_target(keep);
  }
  auto session = model.start(source, cond);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask.empty() && mask[i] == 0) {
      out[i] = keep[i];
    } else {
      out[i] = sample_token(session->next_log_probs(), temperature, rng);
    }
    session->push(out[i]);
  }
  return out;
}

double nll(const DenoiserModel& model, std::span<const int> source, Condition cond, std::span<const int> target) {
  const num::Tensor lp = model.log_probs(source, cond, target);
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) total -= lp(i, target[i]);
  return total;
}

}  // namespace mdchain::model
