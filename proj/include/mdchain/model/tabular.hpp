#pragma once

#include <map>
#include <span>
#include <vector>

#include "mdchain/model/denoiser.hpp"
#include "mdchain/token_grid.hpp"

namespace mdchain::model {

struct TrainingPair {
  TokenGrid source;  // x_t
  TokenGrid target;  // x_{t-1}
  Condition cond;
};

enum class SourceContext { aligned, full };

struct TabularOptions {
  std::size_t window = 2;  // previous target tokens in the context
  SourceContext context = SourceContext::aligned;
  double smoothing = 1.0;
};

// Count tables per position keyed by (condition, source context, prefix
// window). Probabilities are (count + s) / (total + s K).
class TabularAR final : public DenoiserModel {
 public:
  TabularAR(std::size_t vocab, std::size_t length, std::size_t classes, TabularOptions options = {});

  void add(std::span<const int> source, Condition cond, std::span<const int> target);

  std::size_t vocab() const override { return vocab_; }
  std::size_t length() const override { return length_; }
  std::size_t classes() const override { return classes_; }
  const TabularOptions& options() const { return options_; }

  std::vector<double> conditional(std::size_t i, std::span<const int> source, Condition cond,
                                  std::span<const int> prefix) const;

  num::Tensor log_probs(std::span<const int> source, Condition cond, std::span<const int> target) const override;
  std::unique_ptr<DecodeSession> start(std::span<const int> source, Condition cond) const override;

 private:
  std::vector<int> key(std::size_t i, std::span<const int> source, Condition cond, std::span<const int> prefix) const;

  std::size_t vocab_, length_, classes_;
  TabularOptions options_;
  std::vector<std::map<std::vector<int>, std::vector<double>>> tables_;
};

// Exact counting over the pairs; deterministic, so no seed is taken.
TabularAR tabular_fit(std::span<const TrainingPair> pairs, std::size_t vocab, std::size_t classes,
                      TabularOptions options = {});

}  // namespace mdchain::model
