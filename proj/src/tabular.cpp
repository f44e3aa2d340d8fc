#include "mdchain/model/tabular.hpp"

#include <cmath>

#include "mdchain/error.hpp"

namespace mdchain::model {

namespace {

class TabularSession final : public DecodeSession {
 public:
  TabularSession(const TabularAR& model, std::span<const int> source, Condition cond)
      : model_(model), source_(source.begin(), source.end()), cond_(cond) {}

  std::vector<double> next_log_probs() override {
    auto p = model_.conditional(prefix_.size(), source_, cond_, prefix_);
    for (double& v : p) v = std::log(v);
    return p;
  }
  void push(int token) override { prefix_.push_back(token); }
  std::size_t position() const override { return prefix_.size(); }

 private:
  const TabularAR& model_;
  std::vector<int> source_;
  Condition cond_;
  std::vector<int> prefix_;
};

}  // namespace

TabularAR::TabularAR(std::size_t vocab, std::size_t length, std::size_t classes, TabularOptions options)
    : vocab_(vocab), length_(length), classes_(classes), options_(options), tables_(length) {
  if (vocab_ == 0 || length_ == 0) throw ConfigError("tabular model needs a vocabulary and a length");
  if (!(options_.smoothing > 0.0)) throw ConfigError("tabular smoothing must be positive");
}

std::vector<int> TabularAR::key(std::size_t i, std::span<const int> source, Condition cond,
                                std::span<const int> prefix) const {
  std::vector<int> k;
  k.push_back(cond.value_or(-1));
  if (options_.context == SourceContext::aligned) {
    k.push_back(source[i]);
  } else {
    k.insert(k.end(), source.begin(), source.end());
  }
  const std::size_t from = i > options_.window ? i - options_.window : 0;
  k.insert(k.end(), prefix.begin() + static_cast<std::ptrdiff_t>(from), prefix.begin() + static_cast<std::ptrdiff_t>(i));
  return k;
}

void TabularAR::add(std::span<const int> source, Condition cond, std::span<const int> target) {
  check_source(source, cond);
  check_target(target);
  for (std::size_t i = 0; i < length_; ++i) {
    auto [it, inserted] = tables_[i].try_emplace(key(i, source, cond, target), vocab_, 0.0);
    it->second[target[i]] += 1.0;
  }
}

std::vector<double> TabularAR::conditional(std::size_t i, std::span<const int> source, Condition cond,
                                           std::span<const int> prefix) const {
  if (prefix.size() < i) throw ContractError("prefix shorter than position");
  std::vector<double> p(vocab_, 1.0 / static_cast<double>(vocab_));
  const auto it = tables_[i].find(key(i, source, cond, prefix));
  if (it == tables_[i].end()) return p;
  double total = 0.0;
  for (double c : it->second) total += c;
  const double denom = total + options_.smoothing * static_cast<double>(vocab_);
  for (std::size_t k = 0; k < vocab_; ++k) p[k] = (it->second[k] + options_.smoothing) / denom;
  return p;
}

num::Tensor TabularAR::log_probs(std::span<const int> source, Condition cond, std::span<const int> target) const {
  check_source(source, cond);
  check_target(target);
  num::Tensor out({length_, vocab_});
  for (std::size_t i = 0; i < length_; ++i) {
    const auto p = conditional(i, source, cond, target);
    for (std::size_t k = 0; k < vocab_; ++k) out(i, k) = std::log(p[k]);
  }
  return out;
}

std::unique_ptr<DecodeSession> TabularAR::start(std::span<const int> source, Condition cond) const {
  check_source(source, cond);
  return std::make_unique<TabularSession>(*this, source, cond);
}

TabularAR tabular_fit(std::span<const TrainingPair> pairs, std::size_t vocab, std::size_t classes,
                      TabularOptions options) {
  if (pairs.empty()) throw ConfigError("tabular_fit needs at least one pair");
  const std::size_t rows = pairs[0].source.rows, cols = pairs[0].source.cols;
  TabularAR model(vocab, rows * cols, classes, options);
  for (const auto& p : pairs) {
    if (p.source.rows != rows || p.source.cols != cols || p.target.rows != rows || p.target.cols != cols) {
      throw DimensionError("tabular_fit: pairs differ in grid shape");
    }
    model.add(p.source.sequence(), p.cond, p.target.sequence());
  }
  return model;
}

}  // namespace mdchain::model
