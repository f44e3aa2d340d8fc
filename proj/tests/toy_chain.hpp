#pragma once

// Enumerable toy chain: K=3, N=4 (2x2 grid). Data put mass only on
// sequences (a, b, a, b) with an uneven weight table, so the reverse
// conditionals carry real structure.

#include <algorithm>
#include <array>
#include <memory>
#include <cmath>
#include <vector>

#include "mdchain/model/denoiser.hpp"
#include "mdchain/rng.hpp"
#include "mdchain/token_grid.hpp"
#include "oracles.hpp"

namespace toy {

constexpr std::size_t K = 3;
constexpr std::size_t N = 4;
constexpr std::size_t M = 81;  // K^N

inline mdchain::TokenGrid grid(std::size_t index) {
  mdchain::TokenGrid g(2, 2);
  for (std::size_t i = N; i-- > 0;) {
    g[i] = static_cast<int>(index % K);
    index /= K;
  }
  return g;
}

inline std::size_t index(std::span<const int> tokens) {
  std::size_t idx = 0;
  for (int v : tokens) idx = idx * K + static_cast<std::size_t>(v);
  return idx;
}

inline std::vector<double> data_distribution() {
  const double w[3][3] = {{0.3, 0.1, 0.05}, {0.05, 0.2, 0.05}, {0.1, 0.05, 0.1}};
  std::vector<double> p(M, 0.0);
  double z = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      const std::array<int, 4> seq{a, b, a, b};
      p[index(seq)] = w[a][b];
      z += w[a][b];
    }
  for (double& v : p) v /= z;
  return p;
}

// F[prev][next] = prod_i q(next_i | prev_i) for one step of rate beta.
inline oracle::Matrix joint_kernel(double beta) {
  const auto k = oracle::step_kernel(K, beta);
  oracle::Matrix f(M, std::vector<double>(M, 1.0));
  for (std::size_t a = 0; a < M; ++a) {
    const auto ga = grid(a);
    for (std::size_t b = 0; b < M; ++b) {
      const auto gb = grid(b);
      for (std::size_t i = 0; i < N; ++i) f[a][b] *= k[ga[i]][gb[i]];
    }
  }
  return f;
}

inline std::vector<double> push(const std::vector<double>& p, const oracle::Matrix& f) {
  std::vector<double> out(M, 0.0);
  for (std::size_t a = 0; a < M; ++a)
    for (std::size_t b = 0; b < M; ++b) out[b] += p[a] * f[a][b];
  return out;
}

// Exact reverse transition R[next][prev] = p(prev) F[prev][next] / p(next).
inline oracle::Matrix exact_reverse(const std::vector<double>& p_prev, const oracle::Matrix& f) {
  const auto p_next = push(p_prev, f);
  oracle::Matrix r(M, std::vector<double>(M, 0.0));
  for (std::size_t b = 0; b < M; ++b)
    for (std::size_t a = 0; a < M; ++a) r[b][a] = p_prev[a] * f[a][b] / p_next[b];
  return r;
}

// Entropy of the data distribution in nats.
inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

inline mdchain::TokenGrid sample_data(const std::vector<double>& p, mdchain::Rng& rng) {
  return grid(rng.categorical(p));
}

// Reverse model read off a full joint table R[source][target] by summing
// over completions of the prefix.
class JointReverse final : public mdchain::model::DenoiserModel {
 public:
  explicit JointReverse(oracle::Matrix r) : r_(std::move(r)) {}

  std::size_t vocab() const override { return K; }
  std::size_t length() const override { return N; }
  std::size_t classes() const override { return 0; }

  std::vector<double> conditional(std::span<const int> source, std::span<const int> prefix) const {
    const auto& row = r_[index(source)];
    std::vector<double> p(K, 0.0);
    for (std::size_t a = 0; a < M; ++a) {
      const auto g = grid(a);
      if (std::equal(prefix.begin(), prefix.end(), g.tokens.begin())) p[g[prefix.size()]] += row[a];
    }
    double z = 0.0;
    for (double v : p) z += v;
    for (double& v : p) v /= z;
    return p;
  }

  mdchain::num::Tensor log_probs(std::span<const int> source, mdchain::model::Condition,
                                 std::span<const int> target) const override {
    mdchain::num::Tensor out({N, K});
    for (std::size_t i = 0; i < N; ++i) {
      const auto p = conditional(source, target.first(i));
      for (std::size_t k = 0; k < K; ++k) out(i, k) = std::log(p[k]);
    }
    return out;
  }

  std::unique_ptr<mdchain::model::DecodeSession> start(std::span<const int> source,
                                                       mdchain::model::Condition) const override {
    struct Session final : mdchain::model::DecodeSession {
      const JointReverse* model;
      std::vector<int> source, prefix;
      std::vector<double> next_log_probs() override {
        auto p = model->conditional(source, prefix);
        for (double& v : p) v = std::log(v);
        return p;
      }
      void push(int token) override { prefix.push_back(token); }
      std::size_t position() const override { return prefix.size(); }
    };
    auto s = std::make_unique<Session>();
    s->model = this;
    s->source.assign(source.begin(), source.end());
    return s;
  }

 private:
  oracle::Matrix r_;
};

}  // namespace toy
