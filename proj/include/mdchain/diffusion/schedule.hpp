#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mdchain/rng.hpp"
#include "mdchain/token_grid.hpp"

namespace mdchain::diffusion {

// Replacement rates beta_t for t = 2..T and cumulative retention
// alpha_bar_t = prod_{l=2..t} (1 - beta_l), alpha_bar_1 = 1.
class Schedule {
 public:
  Schedule(std::size_t T, std::vector<double> betas);

  std::size_t T() const { return T_; }
  double beta(std::size_t t) const;
  double alpha_bar(std::size_t t) const;
  const std::vector<double>& betas() const { return betas_; }

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  std::size_t T_;
  std::vector<double> betas_;       // betas_[t - 2]
  std::vector<double> alpha_bars_;  // alpha_bars_[t - 1]
};

// Throws ConfigError unless T >= 2, betas.size() == T - 1 and every beta in [0, 1].
Schedule make_schedule(std::size_t T, std::vector<double> betas);

// One categorical of length K per position, stored row-major.
struct Categoricals {
  std::size_t positions = 0;
  std::size_t K = 0;
  std::vector<double> probs;

  Categoricals(std::size_t n, std::size_t k) : positions(n), K(k), probs(n * k, 0.0) {}
  std::span<double> row(std::size_t i) { return {probs.data() + i * K, K}; }
  std::span<const double> row(std::size_t i) const { return {probs.data() + i * K, K}; }
};

// Per-position rows. All write K entries into `out`.
void step_row(int prev, double beta, std::span<double> out);
void marginal_row(int x1, double alpha_bar, std::span<double> out);
void posterior_row(int xt, int x1, std::size_t t, const Schedule& schedule, std::span<double> out);

Categoricals forward_step_probs(const TokenGrid& x_prev, std::size_t t, const Schedule& schedule, std::size_t K);
Categoricals marginal_probs(const TokenGrid& x1, std::size_t t, const Schedule& schedule, std::size_t K);
// Defined for t in [3, T]; at t = 2 the posterior is a delta at x1.
Categoricals posterior_probs(const TokenGrid& xt, const TokenGrid& x1, std::size_t t, const Schedule& schedule,
                             std::size_t K);

// Keeps the token with probability 1 - beta, otherwise draws uniformly from K.
// A zero rate consumes no randomness.
int step_token(int prev, double beta, std::size_t K, Rng& rng);

TokenGrid sample_forward(const TokenGrid& x_prev, std::size_t t, const Schedule& schedule, std::size_t K, Rng& rng);
TokenGrid sample_marginal(const TokenGrid& x1, std::size_t t, const Schedule& schedule, std::size_t K, Rng& rng);
TokenGrid sample_posterior(const TokenGrid& xt, const TokenGrid& x1, std::size_t t, const Schedule& schedule,
                           std::size_t K, Rng& rng);
TokenGrid sample_rows(const Categoricals& c, std::size_t rows, std::size_t cols, Rng& rng);

// KL(p || q) in nats with 0 log 0 = 0. NumericError when q = 0 where p > 0.
double categorical_kl(std::span<const double> p, std::span<const double> q);

// Sum over positions of KL(marginal at T || uniform).
double prior_kl(const TokenGrid& x1, const Schedule& schedule, std::size_t K);

}  // namespace mdchain::diffusion
