#include "mdchain/diffusion/schedule.hpp"

#include <cmath>
#include <string>

#include "mdchain/error.hpp"

namespace mdchain::diffusion {

namespace {

void check_step(std::size_t t, std::size_t lo, const Schedule& s) {
  if (t < lo || t > s.T())
    throw ContractError("diffusion step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                        std::to_string(s.T()) + "]");
}

void check_pair(const TokenGrid& a, const TokenGrid& b) {
  if (a.rows != b.rows || a.cols != b.cols) throw DimensionError("token grids differ in shape");
}

}  // namespace

Schedule::Schedule(std::size_t T, std::vector<double> betas) : T_(T), betas_(std::move(betas)) {
  if (T_ < 2) throw ConfigError("chain length T must be at least 2");
  if (betas_.size() != T_ - 1)
    throw ConfigError("expected " + std::to_string(T_ - 1) + " betas, got " + std::to_string(betas_.size()));
  alpha_bars_.assign(T_, 1.0);
  for (std::size_t t = 2; t <= T_; ++t) {
    const double b = betas_[t - 2];
    if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("beta_" + std::to_string(t) + " outside [0, 1]");
    alpha_bars_[t - 1] = alpha_bars_[t - 2] * (1.0 - b);
  }
}

double Schedule::beta(std::size_t t) const {
  check_step(t, 2, *this);
  return betas_[t - 2];
}

double Schedule::alpha_bar(std::size_t t) const {
  check_step(t, 1, *this);
  return alpha_bars_[t - 1];
}

Schedule make_schedule(std::size_t T, std::vector<double> betas) { return Schedule(T, std::move(betas)); }

void step_row(int prev, double beta, std::span<double> out) {
  const double u = beta / static_cast<double>(out.size());
  for (double& v : out) v = u;
  out[prev] += 1.0 - beta;
}

void marginal_row(int x1, double alpha_bar, std::span<double> out) {
  const double u = (1.0 - alpha_bar) / static_cast<double>(out.size());
  for (double& v : out) v = u;
  out[x1] += alpha_bar;
}

void posterior_row(int xt, int x1, std::size_t t, const Schedule& schedule, std::span<double> out) {
  check_step(t, 3, schedule);
  const std::size_t K = out.size();
  const double beta = schedule.beta(t);
  const double ab = schedule.alpha_bar(t - 1);
  double z = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double lik = (static_cast<int>(k) == xt ? 1.0 - beta : 0.0) + beta / static_cast<double>(K);
    const double prior = (static_cast<int>(k) == x1 ? ab : 0.0) + (1.0 - ab) / static_cast<double>(K);
    out[k] = lik * prior;
    z += out[k];
  }
  if (!(z > 0.0)) throw NumericError("posterior normalizer is zero");
  for (double& v : out) v /= z;
}

Categoricals forward_step_probs(const TokenGrid& x_prev, std::size_t t, const Schedule& schedule, std::size_t K) {
  check_step(t, 2, schedule);
  x_prev.check_vocab(K);
  Categoricals c(x_prev.size(), K);
  for (std::size_t i = 0; i < x_prev.size(); ++i) step_row(x_prev[i], schedule.beta(t), c.row(i));
  return c;
}

Categoricals marginal_probs(const TokenGrid& x1, std::size_t t, const Schedule& schedule, std::size_t K) {
  check_step(t, 2, schedule);
  x1.check_vocab(K);
  Categoricals c(x1.size(), K);
  for (std::size_t i = 0; i < x1.size(); ++i) marginal_row(x1[i], schedule.alpha_bar(t), c.row(i));
  return c;
}

Categoricals posterior_probs(const TokenGrid& xt, const TokenGrid& x1, std::size_t t, const Schedule& schedule,
                             std::size_t K) {
  check_step(t, 3, schedule);
  check_pair(xt, x1);
  xt.check_vocab(K);
  x1.check_vocab(K);
  Categoricals c(xt.size(), K);
  for (std::size_t i = 0; i < xt.size(); ++i) posterior_row(xt[i], x1[i], t, schedule, c.row(i));
  return c;
}

int step_token(int prev, double beta, std::size_t K, Rng& rng) {
  if (beta > 0.0 && rng.uniform() < beta) return static_cast<int>(rng.below(K));
  return prev;
}

TokenGrid sample_forward(const TokenGrid& x_prev, std::size_t t, const Schedule& schedule, std::size_t K, Rng& rng) {
  check_step(t, 2, schedule);
  x_prev.check_vocab(K);
  TokenGrid out = x_prev;
  const double beta = schedule.beta(t);
  for (int& v : out.tokens) v = step_token(v, beta, K, rng);
  return out;
}

TokenGrid sample_marginal(const TokenGrid& x1, std::size_t t, const Schedule& schedule, std::size_t K, Rng& rng) {
  check_step(t, 2, schedule);
  x1.check_vocab(K);
  TokenGrid out = x1;
  const double replace = 1.0 - schedule.alpha_bar(t);
  for (int& v : out.tokens) v = step_token(v, replace, K, rng);
  return out;
}

TokenGrid sample_posterior(const TokenGrid& xt, const TokenGrid& x1, std::size_t t, const Schedule& schedule,
                           std::size_t K, Rng& rng) {
  return sample_rows(posterior_probs(xt, x1, t, schedule, K), xt.rows, xt.cols, rng);
}

TokenGrid sample_rows(const Categoricals& c, std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows * cols != c.positions) throw DimensionError("grid extents do not match categorical count");
  TokenGrid out(rows, cols);
  for (std::size_t i = 0; i < c.positions; ++i) out[i] = static_cast<int>(rng.categorical(c.row(i)));
  return out;
}

double categorical_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("categorical_kl: support sizes differ");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    if (!(q[k] > 0.0)) throw NumericError("categorical_kl: q has no mass where p does");
    kl += p[k] * std::log(p[k] / q[k]);
  }
  return kl;
}

double prior_kl(const TokenGrid& x1, const Schedule& schedule, std::size_t K) {
  x1.check_vocab(K);
  std::vector<double> row(K), uniform(K, 1.0 / static_cast<double>(K));
  double total = 0.0;
  for (std::size_t i = 0; i < x1.size(); ++i) {
    marginal_row(x1[i], schedule.alpha_bar(schedule.T()), row);
    total += categorical_kl(row, uniform);
  }
  return total;
}

}  // namespace mdchain::diffusion
