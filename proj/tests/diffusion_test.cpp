#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "mdchain/diffusion/schedule.hpp"
#include "mdchain/error.hpp"
#include "oracles.hpp"

using namespace mdchain;
using namespace mdchain::diffusion;

namespace {

TokenGrid random_grid(Rng& rng, std::size_t n, std::size_t K) {
  TokenGrid g(1, n);
  for (int& v : g.tokens) v = static_cast<int>(rng.below(K));
  return g;
}

std::vector<double> vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

TEST(Schedule, CumulativeProducts) {
  const Schedule s = make_schedule(3, {0.3, 0.5});
  EXPECT_EQ(s.alpha_bar(1), 1.0);
  EXPECT_DOUBLE_EQ(s.alpha_bar(2), 0.7);
  EXPECT_DOUBLE_EQ(s.alpha_bar(3), 0.35);
  const Schedule zero = make_schedule(4, {0, 0, 0});
  for (std::size_t t = 1; t <= 4; ++t) EXPECT_EQ(zero.alpha_bar(t), 1.0);
  const Schedule full = make_schedule(5, {0.2, 1.0, 0.1, 0.3});
  EXPECT_GT(full.alpha_bar(2), 0.0);
  for (std::size_t t = 3; t <= 5; ++t) EXPECT_EQ(full.alpha_bar(t), 0.0);
}

TEST(Schedule, RejectsBadConfig) {
  EXPECT_THROW(make_schedule(3, {0.3, 1.5}), ConfigError);
  EXPECT_THROW(make_schedule(3, {-0.1, 0.5}), ConfigError);
  EXPECT_THROW(make_schedule(1, {}), ConfigError);
  EXPECT_THROW(make_schedule(3, {0.3}), ConfigError);
}

TEST(Schedule, AlphaBarNonIncreasing) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 2 + rng.below(8);
    std::vector<double> betas(T - 1);
    for (double& b : betas) b = rng.uniform();
    const Schedule s = make_schedule(T, betas);
    for (std::size_t t = 2; t <= T; ++t) EXPECT_LE(s.alpha_bar(t), s.alpha_bar(t - 1));
  }
}

TEST(ForwardStep, Examples) {
  const Schedule s = make_schedule(2, {0.3});
  const auto p = forward_step_probs(TokenGrid(1, 1, 1), 2, s, 3);
  EXPECT_NEAR(p.probs[0], 0.1, 1e-15);
  EXPECT_NEAR(p.probs[1], 0.8, 1e-15);
  EXPECT_NEAR(p.probs[2], 0.1, 1e-15);
  const auto delta = forward_step_probs(TokenGrid(1, 1, 2), 2, make_schedule(2, {0.0}), 4);
  EXPECT_EQ(delta.probs, (std::vector<double>{0, 0, 1, 0}));
  const auto uni = forward_step_probs(TokenGrid(1, 1, 2), 2, make_schedule(2, {1.0}), 4);
  EXPECT_EQ(uni.probs, (std::vector<double>(4, 0.25)));
  EXPECT_THROW(forward_step_probs(TokenGrid(1, 1, 3), 2, s, 3), IndexError);
  EXPECT_THROW(forward_step_probs(TokenGrid(1, 1, 0), 3, s, 3), ContractError);
}

TEST(SampleForward, ZeroBetaIsIdentity) {
  Rng rng(2);
  const TokenGrid x = random_grid(rng, 100, 8);
  EXPECT_EQ(sample_forward(x, 2, make_schedule(2, {0.0}), 8, rng), x);
}

TEST(SampleForward, FullReplacementIsUniform) {
  Rng rng(3);
  const Schedule s = make_schedule(2, {1.0});
  const TokenGrid x(64, 64, 5);
  std::vector<double> counts(8, 0.0);
  const int grids = 25;
  for (int g = 0; g < grids; ++g)
    for (int v : sample_forward(x, 2, s, 8, rng).tokens) counts[v] += 1;
  const double n = grids * 4096.0;
  const double sigma = std::sqrt(n * (1.0 / 8) * (7.0 / 8));
  for (double c : counts) EXPECT_NEAR(c, n / 8, 3 * sigma);
}

TEST(SampleForward, RetentionRate) {
  Rng rng(4);
  const Schedule s = make_schedule(2, {0.3});
  const TokenGrid x = random_grid(rng, 100000, 3);
  const TokenGrid y = sample_forward(x, 2, s, 3, rng);
  double kept = 0;
  for (std::size_t i = 0; i < x.size(); ++i) kept += x[i] == y[i];
  const double n = static_cast<double>(x.size());
  EXPECT_NEAR(kept / n, 0.8, 3 * std::sqrt(0.8 * 0.2 / n));
}

TEST(Marginal, Examples) {
  const Schedule s = make_schedule(3, {0.3, 0.5});
  const auto p = marginal_probs(TokenGrid(1, 1, 2), 3, s, 3);
  EXPECT_NEAR(p.probs[0], 0.65 / 3, 1e-12);
  EXPECT_NEAR(p.probs[1], 0.65 / 3, 1e-12);
  EXPECT_NEAR(p.probs[2], 0.35 + 0.65 / 3, 1e-12);
  EXPECT_NEAR(p.probs[2], 0.56667, 1e-5);
  const TokenGrid x(2, 3, std::vector<int>{0, 1, 2, 2, 1, 0});
  const auto m2 = marginal_probs(x, 2, s, 3);
  const auto f2 = forward_step_probs(x, 2, s, 3);
  for (std::size_t i = 0; i < m2.probs.size(); ++i) EXPECT_NEAR(m2.probs[i], f2.probs[i], 1e-15);
}

TEST(Marginal, ChapmanKolmogorovAgainstComposedKernel) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 2 + rng.below(7);
    const std::size_t T = 2 + rng.below(5);
    std::vector<double> betas(T - 1);
    for (double& b : betas) b = rng.uniform();
    const Schedule s = make_schedule(T, betas);
    const int x1 = static_cast<int>(rng.below(K));
    for (std::size_t t = 2; t <= T; ++t) {
      std::vector<double> m(K), prev(K), pushed(K, 0.0);
      marginal_row(x1, s.alpha_bar(t), m);
      const auto ref = oracle::composed_kernel(K, betas, t);
      for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(m[k], ref[x1][k], 1e-12);
      marginal_row(x1, s.alpha_bar(t - 1), prev);
      const auto step = oracle::step_kernel(K, betas[t - 2]);
      for (std::size_t a = 0; a < K; ++a)
        for (std::size_t b = 0; b < K; ++b) pushed[b] += prev[a] * step[a][b];
      for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(m[k], pushed[k], 1e-12);
    }
  }
}

TEST(Posterior, WorkedExample) {
  const Schedule s = make_schedule(3, {0.3, 0.5});
  const auto p = posterior_probs(TokenGrid(1, 1, 0), TokenGrid(1, 1, 2), 3, s, 3);
  const auto ref = oracle::posterior(3, {0.3, 0.5}, 3, 0, 2);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p.probs[k], ref[k], 1e-12);
  EXPECT_NEAR(p.probs[0], 0.30769, 1e-5);
  EXPECT_NEAR(p.probs[1], 0.07692, 1e-5);
  EXPECT_NEAR(p.probs[2], 0.61538, 1e-5);
}

TEST(Posterior, ZeroBetaAtCleanTokenIsDelta) {
  const Schedule s = make_schedule(3, {0.4, 0.0});
  const auto p = posterior_probs(TokenGrid(1, 1, 1), TokenGrid(1, 1, 1), 3, s, 4);
  EXPECT_EQ(p.probs, (std::vector<double>{0, 1, 0, 0}));
}

TEST(Posterior, ModeAtAgreeingToken) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t K = 2 + rng.below(4);
    std::vector<double> betas{0.05 + 0.9 * rng.uniform(), 0.05 + 0.9 * rng.uniform()};
    const int k = static_cast<int>(rng.below(K));
    const auto ref = oracle::posterior(K, betas, 3, k, k);
    std::vector<double> p(K);
    posterior_row(k, k, 3, make_schedule(3, betas), p);
    const auto argmax = std::max_element(ref.begin(), ref.end()) - ref.begin();
    EXPECT_EQ(argmax, k);
    EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), k);
  }
}

TEST(Posterior, MatchesEnumerationForSmallChains) {
  Rng rng(7);
  for (std::size_t K = 2; K <= 5; ++K)
    for (std::size_t T = 3; T <= 4; ++T)
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> betas(T - 1);
        for (double& b : betas) b = rng.uniform();
        const Schedule s = make_schedule(T, betas);
        for (std::size_t t = 3; t <= T; ++t)
          for (std::size_t xt = 0; xt < K; ++xt)
            for (std::size_t x1 = 0; x1 < K; ++x1) {
              std::vector<double> p(K);
              posterior_row(static_cast<int>(xt), static_cast<int>(x1), t, s, p);
              const auto ref = oracle::posterior(K, betas, t, static_cast<int>(xt), static_cast<int>(x1));
              double sum = 0;
              for (std::size_t k = 0; k < K; ++k) {
                EXPECT_NEAR(p[k], ref[k], 1e-12);
                sum += p[k];
              }
              EXPECT_NEAR(sum, 1.0, 1e-12);
            }
      }
}

TEST(Posterior, BayesConsistency) {
  // sum_{x_t} q(x_{t-1} | x_t, x_1) q(x_t | x_1) = q(x_{t-1} | x_1)
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 2 + rng.below(4);
    const Schedule s = make_schedule(4, {rng.uniform(), rng.uniform(), rng.uniform()});
    const int x1 = static_cast<int>(rng.below(K));
    for (std::size_t t = 3; t <= 4; ++t) {
      std::vector<double> mt(K), mprev(K), post(K), acc(K, 0.0);
      marginal_row(x1, s.alpha_bar(t), mt);
      marginal_row(x1, s.alpha_bar(t - 1), mprev);
      for (std::size_t xt = 0; xt < K; ++xt) {
        posterior_row(static_cast<int>(xt), x1, t, s, post);
        for (std::size_t k = 0; k < K; ++k) acc[k] += post[k] * mt[xt];
      }
      for (std::size_t k = 0; k < K; ++k) EXPECT_NEAR(acc[k], mprev[k], 1e-12);
    }
  }
}

TEST(Posterior, ContractAndDegenerateCases) {
  const Schedule s = make_schedule(3, {0.3, 0.5});
  EXPECT_THROW(posterior_probs(TokenGrid(1, 1), TokenGrid(1, 1), 2, s, 3), ContractError);
  EXPECT_THROW(posterior_probs(TokenGrid(1, 2), TokenGrid(1, 1), 3, s, 3), DimensionError);
  const Schedule frozen = make_schedule(3, {0.0, 0.0});
  EXPECT_THROW(posterior_probs(TokenGrid(1, 1, 0), TokenGrid(1, 1, 1), 3, frozen, 3), NumericError);
}

TEST(CategoricalKl, Examples) {
  const std::vector<double> p{0.2, 0.5, 0.3};
  EXPECT_EQ(categorical_kl(p, p), 0.0);
  const std::vector<double> delta{0, 1, 0}, uni(3, 1.0 / 3);
  EXPECT_NEAR(categorical_kl(delta, uni), std::log(3.0), 1e-15);
  EXPECT_THROW(categorical_kl(uni, delta), NumericError);
  EXPECT_THROW(categorical_kl(p, std::vector<double>{0.5, 0.5}), DimensionError);
}

TEST(CategoricalKl, GibbsInequality) {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t K = 1 + rng.below(10);
    std::vector<double> p(K), q(K);
    double zp = 0, zq = 0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
      q[k] = 1e-3 + rng.uniform();
      zp += p[k];
      zq += q[k];
    }
    if (zp == 0) continue;
    for (auto& v : p) v /= zp;
    for (auto& v : q) v /= zq;
    EXPECT_GE(categorical_kl(p, q), -1e-15);
  }
}

TEST(PriorKl, Examples) {
  EXPECT_EQ(prior_kl(TokenGrid(4, 4, 2), make_schedule(2, {1.0}), 8), 0.0);
  EXPECT_NEAR(prior_kl(TokenGrid(1, 1, 1), make_schedule(3, {0.0, 0.0}), 3), std::log(3.0), 1e-15);

  // alpha_bar_T = 0.05 via one step of beta = 0.95.
  const Schedule s = make_schedule(2, {0.95});
  Rng rng(10);
  const TokenGrid x = random_grid(rng, 64, 8);
  const double hi = 0.05 + 0.95 / 8, lo = 0.95 / 8;
  const double per = hi * std::log(hi * 8) + 7 * lo * std::log(lo * 8);
  EXPECT_NEAR(prior_kl(x, s, 8), 64 * per, 1e-12);
}

TEST(Marginal, MonteCarloCompositionMatchesClosedForm) {
  Rng rng(11);
  const std::size_t K = 8, T = 4;
  const Schedule s = make_schedule(T, {0.3, 0.4, 0.5});
  const TokenGrid x1 = random_grid(rng, 64, K);
  const std::size_t samples = 20000;
  std::vector<std::vector<double>> counts(64, std::vector<double>(K, 0.0));
  for (std::size_t n = 0; n < samples; ++n) {
    TokenGrid x = x1;
    for (std::size_t t = 2; t <= T; ++t) x = sample_forward(x, t, s, K, rng);
    for (std::size_t i = 0; i < 64; ++i) counts[i][x[i]] += 1;
  }
  const auto m = marginal_probs(x1, T, s, K);
  for (std::size_t i = 0; i < 64; ++i) {
    for (auto& c : counts[i]) c /= static_cast<double>(samples);
    EXPECT_LT(oracle::tv(counts[i], vec(m.row(i))), 0.02);
  }
}

TEST(Marginal, EffectiveSequenceLength) {
  Rng rng(12);
  const std::size_t K = 8, N = 256;
  const Schedule s = make_schedule(3, {0.3, 0.6});
  const TokenGrid x1 = random_grid(rng, N, K);
  const std::size_t reps = 400;
  const double n = static_cast<double>(reps * N);
  const double a = s.alpha_bar(3);
  // Unchanged tokens are the alpha_bar * N survivors plus replacements that
  // redrew the original symbol.
  double direct = 0, stepped = 0;
  for (std::size_t r = 0; r < reps; ++r) {
    const TokenGrid x = sample_marginal(x1, 3, s, K, rng);
    const TokenGrid y = sample_forward(sample_forward(x1, 2, s, K, rng), 3, s, K, rng);
    for (std::size_t i = 0; i < N; ++i) {
      direct += x[i] == x1[i];
      stepped += y[i] == x1[i];
    }
  }
  const double p = a + (1 - a) / K;
  const double survivors_direct = (direct / n - (1 - a) / K) * N;
  EXPECT_NEAR(survivors_direct, a * N, 3 * std::sqrt(p * (1 - p) / n) * N);
  EXPECT_NEAR(stepped / n, p, 3 * std::sqrt(p * (1 - p) / n));
}
