#include <gtest/gtest.h>

#include "mdchain/edit/edit.hpp"
#include "mdchain/error.hpp"
#include "mdchain/model/tabular.hpp"
#include "mdchain/vq/codebook.hpp"
#include "toy_chain.hpp"

using namespace mdchain;
using namespace mdchain::edit;

namespace {

TokenGrid random_grid(Rng& rng, std::size_t rows, std::size_t cols, std::size_t K) {
  TokenGrid g(rows, cols);
  for (int& v : g.tokens) v = static_cast<int>(rng.below(K));
  return g;
}

EditMask random_mask(Rng& rng, std::size_t rows, std::size_t cols) {
  EditMask m(rows, cols);
  const double p = rng.uniform();
  for (auto& v : m.m) v = rng.uniform() < p ? 1 : 0;
  return m;
}

void expect_context_kept(const TokenGrid& before, const TokenGrid& after, const EditMask& mask) {
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i)
    if (!mask.m[i]) ASSERT_EQ(before[i], after[i]) << "position " << i;
}

// Tabular chain fitted on random pairs, so its conditionals depend on context.
chain::ChainModel tabular_chain(std::size_t T, std::size_t K, std::size_t rows, std::size_t cols) {
  std::vector<double> betas(T - 1, 0.4);
  const auto s = diffusion::make_schedule(T, betas);
  std::vector<std::vector<double>> entries;
  for (std::size_t k = 0; k < K; ++k) entries.push_back(std::vector<double>(4, static_cast<double>(k) / K));
  chain::ChainModel c{s, vq::Codebook(2, 1, entries), {}, rows, cols, 0};
  Rng rng(99);
  for (std::size_t t = 2; t <= T; ++t) {
    std::vector<model::TrainingPair> pairs;
    for (int i = 0; i < 200; ++i) {
      const TokenGrid x1 = random_grid(rng, rows, cols, K);
      pairs.push_back({diffusion::sample_forward(x1, 2, diffusion::make_schedule(2, {0.4}), K, rng), x1, {}});
    }
    c.models.push_back(std::make_shared<model::TabularAR>(model::tabular_fit(pairs, K, 0)));
  }
  return c;
}

chain::ChainModel exact_toy_chain(const std::vector<double>& betas) {
  chain::ChainModel c{diffusion::make_schedule(betas.size() + 1, betas), std::nullopt, {}, 2, 2, 0};
  auto p = toy::data_distribution();
  for (double b : betas) {
    const auto f = toy::joint_kernel(b);
    c.models.push_back(std::make_shared<toy::JointReverse>(toy::exact_reverse(p, f)));
    p = toy::push(p, f);
  }
  return c;
}

}  // namespace

TEST(Mask, DownsampleExamples) {
  const vq::Image ones(8, 12, 1, 1.0);
  EXPECT_EQ(downsample_mask(ones, 4), EditMask(2, 3, 1));

  vq::Image upper(16, 8, 1, 0.0);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) upper.at(y, x) = 1.0;
  EXPECT_EQ(downsample_mask(upper, 4), upper_half_mask(4, 2));

  vq::Image single(8, 8, 1, 0.0);
  single.at(4, 4) = 1.0;
  const EditMask m = downsample_mask(single, 4);
  EXPECT_EQ(m.masked(), 1u);
  EXPECT_EQ(m.at(1, 1), 1);

  vq::Image off(8, 8, 1, 0.0);
  off.at(5, 6) = 1.0;
  EXPECT_EQ(downsample_mask(off, 4).masked(), 0u);
}

TEST(Mask, DownsampleErrors) {
  EXPECT_THROW(downsample_mask(vq::Image(8, 6, 1), 4), DimensionError);
  EXPECT_THROW(downsample_mask(vq::Image(8, 8, 3), 4), DimensionError);
}

TEST(Mask, ReadsPgm) {
  const auto path = std::filesystem::temp_directory_path() / "mdchain_mask.pgm";
  vq::Image img(4, 4, 1, 0.0);
  img.at(0, 0) = 1.0;
  vq::write_pnm(path, img);
  EXPECT_EQ(downsample_mask(read_pixel_mask(path), 2).masked(), 1u);
  vq::write_pnm(path, vq::Image(4, 4, 3));
  EXPECT_THROW(read_pixel_mask(path), DimensionError);
  std::filesystem::remove(path);
}

TEST(MaskedForward, DegenerateMasks) {
  const auto s = diffusion::make_schedule(3, {0.7, 0.9});
  Rng rng(1);
  const TokenGrid x = random_grid(rng, 4, 4, 8);
  EXPECT_EQ(masked_forward(x, EditMask(4, 4, 0), 2, s, 8, rng), x);
  Rng a(2), b(2);
  EXPECT_EQ(masked_forward(x, EditMask(4, 4, 1), 3, s, 8, a), diffusion::sample_forward(x, 3, s, 8, b));
}

TEST(MaskedForward, KeepsContext) {
  const auto s = diffusion::make_schedule(2, {1.0});
  Rng rng(3);
  for (int rep = 0; rep < 1000; ++rep) {
    const TokenGrid x = random_grid(rng, 4, 4, 8);
    const EditMask m = random_mask(rng, 4, 4);
    expect_context_kept(x, masked_forward(x, m, 2, s, 8, rng), m);
  }
}

TEST(MaskedForward, RejectsShapeMismatch) {
  Rng rng(0);
  EXPECT_THROW(masked_forward(TokenGrid(2, 2), EditMask(2, 3), 2, diffusion::make_schedule(2, {0.5}), 3, rng),
               DimensionError);
}

TEST(MaskedReverse, DegenerateMasks) {
  const auto c = tabular_chain(2, 5, 3, 3);
  Rng rng(4);
  const TokenGrid x = random_grid(rng, 3, 3, 5);
  EXPECT_EQ(masked_reverse(x, EditMask(3, 3, 0), c.at(2), std::nullopt, rng), x);
  Rng a(5), b(5);
  EXPECT_EQ(masked_reverse(x, EditMask(3, 3, 1), c.at(2), std::nullopt, a).tokens,
            model::sample_sequence(c.at(2), x.sequence(), std::nullopt, b));
}

TEST(MaskedReverse, KeepsContext) {
  const auto c = tabular_chain(2, 5, 3, 3);
  Rng rng(6);
  for (int rep = 0; rep < 1000; ++rep) {
    const TokenGrid x = random_grid(rng, 3, 3, 5);
    const EditMask m = random_mask(rng, 3, 3);
    expect_context_kept(x, masked_reverse(x, m, c.at(2), std::nullopt, rng), m);
  }
}

TEST(Round, DegenerateCases) {
  auto c = tabular_chain(3, 4, 2, 4);
  Rng rng(7);
  const TokenGrid x = random_grid(rng, 2, 4, 4);
  EXPECT_EQ(forward_backward_round(x, EditMask(2, 4, 0), 2, c, std::nullopt, rng), x);

  c.schedule = diffusion::make_schedule(3, {0.0, 0.5});
  const EditMask m = upper_half_mask(2, 4);
  Rng a(8), b(8);
  EXPECT_EQ(forward_backward_round(x, m, 2, c, std::nullopt, a), masked_reverse(x, m, c.at(2), std::nullopt, b));
}

TEST(Edit, ContextPreservedAlongTrajectory) {
  const auto c = tabular_chain(3, 4, 3, 4);
  Rng rng(9);
  EditOptions opt;
  opt.rounds = 2;
  for (int rep = 0; rep < 1000; ++rep) {
    const TokenGrid x = random_grid(rng, 3, 4, 4);
    const EditMask m = random_mask(rng, 3, 4);
    const auto r = edit_tokens(x, m, c, std::nullopt, rng, opt);
    ASSERT_EQ(r.trajectory.size(), 1 + 2 + opt.rounds);
    for (const auto& state : r.trajectory) expect_context_kept(x, state, m);
    EXPECT_EQ(r.tokens, r.trajectory.back());
  }
}

TEST(Edit, TrajectoryLength) {
  for (std::size_t T : {2u, 3u, 5u})
    for (std::size_t rounds : {0u, 1u, 4u}) {
      const auto c = tabular_chain(T, 3, 2, 2);
      Rng rng(T * 10 + rounds);
      EditOptions opt;
      opt.rounds = rounds;
      EXPECT_EQ(edit_tokens(TokenGrid(2, 2), EditMask(2, 2, 1), c, std::nullopt, rng, opt).trajectory.size(),
                T + rounds);
      EXPECT_EQ(edit_tokens(TokenGrid(2, 2), EditMask(2, 2, 0), c, std::nullopt, rng, opt).trajectory.size(),
                T + rounds);
    }
}

TEST(Edit, EmptyMaskIsIdentity) {
  const auto c = tabular_chain(3, 4, 2, 2);
  Rng rng(10);
  const TokenGrid x(2, 2, {0, 3, 2, 1});
  const auto r = edit_tokens(x, EditMask(2, 2, 0), c, std::nullopt, rng);
  EXPECT_TRUE(r.empty_mask);
  EXPECT_EQ(r.tokens, x);
  EXPECT_FALSE(edit_tokens(x, EditMask(2, 2, 1), c, std::nullopt, rng).empty_mask);
}

TEST(Edit, RejectsBadInputs) {
  const auto c = tabular_chain(3, 4, 2, 2);
  Rng rng(11);
  EXPECT_THROW(edit_tokens(TokenGrid(2, 3), EditMask(2, 3, 1), c, std::nullopt, rng), DimensionError);
  EXPECT_THROW(edit_tokens(TokenGrid(2, 2, 7), EditMask(2, 2, 1), c, std::nullopt, rng), IndexError);
  EditOptions opt;
  opt.round_scale = 4;
  EXPECT_THROW(edit_tokens(TokenGrid(2, 2), EditMask(2, 2, 1), c, std::nullopt, rng, opt), ConfigError);
}

TEST(Edit, FullMaskSamplesTheChainDistribution) {
  // With exact reverse models and pure noise at the top, a full-mask edit is
  // an unconditional sample; extra rounds at t = 2 keep p(x1) invariant.
  const auto c = exact_toy_chain({0.3, 1.0});
  const auto pd = toy::data_distribution();
  for (std::size_t rounds : {0u, 3u}) {
    Rng rng(12 + rounds);
    EditOptions opt;
    opt.rounds = rounds;
    std::vector<double> freq(toy::M, 0.0);
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      const auto r = edit_tokens(toy::grid(0), EditMask(2, 2, 1), c, std::nullopt, rng, opt);
      freq[toy::index(r.tokens.sequence())] += 1.0 / n;
    }
    EXPECT_LT(oracle::tv(freq, pd), 0.05) << "rounds " << rounds;
  }
}

TEST(Edit, RoundsReduceSymmetryViolation) {
  // Toy data has both rows equal, so the mirror table is the identity.
  const auto c = exact_toy_chain({0.3, 0.6});
  const std::vector<int> mirror{0, 1, 2};
  const auto pd = toy::data_distribution();
  const EditMask m = upper_half_mask(2, 2);
  Rng rng(14);
  EditOptions opt;
  opt.rounds = 6;
  std::vector<double> rate(1 + 2 + opt.rounds, 0.0);
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto r = edit_tokens(toy::sample_data(pd, rng), m, c, std::nullopt, rng, opt);
    for (std::size_t k = 0; k < rate.size(); ++k) rate[k] += symmetry_violation(r.trajectory[k], m, mirror) / n;
  }
  EXPECT_GT(rate[0], 0.6);
  EXPECT_LT(rate[2], rate[0]);
  EXPECT_LE(rate.back(), rate[2] + 0.02);
}

TEST(Edit, ImageContextMatchesReconstruction) {
  const auto c = tabular_chain(3, 4, 4, 4);
  Rng rng(15);
  vq::Image img(8, 8, 1);
  for (double& v : img.pixels) v = rng.uniform();
  vq::Image pmask(8, 8, 1, 0.0);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 8; ++x) pmask.at(y, x) = 1.0;
  const auto out = edit_image(img, pmask, c, std::nullopt, rng);
  const vq::Image recon = vq::decode(vq::encode(img, *c.codebook), *c.codebook);
  for (std::size_t y = 4; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(out.image.at(y, x), recon.at(y, x));
  EXPECT_THROW(edit_image(img, vq::Image(4, 8, 1), c, std::nullopt, rng), DimensionError);
}

TEST(Symmetry, ViolationExamples) {
  const std::vector<int> mirror{1, 0, 2};
  const TokenGrid g(2, 2, {1, 2, 0, 0});
  const EditMask upper = upper_half_mask(2, 2);
  // (0,0): 1 vs mirror(0) = 1 ok; (0,1): 2 vs mirror(0) = 1 bad.
  EXPECT_DOUBLE_EQ(symmetry_violation(g, upper, mirror), 0.5);
  EXPECT_DOUBLE_EQ(symmetry_violation(g, EditMask(2, 2, 0), mirror), 0.0);
}
