#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mdchain/chain/chain.hpp"
#include "mdchain/vq/image.hpp"

namespace mdchain::edit {

// m[i] = 1 regenerates token i, m[i] = 0 keeps it as context.
struct EditMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> m;

  EditMask() = default;
  EditMask(std::size_t r, std::size_t c, std::uint8_t fill = 0) : rows(r), cols(c), m(r * c, fill) {}

  std::size_t size() const { return m.size(); }
  std::size_t masked() const;
  std::uint8_t& at(std::size_t r, std::size_t c) { return m[r * cols + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return m[r * cols + c]; }

  friend bool operator==(const EditMask&, const EditMask&) = default;
};

EditMask upper_half_mask(std::size_t rows, std::size_t cols);

// Pixel masks are one-channel images; a pixel is masked when its value is at
// least 0.5 (255 in a PGM file).
vq::Image read_pixel_mask(const std::filesystem::path& path);

// Token cell (i, j) takes the value of pixel (i*f, j*f).
EditMask downsample_mask(const vq::Image& pixel_mask, std::size_t f);

TokenGrid masked_forward(const TokenGrid& x_prev, const EditMask& mask, std::size_t t,
                         const diffusion::Schedule& schedule, std::size_t vocab, Rng& rng);

// Unmasked positions are forced to x_t and still feed the prefix.
TokenGrid masked_reverse(const TokenGrid& x_t, const EditMask& mask, const model::DenoiserModel& model,
                         model::Condition cond, Rng& rng, double temperature = 1.0);

TokenGrid forward_backward_round(const TokenGrid& x, const EditMask& mask, std::size_t t,
                                 const chain::ChainModel& chain, model::Condition cond, Rng& rng,
                                 double temperature = 1.0);

struct EditOptions {
  std::size_t rounds = 8;
  std::size_t round_scale = 2;
  double temperature = 1.0;
};

struct EditResult {
  TokenGrid tokens;
  // Randomized start, one state per scale T..2, then one per round.
  std::vector<TokenGrid> trajectory;
  bool empty_mask = false;
};

EditResult edit_tokens(const TokenGrid& tokens, const EditMask& mask, const chain::ChainModel& chain,
                       model::Condition cond, Rng& rng, const EditOptions& options = {});

struct ImageEdit {
  vq::Image image;
  EditResult result;
};

ImageEdit edit_image(const vq::Image& image, const vq::Image& pixel_mask, const chain::ChainModel& chain,
                     model::Condition cond, Rng& rng, const EditOptions& options = {});

// Fraction of masked cells (r, c) whose token differs from the mirror of the
// token at (rows-1-r, c).
double symmetry_violation(const TokenGrid& tokens, const EditMask& mask, const std::vector<int>& mirror);

}  // namespace mdchain::edit
