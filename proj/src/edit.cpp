#include "mdchain/edit/edit.hpp"

#include <algorithm>

#include "mdchain/error.hpp"
#include "mdchain/vq/codebook.hpp"

namespace mdchain::edit {

namespace {

void check_shape(const TokenGrid& x, const EditMask& mask) {
  if (x.rows != mask.rows || x.cols != mask.cols) throw DimensionError("mask extents differ from the token grid");
}

}  // namespace

std::size_t EditMask::masked() const { return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1)); }

EditMask upper_half_mask(std::size_t rows, std::size_t cols) {
  EditMask mask(rows, cols);
  for (std::size_t r = 0; r < rows / 2; ++r)
    for (std::size_t c = 0; c < cols; ++c) mask.at(r, c) = 1;
  return mask;
}

vq::Image read_pixel_mask(const std::filesystem::path& path) {
  vq::Image img = vq::read_pnm(path);
  if (img.channels != 1) throw DimensionError(path.string() + ": mask must be a one-channel PGM");
  return img;
}

EditMask downsample_mask(const vq::Image& pixel_mask, std::size_t f) {
  if (f == 0 || pixel_mask.channels != 1 || pixel_mask.height % f || pixel_mask.width % f) {
    throw DimensionError("pixel mask must be one channel with extents divisible by the patch size");
  }
  EditMask mask(pixel_mask.height / f, pixel_mask.width / f);
  for (std::size_t i = 0; i < mask.rows; ++i)
    for (std::size_t j = 0; j < mask.cols; ++j) mask.at(i, j) = pixel_mask.at(i * f, j * f) >= 0.5 ? 1 : 0;
  return mask;
}

TokenGrid masked_forward(const TokenGrid& x_prev, const EditMask& mask, std::size_t t,
                         const diffusion::Schedule& schedule, std::size_t vocab, Rng& rng) {
  check_shape(x_prev, mask);
  const double beta = schedule.beta(t);
  TokenGrid out = x_prev;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask.m[i]) out[i] = diffusion::step_token(x_prev[i], beta, vocab, rng);
  return out;
}

TokenGrid masked_reverse(const TokenGrid& x_t, const EditMask& mask, const model::DenoiserModel& model,
                         model::Condition cond, Rng& rng, double temperature) {
  check_shape(x_t, mask);
  return {x_t.rows, x_t.cols, model::sample_sequence(model, x_t.sequence(), cond, rng, temperature, x_t.sequence(), mask.m)};
}

TokenGrid forward_backward_round(const TokenGrid& x, const EditMask& mask, std::size_t t,
                                 const chain::ChainModel& chain, model::Condition cond, Rng& rng,
                                 double temperature) {
  const TokenGrid xt = masked_forward(x, mask, t, chain.schedule, chain.vocab(), rng);
  return masked_reverse(xt, mask, chain.at(t), cond, rng, temperature);
}

EditResult edit_tokens(const TokenGrid& tokens, const EditMask& mask, const chain::ChainModel& chain,
                       model::Condition cond, Rng& rng, const EditOptions& options) {
  chain.validate();
  check_shape(tokens, mask);
  if (tokens.size() != chain.length()) throw DimensionError("token grid does not match the chain's grid");
  tokens.check_vocab(chain.vocab());
  const std::size_t T = chain.schedule.T();
  if (options.round_scale < 2 || options.round_scale > T) throw ConfigError("round scale outside 2..T");

  EditResult r;
  r.tokens = tokens;
  r.empty_mask = mask.masked() == 0;
  if (r.empty_mask) {
    r.trajectory.assign(T + options.rounds, tokens);
    return r;
  }
  for (std::size_t i = 0; i < r.tokens.size(); ++i)
    if (mask.m[i]) r.tokens[i] = static_cast<int>(rng.below(chain.vocab()));
  r.trajectory.push_back(r.tokens);
  for (std::size_t t = T; t >= 2; --t) {
    r.tokens = masked_reverse(r.tokens, mask, chain.at(t), cond, rng, options.temperature);
    r.trajectory.push_back(r.tokens);
  }
  for (std::size_t k = 0; k < options.rounds; ++k) {
    r.tokens = forward_backward_round(r.tokens, mask, options.round_scale, chain, cond, rng, options.temperature);
    r.trajectory.push_back(r.tokens);
  }
  return r;
}

ImageEdit edit_image(const vq::Image& image, const vq::Image& pixel_mask, const chain::ChainModel& chain,
                     model::Condition cond, Rng& rng, const EditOptions& options) {
  if (!chain.codebook) throw ContractError("image editing needs a codebook");
  if (pixel_mask.height != image.height || pixel_mask.width != image.width) {
    throw DimensionError("pixel mask extents differ from the image");
  }
  const EditMask mask = downsample_mask(pixel_mask, chain.codebook->patch_size());
  ImageEdit out;
  out.result = edit_tokens(vq::encode(image, *chain.codebook), mask, chain, cond, rng, options);
  out.image = vq::decode(out.result.tokens, *chain.codebook);
  return out;
}

double symmetry_violation(const TokenGrid& tokens, const EditMask& mask, const std::vector<int>& mirror) {
  check_shape(tokens, mask);
  std::size_t bad = 0, total = 0;
  for (std::size_t r = 0; r < tokens.rows; ++r)
    for (std::size_t c = 0; c < tokens.cols; ++c) {
      if (!mask.at(r, c)) continue;
      ++total;
      if (tokens.at(r, c) != mirror.at(static_cast<std::size_t>(tokens.at(tokens.rows - 1 - r, c)))) ++bad;
    }
  return total ? static_cast<double>(bad) / static_cast<double>(total) : 0.0;
}

}  // namespace mdchain::edit
