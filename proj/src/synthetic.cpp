#include "mdchain/data/synthetic.hpp"

#include <cmath>

#include "mdchain/error.hpp"
#include "mdchain/rng.hpp"

namespace mdchain::data {

void validate(const SyntheticSpec& spec) {
  if (spec.generator != "vsym" && spec.generator != "stripes" && spec.generator != "blobs") {
    throw ConfigError("unknown generator '" + spec.generator + "'");
  }
  if (spec.height == 0 || spec.width == 0) throw ConfigError("image extents must be positive");
  if (spec.channels != 1 && spec.channels != 3) throw ConfigError("channels must be 1 or 3");
  if (spec.classes == 0 || spec.palette_size == 0) throw ConfigError("classes and palette_size must be positive");
  if (spec.classes * spec.palette_size < 2 || spec.classes * spec.palette_size > 256) {
    throw ConfigError("total palette size must lie in [2, 256]");
  }
  if (spec.generator == "vsym") {
    if (spec.block == 0 || spec.height % (2 * spec.block) != 0 || spec.width % spec.block != 0) {
      throw ConfigError("vsym needs height divisible by 2*block and width divisible by block");
    }
  }
}

std::vector<double> palette_color(const SyntheticSpec& spec, int label, std::size_t level) {
  const std::size_t total = spec.classes * spec.palette_size;
  const std::size_t q = static_cast<std::size_t>(label) * spec.palette_size + level;
  auto byte = [&](std::size_t i) { return std::round(255.0 * static_cast<double>(i) / static_cast<double>(total - 1)) / 255.0; };
  if (spec.channels == 1) return {byte(q)};
  return {byte(q), byte((q * 5 + 1) % total), byte((q * 3 + 2) % total)};
}

int label_of(const SyntheticSpec& spec, std::size_t index) { return static_cast<int>(index % spec.classes); }

namespace {

void paint(vq::Image& image, std::size_t y, std::size_t x, const std::vector<double>& color) {
  for (std::size_t c = 0; c < image.channels; ++c) image.at(y, x, c) = color[c];
}

vq::Image vsym(const SyntheticSpec& spec, int label, Rng& rng) {
  vq::Image image(spec.height, spec.width, spec.channels);
  const std::size_t block_rows = spec.height / spec.block;
  const std::size_t block_cols = spec.width / spec.block;
  for (std::size_t br = 0; br < block_rows / 2; ++br) {
    for (std::size_t bc = 0; bc < block_cols; ++bc) {
      const auto color = palette_color(spec, label, rng.below(spec.palette_size));
      for (std::size_t y = 0; y < spec.block; ++y) {
        for (std::size_t x = 0; x < spec.block; ++x) {
          const std::size_t py = br * spec.block + y;
          paint(image, py, bc * spec.block + x, color);
          paint(image, spec.height - 1 - py, bc * spec.block + x, color);
        }
      }
    }
  }
  return image;
}

vq::Image stripes(const SyntheticSpec& spec, int label, Rng& rng) {
  vq::Image image(spec.height, spec.width, spec.channels);
  const bool horizontal = rng.below(2) == 0;
  const std::size_t extent = horizontal ? spec.height : spec.width;
  std::size_t pos = 0;
  while (pos < extent) {
    const std::size_t w = 1 + rng.below(4);
    const auto color = palette_color(spec, label, rng.below(spec.palette_size));
    for (std::size_t s = pos; s < std::min(extent, pos + w); ++s) {
      for (std::size_t o = 0; o < (horizontal ? spec.width : spec.height); ++o) {
        if (horizontal) paint(image, s, o, color);
        else paint(image, o, s, color);
      }
    }
    pos += w;
  }
  return image;
}

vq::Image blobs(const SyntheticSpec& spec, int label, Rng& rng) {
  vq::Image image(spec.height, spec.width, spec.channels);
  const auto background = palette_color(spec, label, rng.below(spec.palette_size));
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) paint(image, y, x, background);
  const std::size_t count = 1 + rng.below(3);
  const double max_r = static_cast<double>(std::min(spec.height, spec.width)) / 4.0;
  for (std::size_t b = 0; b < count; ++b) {
    const auto color = palette_color(spec, label, rng.below(spec.palette_size));
    const double cy = rng.uniform() * static_cast<double>(spec.height);
    const double cx = rng.uniform() * static_cast<double>(spec.width);
    const double r = 1.0 + rng.uniform() * max_r;
    for (std::size_t y = 0; y < spec.height; ++y)
      for (std::size_t x = 0; x < spec.width; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double dx = static_cast<double>(x) + 0.5 - cx;
        if (dy * dy + dx * dx <= r * r) paint(image, y, x, color);
      }
  }
  return image;
}

}  // namespace

LabeledImage generate(const SyntheticSpec& spec, std::size_t index) {
  validate(spec);
  const int label = label_of(spec, index);
  Rng rng(mix_seed(spec.seed, index));
  if (spec.generator == "vsym") return {vsym(spec, label, rng), label};
  if (spec.generator == "stripes") return {stripes(spec, label, rng), label};
  return {blobs(spec, label, rng), label};
}

std::vector<LabeledImage> generate_corpus(const SyntheticSpec& spec) {
  std::vector<LabeledImage> out;
  out.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) out.push_back(generate(spec, i));
  return out;
}

bool is_vertically_symmetric(const vq::Image& image) {
  for (std::size_t y = 0; y < image.height / 2; ++y)
    for (std::size_t x = 0; x < image.width; ++x)
      for (std::size_t c = 0; c < image.channels; ++c)
        if (image.at(y, x, c) != image.at(image.height - 1 - y, x, c)) return false;
  return true;
}

}  // namespace mdchain::data
