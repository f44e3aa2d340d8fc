#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdchain/vq/image.hpp"

namespace mdchain::data {

// Desk-scale image corpora. Every image is a deterministic function of
// (seed, index, class).
struct SyntheticSpec {
  std::string generator = "vsym";  // vsym | stripes | blobs
  std::size_t count = 1024;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 1;
  std::size_t classes = 1;
  std::size_t palette_size = 8;  // levels per class; class palettes are disjoint
  std::size_t block = 4;         // vsym block edge in pixels
  std::uint64_t seed = 0;
};

struct LabeledImage {
  vq::Image image;
  int label = 0;
};

void validate(const SyntheticSpec& spec);

// Pixel values of palette level `level` of class `label`.
std::vector<double> palette_color(const SyntheticSpec& spec, int label, std::size_t level);

int label_of(const SyntheticSpec& spec, std::size_t index);

LabeledImage generate(const SyntheticSpec& spec, std::size_t index);
std::vector<LabeledImage> generate_corpus(const SyntheticSpec& spec);

// True when every pixel row y equals row height-1-y.
bool is_vertically_symmetric(const vq::Image& image);

}  // namespace mdchain::data
