#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace mdchain::vq {

// Pixel values in [0,1], row-major with interleaved channels.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const { return pixels[(y * width + x) * channels + c]; }

  friend bool operator==(const Image&, const Image&) = default;
};

double mean_squared_error(const Image& a, const Image& b);

// Binary PGM (P5, one channel) / PPM (P6, three channels), maxval 255.
Image read_pnm(const std::filesystem::path& path);
void write_pnm(const std::filesystem::path& path, const Image& image);

}  // namespace mdchain::vq
