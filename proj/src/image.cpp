#include "mdchain/vq/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "mdchain/error.hpp"

namespace mdchain::vq {

double mean_squared_error(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels) {
    throw DimensionError("mean_squared_error: image extents differ");
  }
  if (a.pixels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) total += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
  return total / static_cast<double>(a.pixels.size());
}

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string header_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) break;
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  return token;
}

}  // namespace

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = header_token(in);
  std::size_t channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw IoError(path.string() + ": not a binary PGM/PPM file");
  std::size_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoul(header_token(in));
    height = std::stoul(header_token(in));
    maxval = std::stoul(header_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed header");
  }
  if (maxval != 255) throw IoError(path.string() + ": only maxval 255 is supported");
  Image image(height, width, channels);
  std::string bytes(image.pixels.size(), '\0');
  if (!in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) throw IoError(path.string() + ": truncated pixel data");
  for (std::size_t i = 0; i < bytes.size(); ++i) image.pixels[i] = static_cast<unsigned char>(bytes[i]) / 255.0;
  return image;
}

void write_pnm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw DimensionError("write_pnm: 1 or 3 channels required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  std::string bytes(image.pixels.size(), '\0');
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const double v = std::clamp(image.pixels[i], 0.0, 1.0);
    bytes[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace mdchain::vq
