#include "mdchain/vq/codebook.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <string>

#include "mdchain/binary_io.hpp"
#include "mdchain/error.hpp"
#include "mdchain/rng.hpp"

namespace mdchain::vq {

namespace {

constexpr char kCodebookMagic[9] = "MDCBOOK1";

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

void check_extents(const Image& image, std::size_t f) {
  if (f == 0 || image.height % f != 0 || image.width % f != 0) {
    throw DimensionError("image " + std::to_string(image.height) + "x" + std::to_string(image.width) +
                         " is not divisible by patch size " + std::to_string(f));
  }
}

}  // namespace

Codebook::Codebook(std::size_t patch_size, std::size_t channels, std::vector<std::vector<double>> entries)
    : patch_size_(patch_size), channels_(channels), entries_(std::move(entries)) {
  if (patch_size_ == 0 || (channels_ != 1 && channels_ != 3)) throw ConfigError("Codebook: invalid patch geometry");
  if (entries_.empty()) throw ConfigError("Codebook: at least one entry required");
  for (const auto& e : entries_) {
    if (e.size() != patch_length()) throw DimensionError("Codebook: entry length does not match patch geometry");
    for (double v : e) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("Codebook: entry values must lie in [0,1]");
    }
  }
  for (std::size_t i = 0; i < entries_.size(); ++i)
    for (std::size_t j = i + 1; j < entries_.size(); ++j)
      if (entries_[i] == entries_[j]) throw ConfigError("Codebook: entries must be pairwise distinct");
}

int Codebook::nearest(std::span<const double> patch) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const double d = squared_distance(patch, entries_[k]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

std::vector<double> extract_patch(const Image& image, std::size_t f, std::size_t row, std::size_t col) {
  std::vector<double> patch;
  patch.reserve(f * f * image.channels);
  for (std::size_t py = 0; py < f; ++py)
    for (std::size_t px = 0; px < f; ++px)
      for (std::size_t c = 0; c < image.channels; ++c) patch.push_back(image.at(row * f + py, col * f + px, c));
  return patch;
}

std::vector<std::vector<double>> extract_patches(std::span<const Image> images, std::size_t f) {
  std::vector<std::vector<double>> patches;
  for (const Image& image : images) {
    check_extents(image, f);
    for (std::size_t r = 0; r < image.height / f; ++r)
      for (std::size_t c = 0; c < image.width / f; ++c) patches.push_back(extract_patch(image, f, r, c));
  }
  return patches;
}

Codebook fit_codebook(std::span<const Image> images, std::size_t k, std::size_t f, std::size_t iterations,
                      std::uint64_t seed) {
  if (images.empty()) throw ConfigError("fit_codebook: empty corpus");
  if (k == 0) throw ConfigError("fit_codebook: K must be positive");
  const std::size_t channels = images.front().channels;
  for (const Image& image : images) {
    if (image.channels != channels) throw DimensionError("fit_codebook: mixed channel counts");
  }
  const auto patches = extract_patches(images, f);

  auto distinct = patches;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (k > distinct.size()) {
    throw ConfigError("fit_codebook: K=" + std::to_string(k) + " exceeds the " + std::to_string(distinct.size()) +
                      " distinct patches in the corpus");
  }

  Rng rng(seed);
  const std::size_t n = patches.size();
  std::vector<std::vector<double>> centers;
  centers.push_back(patches[rng.below(n)]);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  while (centers.size() < k) {
    for (std::size_t i = 0; i < n; ++i) min_d[i] = std::min(min_d[i], squared_distance(patches[i], centers.back()));
    centers.push_back(patches[rng.categorical(min_d)]);
  }

  std::vector<int> assign(n, -1);
  for (std::size_t iter = 0; iter < iterations; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = squared_distance(patches[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
    }
    if (!changed) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(patches.front().size(), 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[static_cast<std::size_t>(assign[i])];
      for (std::size_t j = 0; j < s.size(); ++j) s[j] += patches[i][j];
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < sums[c].size(); ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = squared_distance(patches[i], centers[static_cast<std::size_t>(assign[i])]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centers[c] = patches[far];
      assign[far] = static_cast<int>(c);
    }
  }
  for (auto& center : centers)
    for (double& v : center) v = std::clamp(v, 0.0, 1.0);
  return Codebook(f, channels, std::move(centers));
}

TokenGrid encode(const Image& image, const Codebook& codebook) {
  const std::size_t f = codebook.patch_size();
  check_extents(image, f);
  if (image.channels != codebook.channels()) throw DimensionError("encode: channel count differs from codebook");
  TokenGrid grid(image.height / f, image.width / f);
  for (std::size_t r = 0; r < grid.rows; ++r)
    for (std::size_t c = 0; c < grid.cols; ++c) grid.at(r, c) = codebook.nearest(extract_patch(image, f, r, c));
  return grid;
}

Image decode(const TokenGrid& grid, const Codebook& codebook) {
  grid.check_vocab(codebook.size());
  const std::size_t f = codebook.patch_size();
  const std::size_t ch = codebook.channels();
  Image image(grid.rows * f, grid.cols * f, ch);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      auto entry = codebook.entry(static_cast<std::size_t>(grid.at(r, c)));
      std::size_t j = 0;
      for (std::size_t py = 0; py < f; ++py)
        for (std::size_t px = 0; px < f; ++px)
          for (std::size_t k = 0; k < ch; ++k) image.at(r * f + py, c * f + px, k) = std::clamp(entry[j++], 0.0, 1.0);
    }
  }
  return image;
}

ShrinkResult shrink_codebook(const Codebook& codebook, std::span<const Image> corpus, std::uint64_t seed) {
  std::vector<bool> used(codebook.size(), false);
  for (const Image& image : corpus)
    for (int t : encode(image, codebook).tokens) used[static_cast<std::size_t>(t)] = true;

  std::vector<int> retained;
  std::vector<std::vector<double>> entries;
  std::vector<int> remap(codebook.size(), -1);
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    if (!used[k]) continue;
    remap[k] = static_cast<int>(retained.size());
    retained.push_back(static_cast<int>(k));
    entries.emplace_back(codebook.entry(k).begin(), codebook.entry(k).end());
  }
  if (retained.empty()) throw ConfigError("shrink_codebook: corpus is empty");
  Rng rng(seed);
  for (int& r : remap) {
    if (r < 0) r = static_cast<int>(rng.below(retained.size()));
  }
  return {Codebook(codebook.patch_size(), codebook.channels(), std::move(entries)), std::move(remap), std::move(retained)};
}

TokenGrid apply_remap(const TokenGrid& grid, std::span<const int> remap) {
  grid.check_vocab(remap.size());
  TokenGrid out = grid;
  for (int& t : out.tokens) t = remap[static_cast<std::size_t>(t)];
  return out;
}

ReconstructionReport reconstruction_report(std::span<const Image> images, const Codebook& codebook) {
  ReconstructionReport report;
  for (const Image& image : images) {
    report.per_image_mse.push_back(mean_squared_error(decode(encode(image, codebook), codebook), image));
    report.mean_mse += report.per_image_mse.back();
  }
  if (!images.empty()) report.mean_mse /= static_cast<double>(images.size());
  return report;
}

double within_cluster_sse(std::span<const Image> images, const Codebook& codebook) {
  double total = 0.0;
  for (const auto& patch : extract_patches(images, codebook.patch_size()))
    total += squared_distance(patch, codebook.entry(static_cast<std::size_t>(codebook.nearest(patch))));
  return total;
}

std::vector<int> vertical_mirror_table(const Codebook& codebook) {
  const std::size_t f = codebook.patch_size();
  const std::size_t row_len = f * codebook.channels();
  std::vector<int> table;
  for (std::size_t k = 0; k < codebook.size(); ++k) {
    auto e = codebook.entry(k);
    std::vector<double> flipped(e.size());
    for (std::size_t py = 0; py < f; ++py)
      std::copy_n(e.begin() + static_cast<std::ptrdiff_t>(py * row_len), row_len,
                  flipped.begin() + static_cast<std::ptrdiff_t>((f - 1 - py) * row_len));
    table.push_back(codebook.nearest(flipped));
  }
  return table;
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  binary::write_magic(out, kCodebookMagic);
  binary::write_u64(out, codebook.size());
  binary::write_u64(out, codebook.patch_size());
  binary::write_u64(out, codebook.channels());
  for (const auto& e : codebook.entries())
    for (double v : e) binary::write_f64(out, v);
  if (!out) throw IoError("failed writing " + path.string());
}

Codebook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  binary::expect_magic(in, kCodebookMagic, path.string());
  const std::uint64_t k = binary::read_u64(in);
  const std::uint64_t f = binary::read_u64(in);
  const std::uint64_t ch = binary::read_u64(in);
  if (k == 0 || k > (1u << 20) || f == 0 || f > 1024 || (ch != 1 && ch != 3)) throw IoError(path.string() + ": bad header");
  std::vector<std::vector<double>> entries(k, std::vector<double>(f * f * ch));
  for (auto& e : entries)
    for (double& v : e) v = binary::read_f64(in);
  return Codebook(f, ch, std::move(entries));
}

}  // namespace mdchain::vq
