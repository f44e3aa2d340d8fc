#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mdchain/token_grid.hpp"
#include "mdchain/vq/image.hpp"

namespace mdchain::vq {

// K patch vectors of length f*f*channels. Defines deterministic encoding
// (nearest entry) and decoding (patch pasting).
class Codebook {
 public:
  Codebook(std::size_t patch_size, std::size_t channels, std::vector<std::vector<double>> entries);

  std::size_t size() const { return entries_.size(); }
  std::size_t patch_size() const { return patch_size_; }
  std::size_t channels() const { return channels_; }
  std::size_t patch_length() const { return patch_size_ * patch_size_ * channels_; }
  std::span<const double> entry(std::size_t k) const { return entries_[k]; }
  const std::vector<std::vector<double>>& entries() const { return entries_; }

  // Index of the nearest entry in squared Euclidean distance, lowest index on ties.
  int nearest(std::span<const double> patch) const;

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::size_t patch_size_;
  std::size_t channels_;
  std::vector<std::vector<double>> entries_;
};

// Patch at token cell (row, col), flattened row-major with interleaved channels.
std::vector<double> extract_patch(const Image& image, std::size_t patch_size, std::size_t row, std::size_t col);
std::vector<std::vector<double>> extract_patches(std::span<const Image> images, std::size_t patch_size);

// k-means over all patches: k-means++ seeding, Lloyd iterations until the
// assignment stops changing or `iterations` is reached; empty clusters are
// reseeded with the patch farthest from its centroid.
Codebook fit_codebook(std::span<const Image> images, std::size_t k, std::size_t patch_size, std::size_t iterations,
                      std::uint64_t seed);

TokenGrid encode(const Image& image, const Codebook& codebook);
Image decode(const TokenGrid& grid, const Codebook& codebook);

struct ShrinkResult {
  Codebook codebook;
  std::vector<int> remap;  // old index -> new index
  std::vector<int> retained;  // new index -> old index
};

// Keeps only entries used when encoding `corpus`. Unused old indices are sent
// to a retained entry chosen uniformly with the seeded generator.
ShrinkResult shrink_codebook(const Codebook& codebook, std::span<const Image> corpus, std::uint64_t seed);

TokenGrid apply_remap(const TokenGrid& grid, std::span<const int> remap);

struct ReconstructionReport {
  std::vector<double> per_image_mse;
  double mean_mse = 0.0;
};

ReconstructionReport reconstruction_report(std::span<const Image> images, const Codebook& codebook);

// Sum of squared distances from every patch to its nearest entry.
double within_cluster_sse(std::span<const Image> images, const Codebook& codebook);

// For each entry, the index nearest to its vertically flipped patch.
std::vector<int> vertical_mirror_table(const Codebook& codebook);

// Binary format: 8-byte magic, K, f, channels as uint64 LE, then K*f*f*channels
// doubles LE.
void save_codebook(const std::filesystem::path& path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace mdchain::vq
