#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mdchain {

// h x w grid of codebook indices, unrolled row-major (top-left first).
struct TokenGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> tokens;

  TokenGrid() = default;
  TokenGrid(std::size_t r, std::size_t c, int fill = 0) : rows(r), cols(c), tokens(r * c, fill) {}
  TokenGrid(std::size_t r, std::size_t c, std::vector<int> values);

  std::size_t size() const { return tokens.size(); }
  int& at(std::size_t r, std::size_t c) { return tokens[r * cols + c]; }
  int at(std::size_t r, std::size_t c) const { return tokens[r * cols + c]; }
  int& operator[](std::size_t i) { return tokens[i]; }
  int operator[](std::size_t i) const { return tokens[i]; }
  std::span<const int> sequence() const { return tokens; }

  // Throws IndexError when any entry lies outside {0..vocab-1}.
  void check_vocab(std::size_t vocab) const;

  friend bool operator==(const TokenGrid&, const TokenGrid&) = default;
};

}  // namespace mdchain
