#include "mdchain/token_grid.hpp"

#include <string>

#include "mdchain/error.hpp"

namespace mdchain {

TokenGrid::TokenGrid(std::size_t r, std::size_t c, std::vector<int> values) : rows(r), cols(c), tokens(std::move(values)) {
  if (tokens.size() != rows * cols) throw DimensionError("TokenGrid: value count does not match extents");
}

void TokenGrid::check_vocab(std::size_t vocab) const {
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw IndexError("token " + std::to_string(t) + " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

}  // namespace mdchain
