#pragma once

#include <vector>

#include "locedit/errors.hpp"

namespace locedit {

// Text-encoder output, [tokens, dim] row-major.
struct Conditioning {
  int tokens = 0;
  int dim = 0;
  std::vector<double> data;

  Conditioning() = default;
  Conditioning(int tokens_, int dim_) : tokens(tokens_), dim(dim_), data(static_cast<std::size_t>(tokens_) * dim_, 0.0) {}

  double& at(int token, int d) { return data[static_cast<std::size_t>(token) * dim + d]; }
  double at(int token, int d) const { return data[static_cast<std::size_t>(token) * dim + d]; }

  // Sum over tokens.
  std::vector<double> pooled() const {
    std::vector<double> out(dim, 0.0);
    for (int t = 0; t < tokens; ++t) {
      for (int d = 0; d < dim; ++d) out[d] += at(t, d);
    }
    return out;
  }
};

}  // namespace locedit
