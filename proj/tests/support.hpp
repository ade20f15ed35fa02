#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <cstdint>
#include <vector>

#include "fedpoison/model.hpp"
#include "fedpoison/rng.hpp"

namespace fedpoison::testing {

inline std::vector<Example> random_batch(const ModelShape& shape, std::size_t n,
                                         std::size_t max_len, Rng& rng) {
  std::vector<Example> batch(n);
  for (Example& e : batch) {
    const std::size_t len = 1 + uniform_index(rng, max_len);
    for (std::size_t i = 0; i < len; ++i) {
      e.tokens.push_back(static_cast<TokenId>(uniform_index(rng, shape.vocab)));
    }
    e.label = static_cast<Label>(uniform_index(rng, shape.classes));
  }
  return batch;
}

inline ParamVector random_vector(const ModelShape& shape, Rng& rng, double scale = 1.0) {
  ParamVector v(shape);
  for (double& x : v.values()) x = scale * (2.0 * uniform01(rng) - 1.0);
  return v;
}

}  // namespace fedpoison::testing
