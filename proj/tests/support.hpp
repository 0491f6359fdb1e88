#pragma once

#include <cstdint>

#include "bank/core.hpp"
#include "bank/random.hpp"

namespace bank::testing {

/// Deterministic "no noise" source: every normal draw is 0, uniforms are 0.
struct ZeroRng {
  double normal() { return 0.0; }
  double uniform() { return 0.0; }
  double gamma(double shape) { return shape; }
  std::uint64_t below(std::uint64_t) { return 0; }
};
static_assert(RandomSource<ZeroRng>);

inline Matrix random_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline Vector random_vector(Rng& rng, Index n, double scale = 1.0) { return random_matrix(rng, n, 1, scale).col(0); }

}  // namespace bank::testing
