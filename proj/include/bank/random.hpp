#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "bank/core.hpp"

namespace bank {

/// Anything the samplers can draw from. All randomness in the library flows
/// through a value satisfying this concept; nothing reads ambient entropy.
template <class R>
concept RandomSource = requires(R& r, double a, std::uint64_t n) {
  { r.normal() } -> std::convertible_to<double>;
  { r.uniform() } -> std::convertible_to<double>;
  { r.gamma(a) } -> std::convertible_to<double>;
  { r.below(n) } -> std::convertible_to<std::uint64_t>;
};

/// Seedable generator backed by a 64-bit Mersenne twister.
class Rng {
 public:
  using result_type = std::mt19937_64::result_type;

  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  /// Independent child stream derived from (seed, stream).
  static Rng stream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    Rng rng;
    rng.engine_.seed(seq);
    return rng;
  }

  double normal() { return normal_(engine_); }
  /// Uniform on [0, 1).
  double uniform() { return std::generate_canonical<double, 53>(engine_); }
  /// Gamma(shape, scale = 1).
  double gamma(double shape) { return std::gamma_distribution<double>(shape, 1.0)(engine_); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  // UniformRandomBitGenerator surface, so the engine can feed std algorithms.
  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

static_assert(RandomSource<Rng>);

template <RandomSource R>
Vector standard_normal_vector(R& rng, Index n) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

template <RandomSource R>
double chi_squared(R& rng, double dof) {
  return 2.0 * rng.gamma(0.5 * dof);
}

/// Cauchy(0, scale) by inversion.
template <RandomSource R>
double cauchy(R& rng, double scale) {
  return scale * std::tan(std::numbers::pi * (rng.uniform() - 0.5));
}

/// Laplace(0, scale) by inversion.
template <RandomSource R>
double laplace(R& rng, double scale) {
  const double u = rng.uniform() - 0.5;
  const double sign = u < 0.0 ? -1.0 : 1.0;
  return -scale * sign * std::log1p(-2.0 * std::abs(u));
}

/// Index drawn proportionally to nonnegative weights (need not be normalized).
template <RandomSource R>
std::size_t categorical(R& rng, std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double target = rng.uniform() * total;
  double acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    acc += weights[k];
    if (target < acc) return k;
  }
  // Rounding: fall back to the last index with positive weight.
  for (std::size_t k = weights.size(); k-- > 0;) {
    if (weights[k] > 0.0) return k;
  }
  return weights.size() - 1;
}

/// Fisher-Yates permutation of 0..n-1.
template <RandomSource R>
std::vector<Index> permutation(R& rng, Index n) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (Index i = n - 1; i > 0; --i) {
    const auto k = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(k)]);
  }
  return order;
}

}  // namespace bank
