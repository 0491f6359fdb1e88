#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "bank/core.hpp"
#include "bank/random.hpp"

namespace bank {

using Cholesky = Eigen::LLT<Matrix, Eigen::Lower>;

/// Factorizes a symmetric positive-definite matrix; non-PD input is an error,
/// never silently regularized.
inline Cholesky checked_cholesky(const Matrix& a, const std::string& what) {
  if (a.rows() != a.cols()) throw DimensionError(what + " must be square", a.rows(), a.cols());
  if (!a.allFinite()) throw InvalidCovarianceError(what + ": non-finite entries");
  Cholesky llt(a);
  if (llt.info() != Eigen::Success) throw InvalidCovarianceError(what + ": not positive definite");
  return llt;
}

inline double log_det(const Cholesky& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

/// log N(x | mean, L L^T) given the lower factor L and log|L L^T|.
inline double log_normal_pdf(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& mean,
                             const Cholesky& chol, double logdet) {
  const Vector z = chol.matrixL().solve(x - mean);
  const double d = static_cast<double>(x.size());
  return -0.5 * (d * std::log(2.0 * std::numbers::pi) + logdet + z.squaredNorm());
}

/// Draw from N(mean, L L^T).
template <RandomSource R>
Vector normal_draw(R& rng, const Vector& mean, const Cholesky& chol) {
  return mean + chol.matrixL() * standard_normal_vector(rng, mean.size());
}

inline double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double peak = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(peak)) return peak;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - peak);
  return peak + std::log(acc);
}

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix symmetrized(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace bank
