#pragma once

// Random Fourier features and closed-form Gaussian-mixture kernels.
//
// Feature layout is [cos block | sin block]: for frequencies w_1..w_M,
//   phi(x) = M^{-1/2} [cos(w_1.x) .. cos(w_M.x), sin(w_1.x) .. sin(w_M.x)]
// so frequency j owns columns j and M + j of any design matrix.

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "bank/core.hpp"
#include "bank/linalg.hpp"
#include "bank/random.hpp"

namespace bank {

/// M x d matrix whose rows are frequency vectors. Entries are always finite.
class FrequencyMatrix {
 public:
  FrequencyMatrix() = default;

  explicit FrequencyMatrix(Matrix w) : w_(std::move(w)) {
    if (w_.rows() < 1 || w_.cols() < 1) {
      throw std::invalid_argument("FrequencyMatrix needs M >= 1 and d >= 1");
    }
    if (!w_.allFinite()) throw std::invalid_argument("FrequencyMatrix has non-finite entries");
  }

  Index count() const noexcept { return w_.rows(); }
  Index dim() const noexcept { return w_.cols(); }
  const Matrix& matrix() const noexcept { return w_; }
  auto row(Index j) const { return w_.row(j); }

  void set_row(Index j, const Eigen::Ref<const Vector>& omega) {
    require_dim("FrequencyMatrix::set_row", dim(), omega.size());
    if (!omega.allFinite()) throw std::invalid_argument("FrequencyMatrix row is non-finite");
    w_.row(j) = omega.transpose();
  }

  friend bool operator==(const FrequencyMatrix& a, const FrequencyMatrix& b) {
    return a.w_.rows() == b.w_.rows() && a.w_.cols() == b.w_.cols() && a.w_ == b.w_;
  }

 private:
  Matrix w_;
};

/// phi(x) of length 2M, unit Euclidean norm.
using FeatureVector = Vector;

inline FeatureVector feature_map(const Eigen::Ref<const Vector>& x, const FrequencyMatrix& w) {
  require_dim("feature_map", w.dim(), x.size());
  const Index m = w.count();
  const Vector proj = w.matrix() * x;
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  FeatureVector phi(2 * m);
  phi.head(m) = proj.array().cos() * scale;
  phi.tail(m) = proj.array().sin() * scale;
  return phi;
}

inline double kernel_estimate(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                              const FrequencyMatrix& w) {
  require_dim("kernel_estimate", x.size(), y.size());
  return feature_map(x, w).dot(feature_map(y, w));
}

/// Design matrix Phi (N x 2M) whose row i is feature_map(X_i, W).
inline Matrix build_design(const Matrix& x, const FrequencyMatrix& w) {
  require_dim("build_design", w.dim(), x.cols());
  const Index m = w.count();
  const Matrix proj = x * w.matrix().transpose();
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  Matrix phi(x.rows(), 2 * m);
  phi.leftCols(m) = proj.array().cos() * scale;
  phi.rightCols(m) = proj.array().sin() * scale;
  return phi;
}

/// The (cos, sin) design columns contributed by a single frequency among M.
inline std::pair<Vector, Vector> frequency_columns(const Matrix& x, const Eigen::Ref<const Vector>& omega,
                                                   Index m) {
  require_dim("frequency_columns", omega.size(), x.cols());
  const Vector proj = x * omega;
  const double scale = 1.0 / std::sqrt(static_cast<double>(m));
  return {proj.array().cos() * scale, proj.array().sin() * scale};
}

struct MixtureComponent {
  double weight = 1.0;
  Vector mean;
  Matrix cov;
};

/// Gaussian mixture spectral density; each component is (weight, mean, covariance).
struct GaussianMixtureSpec {
  std::vector<MixtureComponent> components;

  Index dim() const { return components.empty() ? 0 : components.front().mean.size(); }

  /// Throws unless weights are positive and sum to one and every covariance is SPD.
  void validate() const {
    if (components.empty()) throw std::invalid_argument("mixture spec has no components");
    double total = 0.0;
    const Index d = dim();
    for (const auto& c : components) {
      if (!(c.weight > 0.0)) throw std::invalid_argument("mixture weight must be positive");
      require_dim("mixture component mean", d, c.mean.size());
      require_dim("mixture component covariance", d, c.cov.rows());
      if ((c.cov - c.cov.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + c.cov.cwiseAbs().maxCoeff())) {
        throw InvalidCovarianceError("mixture covariance is not symmetric");
      }
      checked_cholesky(c.cov, "mixture covariance");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
  }
};

/// Real part of the mixture kernel at lag t:
///   k(t) = sum_k pi_k exp(-t' S_k t / 2) cos(mu_k' t).
inline double mixture_kernel_eval(const Eigen::Ref<const Vector>& t, const GaussianMixtureSpec& spec) {
  double value = 0.0;
  for (const auto& c : spec.components) {
    require_dim("mixture_kernel_eval", c.mean.size(), t.size());
    value += c.weight * std::exp(-0.5 * t.dot(c.cov * t)) * std::cos(c.mean.dot(t));
  }
  return value;
}

inline double mixture_pdf(const Eigen::Ref<const Vector>& omega, const GaussianMixtureSpec& spec) {
  double density = 0.0;
  for (const auto& c : spec.components) {
    require_dim("mixture_pdf", c.mean.size(), omega.size());
    const Cholesky chol = checked_cholesky(c.cov, "mixture covariance");
    density += c.weight * std::exp(log_normal_pdf(omega, c.mean, chol, log_det(chol)));
  }
  return density;
}

/// M i.i.d. draws from the mixture: component by weight, then a Gaussian draw.
template <RandomSource R>
FrequencyMatrix sample_frequencies(const GaussianMixtureSpec& spec, Index m, R& rng) {
  if (m < 1) throw std::invalid_argument("sample_frequencies needs M >= 1");
  const Index d = spec.dim();
  std::vector<double> weights;
  std::vector<Cholesky> factors;
  for (const auto& c : spec.components) {
    weights.push_back(c.weight);
    factors.push_back(checked_cholesky(c.cov, "mixture covariance"));
  }
  Matrix w(m, d);
  for (Index j = 0; j < m; ++j) {
    const std::size_t k = categorical(rng, std::span<const double>(weights));
    w.row(j) = normal_draw(rng, spec.components[k].mean, factors[k]).transpose();
  }
  return FrequencyMatrix(std::move(w));
}

/// The one-dimensional two-component spectral density used for kernel-recovery
/// experiments: 1/2 N(0, 1/4) + 1/2 N(3 pi / 4, 1/4), i.e.
///   k(t) = exp(-t^2 / 8) (1/2 + 1/2 cos(3 pi t / 4)).
inline GaussianMixtureSpec two_bump_spectrum() {
  GaussianMixtureSpec spec;
  spec.components.push_back({0.5, Vector::Constant(1, 0.0), Matrix::Constant(1, 1, 0.25)});
  spec.components.push_back({0.5, Vector::Constant(1, 0.75 * std::numbers::pi), Matrix::Constant(1, 1, 0.25)});
  return spec;
}

}  // namespace bank
