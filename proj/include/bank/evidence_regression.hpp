#pragma once

// Conjugate Normal-Inverse-Gamma linear regression over random features:
//   sigma_e^2 ~ IG(a0, b0),  beta | sigma_e^2 ~ N(mu_beta, sigma_e^2 Lambda0^{-1}),
//   Y | beta, sigma_e^2 ~ N(Phi beta, sigma_e^2 I),   Lambda0 = I / sigma^2.
// Everything is kept in log space; determinants come from Cholesky factors.

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <utility>

#include "bank/core.hpp"
#include "bank/linalg.hpp"
#include "bank/rff.hpp"

namespace bank {

struct NigPrior {
  Vector mean;  // mu_beta, length 2M
  double sigma = 1.0;
  double a0 = 1.0;
  double b0 = 1.0;

  double precision() const { return 1.0 / (sigma * sigma); }

  void validate() const {
    if (!(sigma > 0.0) || !(a0 > 0.0) || !(b0 > 0.0)) {
      throw std::invalid_argument("NIG prior needs sigma, a0, b0 > 0");
    }
  }

  static NigPrior defaults(Index features, double sigma = 1.0, double a0 = 1.0, double b0 = 1.0) {
    return {Vector::Zero(features), sigma, a0, b0};
  }
};

/// Posterior statistics (Lambda_n, mu_n, a_n, b_n) plus the cached factor of
/// Lambda_n and z = L^{-1} r with r = Lambda0 mu_beta + Phi^T Y.
class RegressionPosterior {
 public:
  RegressionPosterior() = default;

  RegressionPosterior(Cholesky chol, Vector rhs, double a_n, double b_n, Index n_obs, double log_evidence)
      : chol_(std::move(chol)), rhs_(std::move(rhs)), a_n_(a_n), b_n_(b_n), n_obs_(n_obs),
        log_evidence_(log_evidence) {}

  const Cholesky& chol() const noexcept { return chol_; }
  Matrix precision() const { return chol_.reconstructedMatrix(); }
  Vector mean() const { return chol_.solve(rhs_); }
  const Vector& rhs() const noexcept { return rhs_; }
  double a_n() const noexcept { return a_n_; }
  double b_n() const noexcept { return b_n_; }
  Index n_obs() const noexcept { return n_obs_; }
  Index features() const noexcept { return rhs_.size(); }
  double log_evidence() const noexcept { return log_evidence_; }
  /// Set when a rank-update swap fell back to a full refactorization.
  bool refactorized() const noexcept { return refactorized_; }
  void mark_refactorized() noexcept { refactorized_ = true; }

 private:
  Cholesky chol_;
  Vector rhs_;
  double a_n_ = 0.0;
  double b_n_ = 0.0;
  Index n_obs_ = 0;
  double log_evidence_ = 0.0;
  bool refactorized_ = false;

  friend class RegressionSwap;
};

namespace detail {

/// log P(Y | X, W) given the pieces of the posterior:
///   -N/2 log 2pi + lgamma(a_n) - lgamma(a0) + a0 log b0 - a_n log b_n + (log|L0| - log|Ln|) / 2
inline double nig_log_evidence(const NigPrior& prior, Index n_obs, double a_n, double b_n, double log_det_n,
                               Index features) {
  if (n_obs == 0) return 0.0;
  const double log_det_0 = static_cast<double>(features) * std::log(prior.precision());
  return -0.5 * static_cast<double>(n_obs) * std::log(2.0 * std::numbers::pi) + std::lgamma(a_n) -
         std::lgamma(prior.a0) + prior.a0 * std::log(prior.b0) - a_n * std::log(b_n) +
         0.5 * (log_det_0 - log_det_n);
}

inline RegressionPosterior finish_posterior(Cholesky chol, Vector rhs, double yty, Index n_obs,
                                            const NigPrior& prior) {
  const Vector z = chol.matrixL().solve(rhs);
  const double a_n = prior.a0 + 0.5 * static_cast<double>(n_obs);
  const double prior_quad = prior.precision() * prior.mean.squaredNorm();
  double b_n = prior.b0 + 0.5 * (yty + prior_quad - z.squaredNorm());
  if (n_obs == 0) b_n = prior.b0;
  const double logev = nig_log_evidence(prior, n_obs, a_n, b_n, log_det(chol), rhs.size());
  return RegressionPosterior(std::move(chol), std::move(rhs), a_n, b_n, n_obs, logev);
}

}  // namespace detail

/// Exact conjugate posterior for design Phi (N x 2M) and targets Y.
inline RegressionPosterior fit_posterior(const Matrix& phi, const Vector& y, const NigPrior& prior) {
  require_dim("fit_posterior targets", phi.rows(), y.size());
  require_dim("fit_posterior prior mean", phi.cols(), prior.mean.size());
  const Index n = phi.cols();
  Matrix precision = Matrix::Identity(n, n) * prior.precision();
  precision.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
  precision.triangularView<Eigen::StrictlyUpper>() = precision.transpose();
  Cholesky chol(precision);
  if (chol.info() != Eigen::Success) throw InvalidCovarianceError("posterior precision is not positive definite");
  Vector rhs = prior.precision() * prior.mean + phi.transpose() * y;
  return detail::finish_posterior(std::move(chol), std::move(rhs), y.squaredNorm(), phi.rows(), prior);
}

inline double log_evidence(const RegressionPosterior& post, const NigPrior& prior) {
  return detail::nig_log_evidence(prior, post.n_obs(), post.a_n(), post.b_n(), log_det(post.chol()),
                                  post.features());
}

enum class SwapMode { rank_update, full_refit };

/// In-place trial swap of the design columns of one frequency, with undo.
///
/// Replacing column c of Phi by a column differing by d changes Lambda_n by
/// h e_c^T + e_c h^T with h = Phi^T d + |d|^2/2 e_c, which is applied to the
/// factor as the update (1/2) u u^T and the downdate (1/2) v v^T, where
/// u, v = h / t +- t e_c and t = |h|^{1/2}. Both updates go in before either
/// downdate so every intermediate matrix stays positive definite.
class RegressionSwap {
 public:
  /// Modifies `post` into the posterior for the design with columns j and
  /// M + j of `phi` replaced. `phi` is the design before the swap. Returns
  /// false when a downdate broke down; `post` is then unusable and must be
  /// refit from scratch.
  bool apply(RegressionPosterior& post, const Matrix& phi, Index j, const Vector& new_cos, const Vector& new_sin,
             const Vector& y, const NigPrior& prior) {
    const Index m = phi.cols() / 2;
    require_dim("swap cos column", phi.rows(), new_cos.size());
    require_dim("swap sin column", phi.rows(), new_sin.size());
    if (j < 0 || j >= m) throw std::out_of_range("swap: frequency index out of range");

    post.refactorized_ = false;
    saved_a_n_ = post.a_n_;
    saved_b_n_ = post.b_n_;
    saved_log_evidence_ = post.log_evidence_;
    saved_rhs_ = {post.rhs_(j), post.rhs_(m + j)};
    index_ = {j, m + j};
    for (auto& v : up_) v.resize(0);
    for (auto& v : down_) v.resize(0);

    Matrix delta(phi.rows(), 2);
    delta.col(0) = new_cos - phi.col(j);
    delta.col(1) = new_sin - phi.col(m + j);
    if ((delta.array() == 0.0).all()) return true;

    // Second column's h is taken on the design after column j has moved.
    const Matrix g = (delta.transpose() * phi).transpose();
    std::array<Vector, 2> h{g.col(0), g.col(1)};
    h[0](j) += 0.5 * delta.col(0).squaredNorm();
    h[1](j) += delta.col(0).dot(delta.col(1));
    h[1](m + j) += 0.5 * delta.col(1).squaredNorm();

    for (std::size_t i = 0; i < 2; ++i) {
      const double norm = h[i].norm();
      if (norm == 0.0) continue;
      const double t = std::sqrt(norm);
      up_[i] = h[i] / t;
      down_[i] = up_[i];
      up_[i](index_[i]) += t;
      down_[i](index_[i]) -= t;
      post.chol_.rankUpdate(up_[i], 0.5);
    }
    for (const auto& v : down_) {
      if (v.size() == 0) continue;
      post.chol_.rankUpdate(v, -0.5);
      if (post.chol_.info() != Eigen::Success) return false;
    }
    if (!post.chol_.matrixLLT().diagonal().allFinite()) return false;

    const double prior_term = prior.precision();
    post.rhs_(j) = prior_term * prior.mean(j) + new_cos.dot(y);
    post.rhs_(m + j) = prior_term * prior.mean(m + j) + new_sin.dot(y);
    refresh(post, y.squaredNorm(), prior);
    return true;
  }

  /// Undoes the last successful apply(). Returns false if the reverse
  /// downdate broke down (refit required).
  bool revert(RegressionPosterior& post) {
    for (const auto& v : down_) {
      if (v.size() != 0) post.chol_.rankUpdate(v, 0.5);
    }
    for (const auto& u : up_) {
      if (u.size() == 0) continue;
      post.chol_.rankUpdate(u, -0.5);
      if (post.chol_.info() != Eigen::Success) return false;
    }
    post.rhs_(index_[0]) = saved_rhs_[0];
    post.rhs_(index_[1]) = saved_rhs_[1];
    post.a_n_ = saved_a_n_;
    post.b_n_ = saved_b_n_;
    post.log_evidence_ = saved_log_evidence_;
    return post.chol_.matrixLLT().diagonal().allFinite();
  }

 private:
  static void refresh(RegressionPosterior& post, double yty, const NigPrior& prior) {
    const Vector z = post.chol_.matrixL().solve(post.rhs_);
    post.b_n_ = post.n_obs_ == 0 ? prior.b0
                                 : prior.b0 + 0.5 * (yty + prior.precision() * prior.mean.squaredNorm() - z.squaredNorm());
    post.log_evidence_ =
        detail::nig_log_evidence(prior, post.n_obs_, post.a_n_, post.b_n_, log_det(post.chol_), post.features());
  }

  std::array<Vector, 2> up_;
  std::array<Vector, 2> down_;
  std::array<Index, 2> index_{0, 0};
  std::array<double, 2> saved_rhs_{0.0, 0.0};
  double saved_a_n_ = 0.0;
  double saved_b_n_ = 0.0;
  double saved_log_evidence_ = 0.0;
};

/// Posterior after replacing design columns j (cos) and M + j (sin) of `phi`
/// with the supplied columns; `phi` is the design before the swap.
///
/// rank_update mode modifies a copy of Lambda_n's factor with two rank-one
/// updates and two downdates; if a downdate breaks down it falls back to a full
/// refit, flagged by refactorized() on the result.
inline RegressionPosterior swap_frequency_update(const RegressionPosterior& post, const Matrix& phi, Index j,
                                                 const Vector& new_cos, const Vector& new_sin, const Vector& y,
                                                 const NigPrior& prior, SwapMode mode = SwapMode::rank_update) {
  auto full_refit = [&] {
    Matrix swapped = phi;
    swapped.col(j) = new_cos;
    swapped.col(phi.cols() / 2 + j) = new_sin;
    return fit_posterior(swapped, y, prior);
  };
  if (mode == SwapMode::full_refit) return full_refit();
  RegressionPosterior next = post;
  RegressionSwap swap;
  if (!swap.apply(next, phi, j, new_cos, new_sin, y, prior)) {
    next = full_refit();
    next.mark_refactorized();
  }
  return next;
}

struct RegressionPrediction {
  double mean = 0.0;
  std::optional<double> variance;  // undefined when a_n <= 1
};

/// NIG posterior predictive: mean mu_n^T phi, variance b_n/(a_n-1) (1 + phi^T Lambda_n^{-1} phi).
inline RegressionPrediction predict_mean_var(const RegressionPosterior& post, const FeatureVector& phi_x) {
  require_dim("predict_mean_var", post.features(), phi_x.size());
  RegressionPrediction out;
  out.mean = post.mean().dot(phi_x);
  if (post.a_n() > 1.0) {
    const double quad = post.chol().matrixL().solve(phi_x).squaredNorm();
    out.variance = post.b_n() / (post.a_n() - 1.0) * (1.0 + quad);
  }
  return out;
}

/// log of the Student-t posterior predictive density of y at phi_x.
inline double log_predictive_density(const RegressionPosterior& post, const FeatureVector& phi_x, double y) {
  const double dof = 2.0 * post.a_n();
  const double loc = post.mean().dot(phi_x);
  const double scale2 = post.b_n() / post.a_n() * (1.0 + post.chol().matrixL().solve(phi_x).squaredNorm());
  const double r2 = (y - loc) * (y - loc) / scale2;
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) - 0.5 * std::log(dof * std::numbers::pi * scale2) -
         0.5 * (dof + 1.0) * std::log1p(r2 / dof);
}

}  // namespace bank
