#pragma once

// Logistic model over random features: Laplace approximation of the weight
// posterior and the Monte Carlo evidence-ratio estimator used to score
// frequency proposals.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "bank/core.hpp"
#include "bank/linalg.hpp"
#include "bank/random.hpp"
#include "bank/rff.hpp"

namespace bank {

/// Gaussian prior N(mean, precision^{-1}) on the logistic weights.
struct WeightPrior {
  Vector mean;
  Matrix precision;

  static WeightPrior isotropic(Index features, double sigma = 1.0) {
    return {Vector::Zero(features), Matrix::Identity(features, features) / (sigma * sigma)};
  }
};

inline void check_labels(const Vector& y) {
  for (Index i = 0; i < y.size(); ++i) {
    if (y(i) != 0.0 && y(i) != 1.0) {
      throw LabelError("class label at row " + std::to_string(i) + " is not 0 or 1");
    }
  }
}

/// sum_i y_i log s(eta_i) + (1 - y_i) log(1 - s(eta_i)) for precomputed eta = Phi beta.
inline double log_likelihood_from_margins(const Vector& eta, const Vector& y) {
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    ll -= y(i) == 1.0 ? softplus(-eta(i)) : softplus(eta(i));
  }
  return ll;
}

inline double log_likelihood_class(const Matrix& phi, const Vector& y, const Vector& beta) {
  require_dim("log_likelihood_class labels", phi.rows(), y.size());
  require_dim("log_likelihood_class weights", phi.cols(), beta.size());
  check_labels(y);
  return log_likelihood_from_margins(phi * beta, y);
}

struct LaplaceOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;  // relative: tol * (1 + |objective|)
  const Vector* warm_start = nullptr;
};

/// Gaussian approximation N(mode, S_n^{-1}) of the logistic weight posterior.
struct LaplacePosterior {
  Vector mode;
  Matrix hessian;  // S_n = Lambda0 + Phi^T D Phi at the mode
  Cholesky chol;   // of S_n
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  double objective = 0.0;
  std::vector<double> objective_trace;  // log-posterior after each accepted step, starting point first
};

namespace detail {

inline double log_posterior_objective(const Vector& eta, const Vector& y, const Vector& beta,
                                      const WeightPrior& prior) {
  const Vector diff = beta - prior.mean;
  return log_likelihood_from_margins(eta, y) - 0.5 * diff.dot(prior.precision * diff);
}

}  // namespace detail

/// Mode of the log posterior by damped Newton (IRLS) with backtracking.
/// Non-convergence is reported through `converged`, carrying the best iterate.
inline LaplacePosterior fit_laplace(const Matrix& phi, const Vector& y, const WeightPrior& prior,
                                    const LaplaceOptions& options = {}) {
  require_dim("fit_laplace labels", phi.rows(), y.size());
  require_dim("fit_laplace prior mean", phi.cols(), prior.mean.size());
  check_labels(y);

  LaplacePosterior lap;
  Vector beta = options.warm_start ? *options.warm_start : prior.mean;
  Vector eta = phi * beta;
  double objective = detail::log_posterior_objective(eta, y, beta, prior);
  lap.objective_trace.push_back(objective);

  auto gradient_at = [&](const Vector& b, const Vector& e) {
    Vector resid(e.size());
    for (Index i = 0; i < e.size(); ++i) resid(i) = y(i) - sigmoid(e(i));
    return Vector(phi.transpose() * resid - prior.precision * (b - prior.mean));
  };
  auto hessian_at = [&](const Vector& e) {
    Matrix weighted = phi;
    for (Index i = 0; i < e.size(); ++i) {
      const double p = sigmoid(e(i));
      weighted.row(i) *= std::sqrt(p * (1.0 - p));
    }
    Matrix h = prior.precision;
    h.selfadjointView<Eigen::Lower>().rankUpdate(weighted.transpose());
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    return h;
  };

  Vector grad = gradient_at(beta, eta);
  Matrix hess = hessian_at(eta);
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    if (grad.cwiseAbs().maxCoeff() < options.gradient_tolerance * (1.0 + std::abs(objective))) {
      lap.converged = true;
      break;
    }
    const Cholesky step_chol = checked_cholesky(hess, "logistic Hessian");
    const Vector step = step_chol.solve(grad);
    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 60; ++halving, t *= 0.5) {
      const Vector candidate = beta + t * step;
      const Vector cand_eta = phi * candidate;
      const double cand_obj = detail::log_posterior_objective(cand_eta, y, candidate, prior);
      if (cand_obj >= objective) {
        beta = candidate;
        eta = cand_eta;
        objective = cand_obj;
        improved = true;
        break;
      }
    }
    if (!improved) break;  // stalled at floating-point resolution
    lap.objective_trace.push_back(objective);
    grad = gradient_at(beta, eta);
    hess = hessian_at(eta);
  }
  if (!lap.converged) {
    lap.converged = grad.cwiseAbs().maxCoeff() < options.gradient_tolerance * (1.0 + std::abs(objective));
  }
  if (lap.converged) {
    // The relative tolerance is loose on large data; one more Newton step is
    // nearly free at quadratic convergence and tightens the mode a lot.
    const Vector candidate = beta + checked_cholesky(hess, "logistic Hessian").solve(grad);
    const Vector cand_eta = phi * candidate;
    const double cand_obj = detail::log_posterior_objective(cand_eta, y, candidate, prior);
    if (cand_obj >= objective) {
      const Vector cand_grad = gradient_at(candidate, cand_eta);
      if (cand_grad.cwiseAbs().maxCoeff() <= grad.cwiseAbs().maxCoeff()) {
        beta = candidate;
        eta = cand_eta;
        objective = cand_obj;
        grad = cand_grad;
        hess = hessian_at(eta);
        lap.objective_trace.push_back(objective);
      }
    }
  }
  lap.iterations = iter;
  lap.gradient_norm = grad.cwiseAbs().maxCoeff();
  lap.objective = objective;
  lap.mode = std::move(beta);
  lap.chol = checked_cholesky(hess, "logistic Hessian");
  lap.hessian = std::move(hess);
  return lap;
}

/// L draws (rows) from N(mode, S_n^{-1}): beta = mode + L^{-T} eps.
template <RandomSource R>
Matrix sample_beta_laplace(const LaplacePosterior& lap, Index count, R& rng) {
  const Index n = lap.mode.size();
  Matrix draws(count, n);
  for (Index l = 0; l < count; ++l) {
    const Vector eps = standard_normal_vector(rng, n);
    draws.row(l) = (lap.mode + lap.chol.matrixU().solve(eps)).transpose();
  }
  return draws;
}

/// min(1, mean_l exp(loglik_star_l - loglik_current_l)), averaged in log space.
inline double evidence_ratio_from_loglik(const std::vector<double>& log_ratios) {
  const double log_mean = log_sum_exp(log_ratios) - std::log(static_cast<double>(log_ratios.size()));
  return std::exp(std::min(0.0, log_mean));
}

/// Evidence-ratio estimate for replacing the current design by `phi_star`,
/// using weight draws from the Laplace posterior under the current design.
template <RandomSource R>
double evidence_ratio_class(const Matrix& phi_star, const Matrix& phi_current, const Vector& y,
                            const LaplacePosterior& lap_current, Index count, R& rng) {
  require_dim("evidence_ratio_class", phi_current.cols(), phi_star.cols());
  const Matrix draws = sample_beta_laplace(lap_current, count, rng);
  const Matrix eta_star = phi_star * draws.transpose();
  const Matrix eta_cur = phi_current * draws.transpose();
  std::vector<double> log_ratios(static_cast<std::size_t>(count));
  for (Index l = 0; l < count; ++l) {
    log_ratios[static_cast<std::size_t>(l)] =
        log_likelihood_from_margins(eta_star.col(l), y) - log_likelihood_from_margins(eta_cur.col(l), y);
  }
  return evidence_ratio_from_loglik(log_ratios);
}

/// Predictive class-1 probability. Moderated by default:
///   s(kappa(s2) mode^T phi),  s2 = phi^T S_n^{-1} phi,  kappa = (1 + pi s2 / 8)^{-1/2}.
inline double predict_proba(const LaplacePosterior& lap, const FeatureVector& phi_x, bool moderated = true) {
  require_dim("predict_proba", lap.mode.size(), phi_x.size());
  const double margin = lap.mode.dot(phi_x);
  if (!moderated) return sigmoid(margin);
  const double s2 = lap.chol.matrixL().solve(phi_x).squaredNorm();
  return sigmoid(margin / std::sqrt(1.0 + std::numbers::pi * s2 / 8.0));
}

/// Laplace estimate of log P(Y | X, W): objective at the mode plus the Gaussian
/// normalizer of the prior and of the approximation.
inline double laplace_log_evidence(const LaplacePosterior& lap, const WeightPrior& prior) {
  const Cholesky prior_chol = checked_cholesky(prior.precision, "weight prior precision");
  return lap.objective + 0.5 * log_det(prior_chol) - 0.5 * log_det(lap.chol);
}

}  // namespace bank
