#pragma once

// Collapsed Dirichlet-process Gaussian mixture over the random frequencies.
// Mixture weights are integrated out (Chinese restaurant process), so only
// assignments, per-component counts and component (mean, covariance) live in
// the state.

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bank/core.hpp"
#include "bank/linalg.hpp"
#include "bank/random.hpp"
#include "bank/rff.hpp"

namespace bank {

/// Normal-Inverse-Wishart parameters (mu0, kappa0, Psi0, nu0). The same type
/// carries prior and posterior hyperparameters, so posteriors chain as priors.
struct NiwParams {
  Vector mean;
  double kappa = 1.0;
  Matrix scale;
  double dof = 3.0;

  Index dim() const { return mean.size(); }

  void validate() const {
    const Index d = dim();
    if (d < 1) throw std::invalid_argument("NIW mean must be nonempty");
    require_dim("NIW scale matrix", d, scale.rows());
    require_dim("NIW scale matrix", d, scale.cols());
    if (!(kappa > 0.0)) throw std::invalid_argument("NIW kappa must be positive");
    if (!(dof > static_cast<double>(d) - 1.0)) throw std::invalid_argument("NIW dof must exceed d - 1");
    checked_cholesky(scale, "NIW scale matrix");
  }

  /// mu0 = 0, kappa0 = 1, Psi0 = I, nu0 = d + 2 (so E[Sigma] = Psi0).
  static NiwParams defaults(Index d) {
    return {Vector::Zero(d), 1.0, Matrix::Identity(d, d), static_cast<double>(d) + 2.0};
  }
};

using NiwPrior = NiwParams;
using NiwPosterior = NiwParams;

/// One Gaussian component with its Cholesky factor cached.
class ComponentParams {
 public:
  ComponentParams() = default;

  ComponentParams(Vector mean, Matrix cov)
      : mean_(std::move(mean)), cov_(symmetrized(cov)), chol_(checked_cholesky(cov_, "component covariance")),
        log_det_(log_det(chol_)) {
    require_dim("component mean", cov_.rows(), mean_.size());
  }

  const Vector& mean() const noexcept { return mean_; }
  const Matrix& cov() const noexcept { return cov_; }
  const Cholesky& chol() const noexcept { return chol_; }

  double log_pdf(const Eigen::Ref<const Vector>& omega) const {
    return log_normal_pdf(omega, mean_, chol_, log_det_);
  }

 private:
  Vector mean_;
  Matrix cov_;
  Cholesky chol_;
  double log_det_ = 0.0;
};

/// Frequencies, their assignments and the live components.
///
/// Invariants (checked by validate()): every z_j indexes a live component,
/// counts[k] = |{j : z_j = k}| >= 1, labels are dense 0..K-1.
struct SpectralState {
  FrequencyMatrix w;
  std::vector<int> z;
  std::vector<ComponentParams> components;
  std::vector<int> counts;
  double alpha = 1.0;

  Index m() const { return w.count(); }
  Index num_components() const { return static_cast<Index>(components.size()); }

  void validate() const {
    const auto k = components.size();
    if (counts.size() != k) throw std::logic_error("SpectralState: counts/components size mismatch");
    if (static_cast<Index>(z.size()) != m()) throw std::logic_error("SpectralState: assignment size mismatch");
    if (!(alpha > 0.0)) throw std::logic_error("SpectralState: alpha must be positive");
    std::vector<int> tally(k, 0);
    for (int label : z) {
      if (label < 0 || static_cast<std::size_t>(label) >= k) {
        throw std::logic_error("SpectralState: assignment references a dead component");
      }
      ++tally[static_cast<std::size_t>(label)];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (tally[c] != counts[c]) throw std::logic_error("SpectralState: stale component count");
      if (counts[c] < 1) throw std::logic_error("SpectralState: empty component left alive");
    }
  }

  /// Unassigns frequency j (z_j = -1); deletes its component if emptied and
  /// compacts labels.
  void detach(Index j) {
    const int label = z[static_cast<std::size_t>(j)];
    z[static_cast<std::size_t>(j)] = -1;
    if (label < 0) return;
    if (--counts[static_cast<std::size_t>(label)] == 0) {
      components.erase(components.begin() + label);
      counts.erase(counts.begin() + label);
      for (int& other : z) {
        if (other > label) --other;
      }
    }
  }

  void attach(Index j, int label) {
    z[static_cast<std::size_t>(j)] = label;
    ++counts[static_cast<std::size_t>(label)];
  }

  int add_component(ComponentParams params) {
    components.push_back(std::move(params));
    counts.push_back(0);
    return static_cast<int>(components.size()) - 1;
  }

  /// Rows of W assigned to component k.
  Matrix members(int k) const {
    Matrix rows(counts[static_cast<std::size_t>(k)], w.dim());
    Index r = 0;
    for (Index j = 0; j < m(); ++j) {
      if (z[static_cast<std::size_t>(j)] == k) rows.row(r++) = w.row(j);
    }
    return rows;
  }
};

/// Assignment probabilities for one frequency: entries 0..K-1 are the existing
/// components, the last entry is a new component with parameters `proposal`.
struct CrpDistribution {
  std::vector<double> probabilities;
  ComponentParams proposal;
};

/// CRP conditional for z_j with the new-component parameters supplied:
///   existing k:  m_k^{-j} / (M - 1 + alpha) N(w_j | mu_k, Sigma_k)
///   new:         alpha / (M - 1 + alpha) N(w_j | aux)
/// Frequency j may be attached or detached; its own contribution to the counts
/// is removed either way.
inline std::vector<double> crp_probabilities(Index j, const SpectralState& state, const ComponentParams& aux) {
  const Vector omega = state.w.row(j).transpose();
  const int own = state.z[static_cast<std::size_t>(j)];
  const double denom = static_cast<double>(state.m()) - 1.0 + state.alpha;
  const auto k = state.components.size();
  std::vector<double> logw(k + 1);
  for (std::size_t c = 0; c < k; ++c) {
    const int others = state.counts[c] - (own == static_cast<int>(c) ? 1 : 0);
    logw[c] = others > 0 ? std::log(others / denom) + state.components[c].log_pdf(omega)
                         : -std::numeric_limits<double>::infinity();
  }
  logw[k] = std::log(state.alpha / denom) + aux.log_pdf(omega);
  const double norm = log_sum_exp(logw);
  std::vector<double> probs(k + 1);
  for (std::size_t c = 0; c <= k; ++c) probs[c] = std::exp(logw[c] - norm);
  return probs;
}

/// Single draw from the NIW: Sigma ~ IW(Psi, nu), then mu ~ N(mean, Sigma / kappa).
template <RandomSource R>
ComponentParams sample_component_params(const NiwParams& post, R& rng) {
  const Index d = post.dim();
  const Cholesky scale_chol = checked_cholesky(post.scale, "inverse-Wishart scale");
  // Bartlett: A lower triangular, A_ii^2 ~ chi2(nu - i), A_ij ~ N(0, 1) below
  // the diagonal. With Psi = L L^T, Sigma = (L A^{-T})(L A^{-T})^T.
  Matrix a = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(chi_squared(rng, post.dof - static_cast<double>(i)));
    for (Index c = 0; c < i; ++c) a(i, c) = rng.normal();
  }
  // B = L A^{-T}  <=>  B A^T = L  <=>  A B^T = L^T.
  const Matrix bt = a.triangularView<Eigen::Lower>().solve(Matrix(scale_chol.matrixU()));
  Matrix sigma = bt.transpose() * bt;
  sigma = symmetrized(sigma);
  const Cholesky sigma_chol = checked_cholesky(sigma, "sampled covariance");
  Vector mu = post.mean + (sigma_chol.matrixL() * standard_normal_vector(rng, d)) / std::sqrt(post.kappa);
  return ComponentParams(std::move(mu), std::move(sigma));
}

template <RandomSource R>
CrpDistribution crp_assignment_distribution(Index j, const SpectralState& state, const NiwPrior& prior, R& rng) {
  ComponentParams aux = sample_component_params(prior, rng);
  auto probs = crp_probabilities(j, state, aux);
  return {std::move(probs), std::move(aux)};
}

/// One collapsed Gibbs sweep over all assignments (one auxiliary prior draw
/// per frequency for the new-component option).
template <RandomSource R>
void gibbs_sample_assignments(SpectralState& state, const NiwPrior& prior, R& rng) {
  for (Index j = 0; j < state.m(); ++j) {
    state.detach(j);
    CrpDistribution dist = crp_assignment_distribution(j, state, prior, rng);
    const std::size_t pick = categorical(rng, std::span<const double>(dist.probabilities));
    int label = static_cast<int>(pick);
    if (pick == state.components.size()) label = state.add_component(std::move(dist.proposal));
    state.attach(j, label);
  }
}

/// Conjugate NIW update from the rows of `observations` (m_k >= 1).
inline NiwPosterior niw_posterior(const NiwPrior& prior, const Matrix& observations) {
  const Index m = observations.rows();
  if (m < 1) throw std::invalid_argument("niw_posterior needs at least one observation");
  require_dim("niw_posterior", prior.dim(), observations.cols());
  const double mk = static_cast<double>(m);
  const Vector mean = observations.colwise().mean().transpose();
  const Matrix centered = observations.rowwise() - mean.transpose();
  const Vector shift = mean - prior.mean;
  NiwPosterior post;
  post.kappa = prior.kappa + mk;
  post.dof = prior.dof + mk;
  post.mean = (prior.kappa * prior.mean + mk * mean) / post.kappa;
  post.scale = prior.scale + centered.transpose() * centered +
               (prior.kappa * mk / post.kappa) * (shift * shift.transpose());
  post.scale = symmetrized(post.scale);
  return post;
}

/// Redraws (mu_k, Sigma_k) for every live component from its NIW posterior.
template <RandomSource R>
void resample_components(SpectralState& state, const NiwPrior& prior, R& rng) {
  for (int k = 0; k < static_cast<int>(state.components.size()); ++k) {
    state.components[static_cast<std::size_t>(k)] = sample_component_params(niw_posterior(prior, state.members(k)), rng);
  }
}

/// Learned kernel with weights m_k / M.
inline GaussianMixtureSpec state_to_mixture_spec(const SpectralState& state) {
  GaussianMixtureSpec spec;
  const double m = static_cast<double>(state.m());
  for (std::size_t k = 0; k < state.components.size(); ++k) {
    spec.components.push_back({state.counts[k] / m, state.components[k].mean(), state.components[k].cov()});
  }
  return spec;
}

/// log CRP probability of the partition `z`, seating items in index order.
inline double crp_log_prior(const std::vector<int>& z, double alpha) {
  std::vector<int> tables;
  std::vector<int> label_of;
  double logp = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double denom = static_cast<double>(i) + alpha;
    std::size_t t = 0;
    while (t < label_of.size() && label_of[t] != z[i]) ++t;
    if (t == label_of.size()) {
      logp += std::log(alpha / denom);
      label_of.push_back(z[i]);
      tables.push_back(1);
    } else {
      logp += std::log(tables[t] / denom);
      ++tables[t];
    }
  }
  return logp;
}

/// Human-readable dump used in diagnostics.
inline std::string describe(const SpectralState& state) {
  std::ostringstream os;
  os << "M=" << state.m() << " d=" << state.w.dim() << " K=" << state.num_components() << " alpha=" << state.alpha
     << "\n";
  for (std::size_t k = 0; k < state.components.size(); ++k) {
    os << "component " << k << " count=" << state.counts[k] << " mean=" << state.components[k].mean().transpose()
       << "\n";
  }
  return os.str();
}

}  // namespace bank
