#pragma once

// MH-within-Gibbs over the spectral state. One sweep:
//   1. collapsed CRP resampling of every assignment z_j,
//   2. NIW posterior draw of every live component's (mu_k, Sigma_k),
//   3. independence MH moves on the frequencies, proposing w_j* from its own
//      component N(mu_{z_j}, Sigma_{z_j}) so only the evidence ratio remains
//      in the acceptance probability.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bank/core.hpp"
#include "bank/evidence_classification.hpp"
#include "bank/evidence_regression.hpp"
#include "bank/linalg.hpp"
#include "bank/random.hpp"
#include "bank/rff.hpp"
#include "bank/spectral_mixture.hpp"

namespace bank {

enum class ProposalMode { per_frequency, full_block };
enum class PredictMode { average, final_state };

struct SamplerConfig {
  int n_iters = 200;
  int burn_in = 100;
  int thin = 5;
  Index m = 500;
  Index draws = 100;  // L, weight draws per classification evidence ratio
  std::uint64_t seed = 1;
  Task task = Task::regression;
  double alpha = 1.0;
  std::optional<NiwPrior> niw;  // defaults to NiwParams::defaults(d)
  double weight_sigma = 1.0;    // sigma in Lambda0 = I / sigma^2
  double a0 = 1.0;
  double b0 = 1.0;
  ProposalMode proposal = ProposalMode::per_frequency;
  SwapMode swap = SwapMode::rank_update;
  int refresh_every = 10;  // full refactorization cadence for rank-update chains, in sweeps
  PredictMode predict = PredictMode::average;
  bool moderated = true;

  void validate() const {
    if (n_iters < 0) throw std::invalid_argument("sampler.n_iters must be nonnegative");
    if (burn_in < 0 || burn_in > n_iters) throw std::invalid_argument("sampler.burn_in must lie in [0, n_iters]");
    if (thin < 1) throw std::invalid_argument("sampler.thin must be >= 1");
    if (m < 1) throw std::invalid_argument("sampler.M must be >= 1");
    if (draws < 1) throw std::invalid_argument("sampler.L must be >= 1");
    if (!(alpha > 0.0)) throw std::invalid_argument("sampler.alpha must be positive");
    if (!(weight_sigma > 0.0) || !(a0 > 0.0) || !(b0 > 0.0)) {
      throw std::invalid_argument("sampler weight prior needs sigma, a0, b0 > 0");
    }
    if (niw) niw->validate();
  }

  NiwPrior niw_prior(Index d) const { return niw ? *niw : NiwParams::defaults(d); }
  NigPrior nig_prior() const { return NigPrior::defaults(2 * m, weight_sigma, a0, b0); }
  WeightPrior weight_prior() const { return WeightPrior::isotropic(2 * m, weight_sigma); }
};

/// Evidence bookkeeping for regression: design, conjugate posterior and the
/// last scored proposal.
class RegressionEvidence {
 public:
  RegressionEvidence(const Matrix& x, const Vector& y, NigPrior prior, SwapMode mode)
      : x_(&x), y_(&y), prior_(std::move(prior)), mode_(mode) {}

  void reset(const FrequencyMatrix& w) {
    phi_ = build_design(*x_, w);
    post_ = fit_posterior(phi_, *y_, prior_);
  }

  template <RandomSource R>
  void begin_sweep(const FrequencyMatrix& w, int sweep, int refresh_every, R&) {
    if (mode_ == SwapMode::rank_update && refresh_every > 0 && sweep > 0 && sweep % refresh_every == 0) reset(w);
  }

  double log_evidence() const { return post_.log_evidence(); }

  template <RandomSource R>
  double log_ratio(Index j, const Vector& omega, R&) {
    const Index m = phi_.cols() / 2;
    auto [cos_col, sin_col] = frequency_columns(*x_, omega, m);
    const double current = post_.log_evidence();
    pending_j_ = j;
    pending_cos_ = std::move(cos_col);
    pending_sin_ = std::move(sin_col);
    pending_refit_ = false;
    if (mode_ == SwapMode::full_refit) {
      saved_post_ = post_;
      post_ = swap_frequency_update(post_, phi_, j, pending_cos_, pending_sin_, *y_, prior_, mode_);
    } else if (!swap_.apply(post_, phi_, j, pending_cos_, pending_sin_, *y_, prior_)) {
      ++fallbacks_;
      pending_refit_ = true;
      post_ = swap_frequency_update(post_, phi_, j, pending_cos_, pending_sin_, *y_, prior_, SwapMode::full_refit);
    }
    return post_.log_evidence() - current;
  }

  void accept() {
    const Index m = phi_.cols() / 2;
    phi_.col(pending_j_) = pending_cos_;
    phi_.col(m + pending_j_) = pending_sin_;
  }

  void reject() {
    if (mode_ == SwapMode::full_refit) {
      post_ = std::move(saved_post_);
    } else if (pending_refit_ || !swap_.revert(post_)) {
      if (!pending_refit_) ++fallbacks_;
      post_ = fit_posterior(phi_, *y_, prior_);
    }
  }

  template <RandomSource R>
  double log_ratio_block(const FrequencyMatrix& w_star, R&) {
    pending_phi_ = build_design(*x_, w_star);
    pending_post_ = fit_posterior(pending_phi_, *y_, prior_);
    return pending_post_.log_evidence() - post_.log_evidence();
  }

  void accept_block() {
    phi_ = std::move(pending_phi_);
    post_ = std::move(pending_post_);
  }

  int fallbacks() const { return fallbacks_; }
  const RegressionPosterior& posterior() const { return post_; }
  const Matrix& design() const { return phi_; }

 private:
  const Matrix* x_;
  const Vector* y_;
  NigPrior prior_;
  SwapMode mode_;
  Matrix phi_;
  RegressionPosterior post_;
  RegressionPosterior saved_post_;
  RegressionPosterior pending_post_;
  RegressionSwap swap_;
  Matrix pending_phi_;
  Vector pending_cos_;
  Vector pending_sin_;
  Index pending_j_ = 0;
  bool pending_refit_ = false;
  int fallbacks_ = 0;
};

/// Evidence bookkeeping for classification. The Laplace posterior is refit
/// lazily after every accepted move; its L weight draws (and their margins)
/// are reused by every proposal scored under the same current W.
class ClassificationEvidence {
 public:
  ClassificationEvidence(const Matrix& x, const Vector& y, WeightPrior prior, Index draws)
      : x_(&x), y_(&y), prior_(std::move(prior)), count_(draws) {
    check_labels(y);
  }

  void reset(const FrequencyMatrix& w) {
    phi_ = build_design(*x_, w);
    lap_.reset();
    draws_stale_ = true;
  }

  template <RandomSource R>
  void begin_sweep(const FrequencyMatrix&, int, int, R&) {
    draws_stale_ = true;
  }

  double log_evidence() {
    ensure_laplace();
    return laplace_log_evidence(*lap_, prior_);
  }

  template <RandomSource R>
  double log_ratio(Index j, const Vector& omega, R& rng) {
    ensure_draws(rng);
    const Index m = phi_.cols() / 2;
    auto [cos_col, sin_col] = frequency_columns(*x_, omega, m);
    const Vector d_cos = cos_col - phi_.col(j);
    const Vector d_sin = sin_col - phi_.col(m + j);
    std::vector<double> log_ratios(static_cast<std::size_t>(count_));
    for (Index l = 0; l < count_; ++l) {
      const Vector eta_star = margins_.col(l) + d_cos * draws_(l, j) + d_sin * draws_(l, m + j);
      log_ratios[static_cast<std::size_t>(l)] =
          log_likelihood_from_margins(eta_star, *y_) - base_loglik_[static_cast<std::size_t>(l)];
    }
    pending_j_ = j;
    pending_cos_ = std::move(cos_col);
    pending_sin_ = std::move(sin_col);
    return std::log(evidence_ratio_from_loglik(log_ratios));
  }

  void accept() {
    const Index m = phi_.cols() / 2;
    phi_.col(pending_j_) = pending_cos_;
    phi_.col(m + pending_j_) = pending_sin_;
    lap_.reset();
    draws_stale_ = true;
  }

  void reject() {}

  template <RandomSource R>
  double log_ratio_block(const FrequencyMatrix& w_star, R& rng) {
    ensure_draws(rng);
    pending_phi_ = build_design(*x_, w_star);
    const Matrix eta_star = pending_phi_ * draws_.transpose();
    std::vector<double> log_ratios(static_cast<std::size_t>(count_));
    for (Index l = 0; l < count_; ++l) {
      log_ratios[static_cast<std::size_t>(l)] =
          log_likelihood_from_margins(eta_star.col(l), *y_) - base_loglik_[static_cast<std::size_t>(l)];
    }
    return std::log(evidence_ratio_from_loglik(log_ratios));
  }

  void accept_block() {
    phi_ = std::move(pending_phi_);
    lap_.reset();
    draws_stale_ = true;
  }

  int fallbacks() const { return 0; }
  const Matrix& design() const { return phi_; }

 private:
  void ensure_laplace() {
    if (lap_) return;
    LaplaceOptions options;
    if (last_mode_.size() == phi_.cols()) options.warm_start = &last_mode_;
    lap_ = fit_laplace(phi_, *y_, prior_, options);
    last_mode_ = lap_->mode;
  }

  template <RandomSource R>
  void ensure_draws(R& rng) {
    ensure_laplace();
    if (!draws_stale_) return;
    draws_ = sample_beta_laplace(*lap_, count_, rng);
    margins_ = phi_ * draws_.transpose();
    base_loglik_.resize(static_cast<std::size_t>(count_));
    for (Index l = 0; l < count_; ++l) {
      base_loglik_[static_cast<std::size_t>(l)] = log_likelihood_from_margins(margins_.col(l), *y_);
    }
    draws_stale_ = false;
  }

  const Matrix* x_;
  const Vector* y_;
  WeightPrior prior_;
  Index count_;
  Matrix phi_;
  std::optional<LaplacePosterior> lap_;
  Vector last_mode_;
  bool draws_stale_ = true;
  Matrix draws_;    // L x 2M
  Matrix margins_;  // N x L
  std::vector<double> base_loglik_;
  Matrix pending_phi_;
  Vector pending_cos_;
  Vector pending_sin_;
  Index pending_j_ = 0;
};

/// One independence-MH move on frequency j. Returns whether it was accepted.
template <class Evidence, RandomSource R>
bool mh_propose_frequency(SpectralState& state, Index j, Evidence& evidence, R& rng) {
  const auto& comp = state.components[static_cast<std::size_t>(state.z[static_cast<std::size_t>(j)])];
  const Vector omega = normal_draw(rng, comp.mean(), comp.chol());
  const double log_r = std::min(0.0, evidence.log_ratio(j, omega, rng));
  const double u = rng.uniform();
  if (!(u < std::exp(log_r))) {
    evidence.reject();
    return false;
  }
  evidence.accept();
  state.w.set_row(j, omega);
  return true;
}

struct SweepStats {
  int proposed = 0;
  int accepted = 0;
  double log_evidence = 0.0;
  Index components = 0;
};

template <class Evidence, RandomSource R>
SweepStats gibbs_sweep(SpectralState& state, Evidence& evidence, const NiwPrior& prior, const SamplerConfig& config,
                       int sweep, R& rng) {
  gibbs_sample_assignments(state, prior, rng);
  resample_components(state, prior, rng);
  evidence.begin_sweep(state.w, sweep, config.refresh_every, rng);

  SweepStats stats;
  if (config.proposal == ProposalMode::per_frequency) {
    for (Index j : permutation(rng, state.m())) {
      ++stats.proposed;
      if (mh_propose_frequency(state, j, evidence, rng)) ++stats.accepted;
    }
  } else {
    Matrix w_star(state.m(), state.w.dim());
    for (Index j = 0; j < state.m(); ++j) {
      const auto& comp = state.components[static_cast<std::size_t>(state.z[static_cast<std::size_t>(j)])];
      w_star.row(j) = normal_draw(rng, comp.mean(), comp.chol()).transpose();
    }
    FrequencyMatrix proposal(std::move(w_star));
    const double log_r = std::min(0.0, evidence.log_ratio_block(proposal, rng));
    ++stats.proposed;
    if (rng.uniform() < std::exp(log_r)) {
      evidence.accept_block();
      state.w = std::move(proposal);
      ++stats.accepted;
    }
  }
  stats.log_evidence = evidence.log_evidence();
  stats.components = state.num_components();
  return stats;
}

/// Median pairwise Euclidean distance over at most `max_points` rows
/// (a random subset when N is larger). Falls back to 1 for degenerate input.
template <RandomSource R>
double median_heuristic(const Matrix& x, R& rng, Index max_points = 1000) {
  std::vector<Index> rows;
  if (x.rows() <= max_points) {
    for (Index i = 0; i < x.rows(); ++i) rows.push_back(i);
  } else {
    auto order = permutation(rng, x.rows());
    rows.assign(order.begin(), order.begin() + max_points);
  }
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = a + 1; b < rows.size(); ++b) dists.push_back((x.row(rows[a]) - x.row(rows[b])).norm());
  }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

/// W ~ N(0, s^{-2} I) with s the median heuristic, all frequencies in one
/// component whose parameters are drawn from its NIW posterior.
template <RandomSource R>
SpectralState initial_state(const Matrix& x, const SamplerConfig& config, const NiwPrior& prior, R& rng) {
  const double s = median_heuristic(x, rng);
  Matrix w(config.m, x.cols());
  for (Index j = 0; j < w.rows(); ++j) {
    for (Index c = 0; c < w.cols(); ++c) w(j, c) = rng.normal() / s;
  }
  SpectralState state;
  state.w = FrequencyMatrix(std::move(w));
  state.alpha = config.alpha;
  state.z.assign(static_cast<std::size_t>(config.m), 0);
  state.components.push_back(sample_component_params(niw_posterior(prior, state.w.matrix()), rng));
  state.counts.push_back(static_cast<int>(config.m));
  return state;
}

struct ChainTrace {
  std::vector<SpectralState> snapshots;
  std::vector<double> snapshot_log_evidence;
  std::vector<Index> snapshot_components;
  std::vector<double> sweep_log_evidence;  // every sweep, burn-in included
  std::vector<Index> sweep_components;
  std::vector<double> sweep_acceptance;
  long proposed = 0;
  long accepted = 0;
  int fallbacks = 0;
  SpectralState final_state;

  double acceptance_rate() const { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / proposed; }
};

/// Non-finite evidence during a chain; carries a dump of the offending state.
class ChainError : public std::runtime_error {
 public:
  ChainError(const std::string& what, std::string dump) : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string& dump() const noexcept { return dump_; }

 private:
  std::string dump_;
};

struct ProgressEvent {
  int iteration;
  double log_evidence;
  Index components;
  double acceptance_rate;
};

using ProgressCallback = std::function<void(const ProgressEvent&)>;

namespace detail {

template <class Evidence>
ChainTrace run_chain_with(const Matrix& x, Evidence& evidence, const SamplerConfig& config,
                          const ProgressCallback& progress) {
  Rng rng(config.seed);
  const NiwPrior prior = config.niw_prior(x.cols());
  SpectralState state = initial_state(x, config, prior, rng);
  evidence.reset(state.w);

  ChainTrace trace;
  for (int iter = 0; iter < config.n_iters; ++iter) {
    const SweepStats stats = gibbs_sweep(state, evidence, prior, config, iter, rng);
    if (!std::isfinite(stats.log_evidence)) {
      throw ChainError("non-finite log-evidence at iteration " + std::to_string(iter), describe(state));
    }
    trace.proposed += stats.proposed;
    trace.accepted += stats.accepted;
    trace.sweep_log_evidence.push_back(stats.log_evidence);
    trace.sweep_components.push_back(stats.components);
    trace.sweep_acceptance.push_back(stats.proposed ? static_cast<double>(stats.accepted) / stats.proposed : 0.0);
    if (iter >= config.burn_in && (iter - config.burn_in + 1) % config.thin == 0) {
      trace.snapshots.push_back(state);
      trace.snapshot_log_evidence.push_back(stats.log_evidence);
      trace.snapshot_components.push_back(stats.components);
    }
    if (progress) progress({iter, stats.log_evidence, stats.components, trace.acceptance_rate()});
  }
  trace.fallbacks = evidence.fallbacks();
  trace.final_state = std::move(state);
  return trace;
}

}  // namespace detail

/// Runs the full chain; deterministic given (data, config).
inline ChainTrace run_chain(const Matrix& x, const Vector& y, const SamplerConfig& config,
                            const ProgressCallback& progress = {}) {
  config.validate();
  require_dim("run_chain targets", x.rows(), y.size());
  if (x.rows() == 0 && config.task == Task::classification) {
    throw std::invalid_argument("run_chain: classification needs data");
  }
  if (config.task == Task::regression) {
    RegressionEvidence evidence(x, y, config.nig_prior(), config.swap);
    return detail::run_chain_with(x, evidence, config, progress);
  }
  ClassificationEvidence evidence(x, y, config.weight_prior(), config.draws);
  return detail::run_chain_with(x, evidence, config, progress);
}

struct Predictions {
  Vector value;                   // mean (regression) or class-1 probability
  std::optional<Vector> variance; // regression only
};

/// Per-snapshot predictions from weights refit under that snapshot's W, then
/// averaged over kept snapshots (or the final state only).
inline Predictions posterior_predict(const ChainTrace& trace, const Matrix& x_train, const Vector& y_train,
                                     const Matrix& x_new, const SamplerConfig& config) {
  std::vector<const SpectralState*> states;
  if (config.predict == PredictMode::final_state) {
    states.push_back(&trace.final_state);
  } else {
    if (trace.snapshots.empty()) throw std::invalid_argument("posterior_predict: empty trace");
    for (const auto& s : trace.snapshots) states.push_back(&s);
  }
  const Index n = x_new.rows();
  Vector value = Vector::Zero(n);
  Vector second = Vector::Zero(n);
  bool variance_defined = true;
  for (const SpectralState* state : states) {
    const Matrix phi_new = build_design(x_new, state->w);
    const Matrix phi = build_design(x_train, state->w);
    if (config.task == Task::regression) {
      const RegressionPosterior post = fit_posterior(phi, y_train, config.nig_prior());
      // Batched form of predict_mean_var over all rows.
      const Vector mean = phi_new * post.mean();
      value += mean;
      if (post.a_n() > 1.0) {
        const Matrix solved = post.chol().matrixL().solve(phi_new.transpose());
        const Vector quad = solved.colwise().squaredNorm().transpose();
        const Vector var = (post.b_n() / (post.a_n() - 1.0)) * (1.0 + quad.array()).matrix();
        second += var + mean.cwiseProduct(mean);
      } else {
        variance_defined = false;
      }
    } else {
      const LaplacePosterior lap = fit_laplace(phi, y_train, config.weight_prior());
      // Batched form of predict_proba over all rows.
      const Vector margin = phi_new * lap.mode;
      Vector s2 = Vector::Zero(n);
      if (config.moderated) s2 = lap.chol.matrixL().solve(phi_new.transpose()).colwise().squaredNorm().transpose();
      for (Index i = 0; i < n; ++i) {
        value(i) += sigmoid(margin(i) / std::sqrt(1.0 + std::numbers::pi * s2(i) / 8.0));
      }
    }
  }
  const double count = static_cast<double>(states.size());
  Predictions out;
  out.value = value / count;
  if (config.task == Task::regression && variance_defined) {
    out.variance = (second / count - out.value.cwiseProduct(out.value)).eval();
  }
  return out;
}

}  // namespace bank
