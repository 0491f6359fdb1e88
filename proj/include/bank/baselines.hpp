#pragma once

// Fixed-kernel random-feature baselines: RKS with one kernel family, and MKL
// over a bank of families whose features are concatenated. The combination
// weights are absorbed into the downstream linear weights.
//
// Spectral pairs, all parameterized by a length-scale l > 0:
//   rbf      k(t) = exp(-|t|^2 / (2 l^2))       w ~ N(0, l^-2 I)
//   laplace  k(t) = exp(-|t|_1 / l)             w_c ~ Cauchy(0, 1/l) per coordinate
//   cauchy   k(t) = prod_c 1 / (1 + t_c^2/l^2)  w_c ~ Laplace(0, 1/l) per coordinate

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bank/core.hpp"
#include "bank/data.hpp"
#include "bank/evidence_classification.hpp"
#include "bank/linalg.hpp"
#include "bank/random.hpp"
#include "bank/rff.hpp"
#include "bank/sampler.hpp"

namespace bank {

struct KernelFamily {
  enum class Tag { rbf, laplace, cauchy };
  Tag tag = Tag::rbf;
  double scale = 1.0;

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("kernel scale must be positive");
  }
};

inline std::string_view to_string(KernelFamily::Tag tag) {
  switch (tag) {
    case KernelFamily::Tag::rbf: return "rbf";
    case KernelFamily::Tag::laplace: return "laplace";
    case KernelFamily::Tag::cauchy: return "cauchy";
  }
  return "?";
}

inline KernelFamily::Tag parse_family(std::string_view name) {
  if (name == "rbf") return KernelFamily::Tag::rbf;
  if (name == "laplace") return KernelFamily::Tag::laplace;
  if (name == "cauchy") return KernelFamily::Tag::cauchy;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

/// Closed-form kernel value at lag t.
inline double family_kernel(const KernelFamily& family, const Eigen::Ref<const Vector>& t) {
  const double l = family.scale;
  switch (family.tag) {
    case KernelFamily::Tag::rbf: return std::exp(-0.5 * t.squaredNorm() / (l * l));
    case KernelFamily::Tag::laplace: return std::exp(-t.lpNorm<1>() / l);
    case KernelFamily::Tag::cauchy: {
      double k = 1.0;
      for (Index c = 0; c < t.size(); ++c) k /= 1.0 + t(c) * t(c) / (l * l);
      return k;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

template <RandomSource R>
FrequencyMatrix spectral_sampler_for(const KernelFamily& family, Index d, Index m, R& rng) {
  family.validate();
  if (m < 1 || d < 1) throw std::invalid_argument("spectral_sampler_for needs M >= 1 and d >= 1");
  const double rate = 1.0 / family.scale;
  Matrix w(m, d);
  for (Index j = 0; j < m; ++j) {
    for (Index c = 0; c < d; ++c) {
      switch (family.tag) {
        case KernelFamily::Tag::rbf: w(j, c) = rate * rng.normal(); break;
        case KernelFamily::Tag::laplace: w(j, c) = cauchy(rng, rate); break;
        case KernelFamily::Tag::cauchy: w(j, c) = laplace(rng, rate); break;
      }
    }
  }
  return FrequencyMatrix(std::move(w));
}

struct FeatureBank {
  KernelFamily family;
  FrequencyMatrix w;
};

/// Concatenation [phi_1(x); phi_2(x); ...] in bank order. Each block is a
/// unit-norm feature map, so the concatenation has norm sqrt(#banks).
inline FeatureVector mkl_features(const Eigen::Ref<const Vector>& x, const std::vector<FeatureBank>& banks) {
  if (banks.empty()) throw std::invalid_argument("mkl_features needs at least one bank");
  Index total = 0;
  for (const auto& b : banks) {
    require_dim("mkl_features input", b.w.dim(), x.size());
    total += 2 * b.w.count();
  }
  FeatureVector out(total);
  Index offset = 0;
  for (const auto& b : banks) {
    out.segment(offset, 2 * b.w.count()) = feature_map(x, b.w);
    offset += 2 * b.w.count();
  }
  return out;
}

inline Matrix mkl_design(const Matrix& x, const std::vector<FeatureBank>& banks) {
  if (banks.empty()) throw std::invalid_argument("mkl_design needs at least one bank");
  Index total = 0;
  for (const auto& b : banks) {
    require_dim("mkl_design input", b.w.dim(), x.cols());
    total += 2 * b.w.count();
  }
  Matrix out(x.rows(), total);
  Index offset = 0;
  for (const auto& b : banks) {
    out.middleCols(offset, 2 * b.w.count()) = build_design(x, b.w);
    offset += 2 * b.w.count();
  }
  return out;
}

/// Frequencies for each family with the budget split as evenly as possible
/// (the first budget mod #families banks get one extra).
template <RandomSource R>
std::vector<FeatureBank> draw_banks(const std::vector<KernelFamily>& families, Index d, Index m_total, R& rng) {
  const Index b = static_cast<Index>(families.size());
  if (b == 0) throw std::invalid_argument("draw_banks needs at least one family");
  if (m_total < b) throw std::invalid_argument("feature budget smaller than the number of banks");
  std::vector<FeatureBank> banks;
  for (Index i = 0; i < b; ++i) {
    const Index m = m_total / b + (i < m_total % b ? 1 : 0);
    banks.push_back({families[static_cast<std::size_t>(i)],
                     spectral_sampler_for(families[static_cast<std::size_t>(i)], d, m, rng)});
  }
  return banks;
}

/// Ridge or L2-regularized logistic regression on concatenated random features.
struct LinearFeatureModel {
  Task task = Task::regression;
  std::vector<FeatureBank> banks;
  Vector weights;
  double lambda = 1.0;

  Matrix design(const Matrix& x) const { return mkl_design(x, banks); }

  /// Regression values, or class-1 probabilities.
  Vector predict(const Matrix& x) const {
    const Vector eta = design(x) * weights;
    if (task == Task::regression) return eta;
    return eta.unaryExpr([](double v) { return sigmoid(v); });
  }
};

/// Ridge: (Phi^T Phi + lambda I)^{-1} Phi^T y. Logistic: mode of the
/// posterior under a N(0, lambda^{-1} I) prior, by the Laplace Newton solver.
inline Vector fit_linear_weights(const Matrix& phi, const Vector& y, Task task, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("regularizer lambda must be positive");
  require_dim("fit_linear_weights targets", phi.rows(), y.size());
  const Index n = phi.cols();
  if (task == Task::regression) {
    Matrix gram = Matrix::Zero(n, n);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
    gram.diagonal().array() += lambda;
    const Cholesky chol = checked_cholesky(gram, "ridge system");
    return chol.solve(phi.transpose() * y);
  }
  WeightPrior prior{Vector::Zero(n), Matrix::Identity(n, n) * lambda};
  return fit_laplace(phi, y, prior).mode;
}

inline LinearFeatureModel fit_linear_model(const Matrix& x, const Vector& y, std::vector<FeatureBank> banks,
                                           Task task, double lambda) {
  LinearFeatureModel model;
  model.task = task;
  model.banks = std::move(banks);
  model.lambda = lambda;
  model.weights = fit_linear_weights(model.design(x), y, task, lambda);
  return model;
}

struct BaselineGrid {
  std::vector<double> scale_factors{0.25, 0.5, 1.0, 2.0, 4.0};  // RKS length-scales, times the median heuristic
  std::vector<double> lambdas{1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
  double validation_fraction = 0.2;
};

struct BaselineFit {
  LinearFeatureModel model;
  Vector predictions;  // on the test set: values or class-1 probabilities
  MetricRecord metric;
  double lambda = 0.0;
  std::size_t candidate = 0;  // index of the chosen family list
  double validation_score = 0.0;
  double median = 1.0;
};

namespace detail {

/// Validation loss used for selection: MSE, or mean negative log-likelihood
/// (smoother than the 0-1 error).
inline double validation_loss(const Vector& pred, const Vector& truth, Task task) {
  if (task == Task::regression) return (pred - truth).squaredNorm() / static_cast<double>(truth.size());
  double nll = 0.0;
  for (Index i = 0; i < truth.size(); ++i) {
    const double p = std::clamp(pred(i), 1e-12, 1.0 - 1e-12);
    nll -= truth(i) == 1.0 ? std::log(p) : std::log1p(-p);
  }
  return nll / static_cast<double>(truth.size());
}

inline std::vector<Index> default_validation(Index n, double fraction, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x7661);
  auto order = permutation(rng, n);
  order.resize(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace detail

/// Picks a family list and lambda on a validation split of `train`, refits
/// on all of `train` with the chosen frequencies and reports on `test`.
/// Candidate c draws its frequencies from stream (seed, c + 1).
inline BaselineFit fit_select_predict(const Dataset& train, const Dataset& test,
                                      const std::vector<std::vector<KernelFamily>>& candidates, Index m_total,
                                      const std::vector<double>& lambdas, std::uint64_t seed,
                                      std::optional<std::vector<Index>> validation = std::nullopt,
                                      double validation_fraction = 0.2) {
  train.validate();
  require_dim("baseline test columns", train.dim(), test.dim());
  if (candidates.empty() || lambdas.empty()) throw std::invalid_argument("baseline grid is empty");
  const Task task = train.task;
  std::vector<Index> val = validation ? *validation : detail::default_validation(train.size(), validation_fraction, seed);
  std::vector<bool> in_val(static_cast<std::size_t>(train.size()), false);
  for (Index i : val) in_val[static_cast<std::size_t>(i)] = true;
  std::vector<Index> fit_rows;
  for (Index i = 0; i < train.size(); ++i) {
    if (!in_val[static_cast<std::size_t>(i)]) fit_rows.push_back(i);
  }
  const bool can_validate = !val.empty() && !fit_rows.empty() && (candidates.size() > 1 || lambdas.size() > 1);
  const Dataset fit_part = train.subset(fit_rows);
  const Dataset val_part = train.subset(val);

  BaselineFit best;
  best.validation_score = std::numeric_limits<double>::infinity();
  std::vector<FeatureBank> best_banks;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    Rng rng = Rng::stream(seed, c + 1);
    std::vector<FeatureBank> banks = draw_banks(candidates[c], train.dim(), m_total, rng);
    if (!can_validate) {
      best_banks = std::move(banks);
      best.candidate = c;
      best.lambda = lambdas.front();
      best.validation_score = std::numeric_limits<double>::quiet_NaN();
      break;
    }
    const Matrix phi_fit = mkl_design(fit_part.x, banks);
    const Matrix phi_val = mkl_design(val_part.x, banks);
    for (double lambda : lambdas) {
      const Vector w = fit_linear_weights(phi_fit, fit_part.y, task, lambda);
      Vector pred = phi_val * w;
      if (task == Task::classification) pred = pred.unaryExpr([](double v) { return sigmoid(v); });
      const double score = detail::validation_loss(pred, val_part.y, task);
      if (score < best.validation_score) {
        best.validation_score = score;
        best.lambda = lambda;
        best.candidate = c;
        best_banks = banks;
      }
    }
  }
  best.model = fit_linear_model(train.x, train.y, std::move(best_banks), task, best.lambda);
  best.predictions = best.model.predict(test.x);
  best.metric = metrics(best.predictions, test.y, task);
  return best;
}

/// Median-heuristic length-scale of the training inputs, from a fixed stream.
inline double baseline_median(const Matrix& x, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, 0x6d6564);
  return median_heuristic(x, rng);
}

/// Fixed single-kernel baseline; the length-scale grid is scale_factors
/// times the median heuristic.
inline BaselineFit rks_fit_predict(const Dataset& train, const Dataset& test, KernelFamily::Tag family, Index m,
                                   const BaselineGrid& grid, std::uint64_t seed,
                                   std::optional<std::vector<Index>> validation = std::nullopt) {
  const double s = baseline_median(train.x, seed);
  std::vector<std::vector<KernelFamily>> candidates;
  for (double f : grid.scale_factors) candidates.push_back({KernelFamily{family, f * s}});
  BaselineFit fit = fit_select_predict(train, test, candidates, m, grid.lambdas, seed, std::move(validation),
                                       grid.validation_fraction);
  fit.median = s;
  return fit;
}

/// {laplace, rbf, cauchy} x {s/4, s, 4s} around the median heuristic s.
inline std::vector<KernelFamily> default_mkl_bank(double s) {
  std::vector<KernelFamily> bank;
  for (auto tag : {KernelFamily::Tag::laplace, KernelFamily::Tag::rbf, KernelFamily::Tag::cauchy}) {
    for (double f : {0.25, 1.0, 4.0}) bank.push_back({tag, f * s});
  }
  return bank;
}

/// Multiple-kernel baseline over a fixed bank; only lambda is selected.
/// An empty `families` uses default_mkl_bank at the median heuristic.
inline BaselineFit mkl_fit_predict(const Dataset& train, const Dataset& test, std::vector<KernelFamily> families,
                                   Index m_total, const BaselineGrid& grid, std::uint64_t seed,
                                   std::optional<std::vector<Index>> validation = std::nullopt) {
  const double s = baseline_median(train.x, seed);
  if (families.empty()) families = default_mkl_bank(s);
  BaselineFit fit = fit_select_predict(train, test, {families}, m_total, grid.lambdas, seed, std::move(validation),
                                       grid.validation_fraction);
  fit.median = s;
  return fit;
}

}  // namespace bank
