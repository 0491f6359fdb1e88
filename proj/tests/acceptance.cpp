// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 3 7        run the listed criteria
//
// A criterion fails when its check fails or when it overruns its time limit.
// Exit status is 0 only if every selected criterion passed.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "bank/app.hpp"
#include "bank/baselines.hpp"
#include "bank/evidence_classification.hpp"
#include "bank/evidence_regression.hpp"
#include "bank/model_io.hpp"
#include "bank/rff.hpp"
#include "bank/sampler.hpp"
#include "bank/spectral_mixture.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bank;
using bank::testing::random_matrix;
using bank::testing::random_vector;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> lag_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
  return g;
}

// --- 1 ---------------------------------------------------------------------

Outcome feature_map_invariants() {
  Rng rng(1);
  double worst_norm = 0.0;
  double worst_self = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Index d = 1 + static_cast<Index>(rng.below(8));
    const Index m = 1 + static_cast<Index>(rng.below(64));
    const FrequencyMatrix w(random_matrix(rng, m, d, 3.0));
    const Vector x = random_vector(rng, d, std::pow(10.0, 4.0 * rng.uniform() - 2.0));
    worst_norm = std::max(worst_norm, std::abs(feature_map(x, w).norm() - 1.0));
    worst_self = std::max(worst_self, std::abs(kernel_estimate(x, x, w) - 1.0));
  }
  return {worst_norm < 1e-12 && worst_self < 1e-12,
          fmt("max | |phi(x)| - 1 | = %.2e, max |k(x,x) - 1| = %.2e over 1e4 inputs (tol 1e-12)", worst_norm,
              worst_self)};
}

// --- 2 ---------------------------------------------------------------------

double sup_error(const FrequencyMatrix& w, const std::function<double(double)>& exact) {
  double worst = 0.0;
  const Vector origin = Vector::Zero(1);
  for (double t : lag_grid(-5.0, 5.0, 100)) {
    worst = std::max(worst, std::abs(kernel_estimate(Vector::Constant(1, t), origin, w) - exact(t)));
  }
  return worst;
}

Outcome kernel_convergence() {
  const GaussianMixtureSpec mixture = two_bump_spectrum();
  const std::vector<std::string> names = {"mixture", "rbf", "laplace", "cauchy"};
  std::vector<int> passes(4, 0);
  std::vector<double> worst(4, 0.0);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::vector<double> err;
    err.push_back(sup_error(sample_frequencies(mixture, 10000, rng),
                            [&](double t) { return mixture_kernel_eval(Vector::Constant(1, t), mixture); }));
    for (auto tag : {KernelFamily::Tag::rbf, KernelFamily::Tag::laplace, KernelFamily::Tag::cauchy}) {
      const KernelFamily fam{tag, 1.0};
      err.push_back(sup_error(spectral_sampler_for(fam, 1, 10000, rng),
                              [&](double t) { return family_kernel(fam, Vector::Constant(1, t)); }));
    }
    for (std::size_t k = 0; k < 4; ++k) {
      passes[k] += err[k] < 0.05 ? 1 : 0;
      worst[k] = std::max(worst[k], err[k]);
    }
  }
  std::string detail = "seeds with sup error < 0.05 at M=1e4:";
  bool ok = true;
  for (std::size_t k = 0; k < 4; ++k) {
    detail += fmt(" %s %d/20 (worst %.3f)", names[k].c_str(), passes[k], worst[k]);
    ok = ok && passes[k] >= 19;
  }
  return {ok, detail + "; need >= 19/20 each"};
}

// --- 3 ---------------------------------------------------------------------

/// log p(y) for y_i = phi_i beta + e_i with one weight, by nested quadrature
/// over the noise variance and the weight.
double quadrature_log_evidence(const Vector& phi, const Vector& y, const NigPrior& prior) {
  using boost::math::quadrature::gauss_kronrod;
  constexpr double inf = std::numeric_limits<double>::infinity();
  auto log_normal = [](double x, double m, double v) {
    return -0.5 * (x - m) * (x - m) / v - 0.5 * std::log(2.0 * std::numbers::pi * v);
  };
  auto inner = [&](double s) {
    if (s <= 0.0) return 0.0;
    const double log_ig = prior.a0 * std::log(prior.b0) - std::lgamma(prior.a0) - (prior.a0 + 1.0) * std::log(s) -
                          prior.b0 / s;
    auto joint = [&](double beta) {
      double lp = log_ig + log_normal(beta, prior.mean(0), s * prior.sigma * prior.sigma);
      for (Index i = 0; i < y.size(); ++i) lp += log_normal(y(i), phi(i) * beta, s);
      return std::exp(lp);
    };
    return gauss_kronrod<double, 61>::integrate(joint, -inf, inf, 12, 1e-10);
  };
  return std::log(gauss_kronrod<double, 61>::integrate(inner, 0.0, inf, 12, 1e-10));
}

Outcome conjugacy_oracles() {
  Rng rng(3);
  double niw_gap = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const Index d = 1 + static_cast<Index>(rng.below(3));
    const Index n = 2 + static_cast<Index>(rng.below(40));
    const Index cut = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - 1)));
    NiwPrior prior = NiwParams::defaults(d);
    prior.mean = random_vector(rng, d);
    prior.kappa = 0.1 + rng.uniform();
    const Matrix obs = random_matrix(rng, n, d, 2.0);
    const NiwPosterior once = niw_posterior(prior, obs);
    const NiwPosterior twice = niw_posterior(niw_posterior(prior, obs.topRows(cut)), obs.bottomRows(n - cut));
    niw_gap = std::max({niw_gap, (once.mean - twice.mean).cwiseAbs().maxCoeff(),
                        (once.scale - twice.scale).cwiseAbs().maxCoeff(), std::abs(once.kappa - twice.kappa),
                        std::abs(once.dof - twice.dof)});
  }
  double quad_gap = 0.0;
  for (int rep = 0; rep < 9; ++rep) {
    const Index n = 1 + rep % 3;
    const NigPrior prior = NigPrior::defaults(1, 0.5 + rng.uniform(), 1.0 + rng.uniform(), 0.5 + rng.uniform());
    const Vector phi = random_vector(rng, n, 0.7);
    const Vector y = random_vector(rng, n);
    const RegressionPosterior post = fit_posterior(Matrix(phi), y, prior);
    quad_gap = std::max(quad_gap, std::abs(post.log_evidence() - quadrature_log_evidence(phi, y, prior)));
  }
  return {niw_gap < 1e-9 && quad_gap < 1e-4,
          fmt("NIW sequential vs batch max gap %.2e (tol 1e-9, 100 cases); evidence vs quadrature max gap %.2e "
              "(tol 1e-4, 9 cases, N=1..3, one weight)",
              niw_gap, quad_gap)};
}

// --- 4 ---------------------------------------------------------------------

Outcome swap_oracle() {
  Rng rng(4);
  double swap_gap = 0.0;
  int fallbacks = 0;
  for (int rep = 0; rep < 500; ++rep) {
    const Index n = 50, m = 8;
    const Index d = 1 + static_cast<Index>(rng.below(3));
    const Matrix x = random_matrix(rng, n, d, 2.0);
    const Matrix phi = build_design(x, FrequencyMatrix(random_matrix(rng, m, d)));
    const Vector y = phi * random_vector(rng, 2 * m) + 0.1 * random_vector(rng, n);
    const NigPrior prior = NigPrior::defaults(2 * m, 0.5 + rng.uniform());
    const RegressionPosterior post = fit_posterior(phi, y, prior);
    const Index j = static_cast<Index>(rng.below(m));
    const auto [c, s] = frequency_columns(x, random_vector(rng, d, 1.5), m);
    const RegressionPosterior fast = swap_frequency_update(post, phi, j, c, s, y, prior);
    Matrix swapped = phi;
    swapped.col(j) = c;
    swapped.col(m + j) = s;
    swap_gap = std::max(swap_gap, std::abs(fast.log_evidence() - fit_posterior(swapped, y, prior).log_evidence()));
    fallbacks += fast.refactorized() ? 1 : 0;
  }

  const Matrix x = random_matrix(rng, 50, 1, 3.0);
  Vector y(50);
  for (Index i = 0; i < 50; ++i) y(i) = std::sin(2.0 * x(i, 0)) + 0.1 * rng.normal();
  SamplerConfig config;
  config.m = 8;
  config.n_iters = 30;
  config.burn_in = 0;
  config.thin = 1;
  config.seed = 4;
  config.swap = SwapMode::rank_update;
  const ChainTrace fast = run_chain(x, y, config);
  config.swap = SwapMode::full_refit;
  const ChainTrace slow = run_chain(x, y, config);
  double chain_gap = fast.sweep_log_evidence.size() == 30 && slow.sweep_log_evidence.size() == 30 ? 0.0 : 1e300;
  for (std::size_t i = 0; i < std::min(fast.sweep_log_evidence.size(), slow.sweep_log_evidence.size()); ++i) {
    chain_gap = std::max(chain_gap, std::abs(fast.sweep_log_evidence[i] - slow.sweep_log_evidence[i]));
  }
  return {swap_gap < 1e-8 && chain_gap < 1e-6,
          fmt("500 swaps (N=50, M=8): max |fast - refit| log-evidence %.2e (tol 1e-8), %d fallbacks; 30-iteration "
              "chain max per-iteration gap %.2e (tol 1e-6)",
              swap_gap, fallbacks, chain_gap)};
}

// --- 5 ---------------------------------------------------------------------

Outcome mh_stationarity() {
  int passes = 0;
  double worst = 1.0;
  double acceptance = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto r = bank::testing::mh_stationarity(seed, 1000000);
    passes += r.p_value > 0.01 ? 1 : 0;
    worst = std::min(worst, r.p_value);
    acceptance += r.acceptance / 20.0;
  }
  return {passes >= 18, fmt("%d/20 seeds pass chi-squared at p > 0.01 (need >= 18); min p %.3g; mean acceptance %.2f; "
                            "1e6 steps, thinned by 20, 50 equal-mass bins",
                            passes, worst, acceptance)};
}

// --- 6 ---------------------------------------------------------------------

Outcome laplace_correctness() {
  Rng rng(6);
  double worst_grad = 0.0;
  double worst_hess = 0.0;
  bool monotone = true;
  bool converged = true;
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix x = random_matrix(rng, 40, 2);
    const Matrix phi = build_design(x, FrequencyMatrix(random_matrix(rng, 2, 2)));
    const Vector truth = 3.0 * random_vector(rng, 4);
    Vector y(40);
    for (Index i = 0; i < 40; ++i) y(i) = rng.uniform() < sigmoid(phi.row(i).dot(truth)) ? 1.0 : 0.0;
    const WeightPrior prior = WeightPrior::isotropic(4, 1.5);
    const LaplacePosterior lap = fit_laplace(phi, y, prior);
    converged = converged && lap.converged;
    for (std::size_t i = 1; i < lap.objective_trace.size(); ++i) {
      monotone = monotone && lap.objective_trace[i] >= lap.objective_trace[i - 1];
    }
    auto objective = [&](const Vector& b) {
      return log_likelihood_class(phi, y, b) - 0.5 * (b - prior.mean).dot(prior.precision * (b - prior.mean));
    };
    const double h = 1e-5;
    Matrix fd(4, 4);
    for (Index a = 0; a < 4; ++a) {
      const Vector e = Vector::Unit(4, a) * h;
      worst_grad = std::max(worst_grad, std::abs((objective(lap.mode + e) - objective(lap.mode - e)) / (2 * h)));
      for (Index b = 0; b < 4; ++b) {
        const Vector f = Vector::Unit(4, b) * h;
        fd(a, b) = -(objective(lap.mode + e + f) - objective(lap.mode + e - f) - objective(lap.mode - e + f) +
                     objective(lap.mode - e - f)) /
                   (4 * h * h);
      }
    }
    worst_hess = std::max(worst_hess, (fd - lap.hessian).cwiseAbs().maxCoeff() / lap.hessian.cwiseAbs().maxCoeff());
  }
  return {converged && monotone && worst_grad < 1e-5 && worst_hess < 1e-4,
          fmt("20 instances with 2M=4: max FD gradient %.2e (tol 1e-5); max relative FD Hessian gap %.2e (tol "
              "1e-4); ascent %s; all converged %s",
              worst_grad, worst_hess, monotone ? "monotone" : "NOT monotone", converged ? "yes" : "no")};
}

// --- 7 ---------------------------------------------------------------------

double l2_on_grid(const std::vector<double>& grid, const std::function<double(double)>& diff) {
  const double step = grid[1] - grid[0];
  double acc = 0.0;
  for (double t : grid) acc += diff(t) * diff(t);
  return std::sqrt(acc * step);
}

Outcome kernel_recovery() {
  const std::vector<double> grid = lag_grid(-10.0, 10.0, 401);
  const GaussianMixtureSpec truth = two_bump_spectrum();
  auto k_true = [&](double t) { return mixture_kernel_eval(Vector::Constant(1, t), truth); };

  // Best single-Gaussian spectrum: RBF kernels over a fine length-scale grid.
  double rbf_err = std::numeric_limits<double>::infinity();
  double rbf_scale = 0.0;
  for (double ell = 0.02; ell < 50.0; ell *= 1.01) {
    const double e = l2_on_grid(grid, [&](double t) { return std::exp(-0.5 * t * t / (ell * ell)) - k_true(t); });
    if (e < rbf_err) {
      rbf_err = e;
      rbf_scale = ell;
    }
  }

  int wins = 0;
  double mean_err = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SynthOptions opts;
    opts.seed = seed;
    const SynthResult data = synth_generate(opts);
    // Targets standardized, inputs left in the recipe's units.
    const StandardizedSplit s = standardize(data.data, {}, false);
    SamplerConfig config;
    config.m = 250;
    config.n_iters = 200;
    config.burn_in = 100;
    config.thin = 5;
    config.seed = seed;
    const ChainTrace trace = run_chain(s.train.x, s.train.y, config);
    std::vector<GaussianMixtureSpec> specs;
    for (const auto& snap : trace.snapshots) specs.push_back(state_to_mixture_spec(snap));
    auto k_learned = [&](double t) {
      double k = 0.0;
      for (const auto& sp : specs) k += mixture_kernel_eval(Vector::Constant(1, t), sp);
      return k / static_cast<double>(specs.size());
    };
    const double err = l2_on_grid(grid, [&](double t) { return k_learned(t) - k_true(t); });
    wins += err < rbf_err ? 1 : 0;
    mean_err += err / 20.0;
    per_seed += fmt(" %.3f", err);
    std::cerr << "  criterion 7 seed " << seed << ": BaNK L2 " << err << " vs RBF " << rbf_err << "\n";
  }
  return {wins >= 16, fmt("BaNK beats best RBF (L2 %.3f at length-scale %.3f) in %d/20 seeds (need >= 16); mean "
                          "BaNK L2 %.3f; per seed:%s",
                          rbf_err, rbf_scale, wins, mean_err, per_seed.c_str())};
}

// --- 8 ---------------------------------------------------------------------

RunConfig synth_benchmark_config(std::vector<std::string> methods) {
  RunConfig cfg;
  cfg.task = Task::regression;
  cfg.seed = 8;
  cfg.methods = std::move(methods);
  cfg.method = cfg.methods.front();
  cfg.synth = SynthSource{};
  cfg.synth->options.seed = 8;
  cfg.standardize_x = false;
  cfg.sampler.m = 250;
  cfg.sampler.n_iters = 200;
  cfg.sampler.burn_in = 100;
  cfg.sampler.thin = 5;
  cfg.rks.m = 250;
  cfg.mkl.m = 252;
  return cfg;
}

Outcome regression_trend() {
  RunConfig cfg = synth_benchmark_config({"bank", "rks"});
  cfg.validate();
  const Dataset data = synth_generate(cfg.synth->options).data;
  const auto rows = app::run_benchmark(cfg, data, 1);
  if (rows[0].failed || rows[1].failed) return {false, "benchmark failed: " + rows[0].failure + rows[1].failure};
  int folds_won = 0;
  for (std::size_t f = 0; f < rows[0].fold_metrics.size(); ++f) {
    folds_won += rows[0].fold_metrics[f] <= rows[1].fold_metrics[f] ? 1 : 0;
  }

  // MKL whose bank holds the generating kernel against RKS with a wrong family.
  RunConfig mk = synth_benchmark_config({"mkl", "rks"});
  mk.synth->options.spec.components = {{0.5, Vector::Zero(1), Matrix::Constant(1, 1, 16.0)},
                                       {0.5, Vector::Zero(1), Matrix::Constant(1, 1, 1.0 / 16.0)}};
  mk.synth->options.noise = 0.1;
  mk.mkl.m = 500;
  mk.rks.m = 500;
  mk.mkl.bank = default_mkl_bank(1.0);
  mk.rks.family = KernelFamily::Tag::laplace;
  mk.validate();
  const auto mrows = app::run_benchmark(mk, synth_generate(mk.synth->options).data, 1);
  if (mrows[0].failed || mrows[1].failed) return {false, "benchmark failed: " + mrows[0].failure + mrows[1].failure};
  const bool mkl_wins = mrows[0].summary.mean < mrows[1].summary.mean;

  return {folds_won >= 4 && mkl_wins,
          fmt("BaNK MSE <= RKS MSE in %d/5 folds (need >= 4); means BaNK %.4f +/- %.4f, RKS %.4f +/- %.4f; "
              "two-scale RBF data: MKL %.4f +/- %.4f vs laplace RKS %.4f +/- %.4f (%s)",
              folds_won, rows[0].summary.mean, rows[0].summary.stderr_, rows[1].summary.mean,
              rows[1].summary.stderr_, mrows[0].summary.mean, mrows[0].summary.stderr_, mrows[1].summary.mean,
              mrows[1].summary.stderr_, mkl_wins ? "MKL wins" : "MKL loses")};
}

// --- 9 ---------------------------------------------------------------------

Outcome classification_trend() {
  RunConfig cfg;
  cfg.task = Task::classification;
  cfg.seed = 9;
  cfg.methods = {"bank", "rks"};
  cfg.synth = SynthSource{};
  cfg.synth->kind = "moons";
  cfg.synth->options.n = 2000;
  cfg.synth->options.seed = 9;
  cfg.synth->moons_noise = 0.2;
  cfg.sampler.task = Task::classification;
  cfg.sampler.m = 100;
  cfg.sampler.draws = 50;
  cfg.sampler.n_iters = 60;
  cfg.sampler.burn_in = 30;
  cfg.sampler.thin = 5;
  cfg.rks.m = 100;
  cfg.validate();
  const Dataset data = synth_moons(2000, cfg.synth->moons_noise, 9);
  const auto rows = app::run_benchmark(cfg, data, 1);
  if (rows[0].failed || rows[1].failed) return {false, "benchmark failed: " + rows[0].failure + rows[1].failure};
  const double bank_err = rows[0].summary.mean;
  const double rks_err = rows[1].summary.mean;
  return {bank_err <= rks_err + 0.01 && bank_err < 0.10 && rks_err < 0.10,
          fmt("moons N=2000 (noise 0.2), 5-fold CV error: BaNK %.4f +/- %.4f, RKS %.4f +/- %.4f; need BaNK <= RKS "
              "+ 0.01 and both < 0.10",
              bank_err, rows[0].summary.stderr_, rks_err, rows[1].summary.stderr_)};
}

// --- 10 --------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome determinism_and_persistence() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "bank-acceptance-10";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const Json cfg = {{"task", "regression"},
                    {"method", "bank"},
                    {"seed", 10},
                    {"synth", {{"n", 300}}},
                    {"sampler", {{"n_iters", 40}, {"burn_in", 20}, {"thin", 4}, {"M", 60}}}};
  std::ofstream(dir / "config.json") << cfg.dump(2);
  std::ostringstream sink;
  bool ran = true;
  for (const char* out : {"a", "b"}) {
    const std::string config = (dir / "config.json").string();
    const std::string target = (dir / out).string();
    const char* argv[] = {"bank", "train", "--quiet", "--config", config.c_str(), "--out", target.c_str()};
    ran = ran && app::run(7, argv, sink, sink) == app::kExitOk;
  }
  const std::string metrics_a = slurp(dir / "a/metrics.json");
  const bool identical = ran && !metrics_a.empty() && metrics_a == slurp(dir / "b/metrics.json");

  // In-process model against its saved and reloaded copy, for each method.
  double worst = 0.0;
  for (const std::string method : {"bank", "rks", "mkl"}) {
    SynthOptions opts;
    opts.n = 200;
    opts.seed = 10;
    const Dataset all = synth_generate(opts).data;
    const Dataset train = all.subset([] {
      std::vector<Index> v;
      for (Index i = 0; i < 150; ++i) v.push_back(i);
      return v;
    }());
    const StandardizedSplit s = standardize(train, {});
    RunConfig rc;
    rc.sampler.m = 40;
    rc.sampler.n_iters = 20;
    rc.sampler.burn_in = 10;
    rc.sampler.thin = 2;
    rc.rks.m = 40;
    rc.mkl.m = 45;
    app::MethodOutcome fit = app::fit_method(method, s.train, s.train, rc, 10, std::nullopt, {});
    fit.model.standardization = s.record;
    fit.model.columns = {"x0"};
    const fs::path path = dir / (method + ".bank");
    save_model(path.string(), fit.model);
    const Predictions before = predict(fit.model, all.x);
    const Predictions after = predict(load_model(path.string()), all.x);
    worst = std::max(worst, (before.value - after.value).cwiseAbs().maxCoeff());
    if (before.variance && after.variance) {
      worst = std::max(worst, (*before.variance - *after.variance).cwiseAbs().maxCoeff());
    }
  }
  fs::remove_all(dir);
  return {identical && worst <= 1e-10,
          fmt("train twice with the same config and seed: metrics.json %s; save/load/predict max gap %.2e over "
              "bank, rks, mkl (tol 1e-10)",
              identical ? "byte-identical" : "DIFFERS", worst)};
}

struct Criterion {
  int id;
  const char* name;
  double limit_seconds;
  Outcome (*run)();
};

const std::vector<Criterion> kCriteria = {
    {1, "feature-map invariants", 1.0, feature_map_invariants},
    {2, "kernel approximation convergence", 30.0, kernel_convergence},
    {3, "conjugacy oracles", 10.0, conjugacy_oracles},
    {4, "swap-update oracle", 60.0, swap_oracle},
    {5, "MH stationarity oracle", 120.0, mh_stationarity},
    {6, "Laplace correctness", 10.0, laplace_correctness},
    {7, "synthetic kernel recovery", 900.0, kernel_recovery},
    {8, "regression trend", 1200.0, regression_trend},
    {9, "classification trend", 900.0, classification_trend},
    {10, "determinism and persistence", 60.0, determinism_and_persistence},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    try {
      selected.push_back(std::stoi(argv[i]));
    } catch (const std::exception&) {
      std::cerr << "usage: acceptance [criterion ...]\n";
      return 2;
    }
  }
  if (selected.empty()) {
    for (const auto& c : kCriteria) selected.push_back(c.id);
  }
  bool all_pass = true;
  for (int id : selected) {
    const auto it = std::find_if(kCriteria.begin(), kCriteria.end(), [&](const Criterion& c) { return c.id == id; });
    if (it == kCriteria.end()) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = it->run();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < it->limit_seconds;
    const bool pass = out.pass && in_time;
    all_pass = all_pass && pass;
    std::cout << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << " " << it->name << ": " << out.detail
              << "; runtime " << fmt("%.1f", secs) << " s (limit " << it->limit_seconds << " s"
              << (in_time ? "" : ", EXCEEDED") << ")" << std::endl;
  }
  return all_pass ? 0 : 1;
}
