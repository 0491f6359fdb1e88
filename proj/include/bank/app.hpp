#pragma once

// Command-line surface: train, predict, benchmark, kernel-export, synth.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "bank/baselines.hpp"
#include "bank/config.hpp"
#include "bank/data.hpp"
#include "bank/model_io.hpp"
#include "bank/sampler.hpp"

namespace bank::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Version stamped into JSON reports (metrics.json, truth.json).
inline constexpr int kOutputSchemaVersion = 1;

/// Usage problem detected after parsing (bad grid, incompatible model, ...).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
  bool quiet = false;
};

/// --threads, else BANK_THREADS, else 1.
inline int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("BANK_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

/// Derived per-task seed (splitmix64 finalizer of seed and stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct LoadedData {
  Dataset data;
  std::vector<std::string> columns;
  std::string target = "y";
  std::optional<SynthResult> truth;
};

inline LoadedData load_data(const RunConfig& cfg, std::ostream& log) {
  LoadedData out;
  if (cfg.data) {
    CsvOptions opts;
    opts.task = cfg.task;
    opts.header = cfg.data->header;
    opts.target_name = cfg.data->target_name;
    opts.target_column = cfg.data->target_column;
    opts.label_map = cfg.data->label_map;
    opts.skip_bad_rows = cfg.data->skip_bad_rows;
    LoadedCsv csv = load_csv(cfg.data->path, opts);
    if (csv.skipped_rows > 0) {
      log << "skipped " << csv.skipped_rows << " malformed row(s)\n";
      for (const auto& m : csv.skipped) log << "  " << m << "\n";
    }
    out.data = std::move(csv.data);
    out.columns = std::move(csv.columns);
    if (!csv.target.empty()) out.target = csv.target;
  } else if (cfg.synth->kind == "moons") {
    out.data = synth_moons(cfg.synth->options.n, cfg.synth->moons_noise, cfg.synth->options.seed);
  } else {
    SynthResult r = synth_generate(cfg.synth->options);
    out.data = r.data;
    out.truth = std::move(r);
  }
  if (out.columns.empty()) {
    for (Index c = 0; c < out.data.dim(); ++c) out.columns.push_back("x" + std::to_string(c));
  }
  out.data.validate();
  return out;
}

struct MethodOutcome {
  TrainedModel model;
  Vector test_predictions;  // standardized units / probabilities
  std::optional<ChainTrace> trace;
};

/// Fits `method` on standardized `train` and predicts standardized `test`.
inline MethodOutcome fit_method(const std::string& method, const Dataset& train, const Dataset& test,
                                const RunConfig& cfg, std::uint64_t seed,
                                std::optional<std::vector<Index>> validation, const ProgressCallback& progress) {
  MethodOutcome out;
  TrainedModel& model = out.model;
  model.method = method;
  model.task = cfg.task;
  model.seed = seed;
  model.x_train = train.x;
  model.y_train = train.y;
  if (method == "bank") {
    SamplerConfig sc = cfg.sampler;
    sc.seed = seed;
    sc.task = cfg.task;
    ChainTrace trace = run_chain(train.x, train.y, sc, progress);
    out.test_predictions = posterior_predict(trace, train.x, train.y, test.x, sc).value;
    model.sampler = sc;
    model.snapshots = trace.snapshots;
    model.final_state = trace.final_state;
    out.trace = std::move(trace);
  } else if (method == "rks") {
    BaselineFit fit = rks_fit_predict(train, test, cfg.rks.family, cfg.rks.m, cfg.rks.grid, seed, std::move(validation));
    out.test_predictions = std::move(fit.predictions);
    model.linear = std::move(fit.model);
  } else {
    BaselineFit fit = mkl_fit_predict(train, test, cfg.mkl.bank, cfg.mkl.m, cfg.mkl.grid, seed, std::move(validation));
    out.test_predictions = std::move(fit.predictions);
    model.linear = std::move(fit.model);
  }
  return out;
}

inline RunConfig prepare_config(const CommonFlags& flags) {
  if (flags.config.empty()) throw ConfigError("--config", "required");
  RunConfig cfg = load_config(flags.config);
  if (flags.seed) {
    cfg.seed = *flags.seed;
    cfg.sampler.seed = *flags.seed;
  }
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  cfg.validate();
  return cfg;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

inline Json metric_json(const MetricRecord& m) {
  return {{"value", m.value}, {"stderr", m.stderr_}, {"count", m.count}};
}

// --- train -----------------------------------------------------------------

inline int cmd_train(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = prepare_config(flags);
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  const Json effective = config_json(cfg);
  write_text(dir / "effective_config.json", effective.dump(2) + "\n");

  LoadedData loaded = load_data(cfg, err);
  const Dataset& all = loaded.data;
  std::vector<Index> train_rows;
  std::vector<Index> test_rows;
  {
    Rng rng = Rng::stream(cfg.seed, 0x686f6c64);
    const auto order = permutation(rng, all.size());
    const auto n_test = static_cast<std::size_t>(std::llround(cfg.holdout * static_cast<double>(all.size())));
    test_rows.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(test_rows.begin(), test_rows.end());
  }
  if (train_rows.size() < 2) throw ConfigError("holdout", "leaves fewer than two training rows");
  const Dataset train_raw = all.subset(train_rows);
  const Dataset test_raw = all.subset(test_rows);
  const StandardizedSplit split = standardize(train_raw, {test_raw}, cfg.standardize_x);

  ProgressCallback progress;
  if (!flags.quiet) {
    progress = [&err](const ProgressEvent& e) {
      if ((e.iteration + 1) % 10 == 0) {
        err << "iter " << e.iteration + 1 << " log-evidence " << e.log_evidence << " components " << e.components
            << " acceptance " << e.acceptance_rate << "\n";
      }
    };
  }
  MethodOutcome result;
  try {
    result = fit_method(cfg.method, split.train, split.others[0], cfg, cfg.seed, std::nullopt, progress);
  } catch (const ChainError& e) {
    const auto dump = dir / "diagnostic.txt";
    write_text(dump, std::string(e.what()) + "\n" + e.dump());
    err << "error: " << e.what() << "\ndiagnostic dump: " << dump.string() << "\n";
    return kExitRuntime;
  }
  TrainedModel& model = result.model;
  model.config = effective;
  model.standardization = split.record;
  model.columns = loaded.columns;
  model.target = loaded.target;

  Json metrics;
  metrics["schema_version"] = kOutputSchemaVersion;
  metrics["method"] = cfg.method;
  metrics["task"] = std::string(to_string(cfg.task));
  metrics["seed"] = cfg.seed;
  metrics["metric"] = cfg.task == Task::regression ? "mse_standardized" : "error";
  Predictions train_pred;
  {
    // In-sample metric through the same path as `predict`.
    train_pred = predict(model, train_raw.x);
    const Vector y = cfg.task == Task::regression ? split.record.apply_y(train_pred.value) : train_pred.value;
    metrics["train"] = metric_json(bank::metrics(y, split.train.y, cfg.task));
  }
  if (!test_rows.empty()) {
    metrics["test"] = metric_json(bank::metrics(result.test_predictions, split.others[0].y, cfg.task));
  }
  if (result.trace) {
    const ChainTrace& t = *result.trace;
    metrics["chain"] = {{"acceptance_rate", t.acceptance_rate()},
                        {"final_components", t.final_state.num_components()},
                        {"snapshots", t.snapshots.size()},
                        {"final_log_evidence", t.sweep_log_evidence.empty() ? 0.0 : t.sweep_log_evidence.back()},
                        {"fallbacks", t.fallbacks}};
    std::ostringstream trace_csv;
    trace_csv << std::setprecision(17) << "iteration,log_evidence,components,acceptance\n";
    for (std::size_t i = 0; i < t.sweep_log_evidence.size(); ++i) {
      trace_csv << i << "," << t.sweep_log_evidence[i] << "," << t.sweep_components[i] << ","
                << t.sweep_acceptance[i] << "\n";
    }
    write_text(dir / "trace.csv", trace_csv.str());
  }
  if (model.linear) metrics["lambda"] = model.linear->lambda;
  save_model((dir / "model.bank").string(), model);
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  if (!flags.quiet) {
    out << "model written to " << (dir / "model.bank").string() << "\n";
    out << "train " << metrics["metric"].get<std::string>() << " " << metrics["train"]["value"].get<double>() << "\n";
    if (metrics.contains("test")) {
      out << "test  " << metrics["metric"].get<std::string>() << " " << metrics["test"]["value"].get<double>()
          << "\n";
    }
  }
  return kExitOk;
}

// --- predict ---------------------------------------------------------------

struct PredictFlags {
  std::string model;
  std::string data;
  std::string output;
  bool header = true;
  std::string task;
};

inline int cmd_predict(const PredictFlags& pf, const CommonFlags& flags, std::ostream& out, std::ostream&) {
  const TrainedModel model = load_model(pf.model);
  if (!pf.task.empty() && parse_task(pf.task) != model.task) {
    throw UsageError("task mismatch: model is " + std::string(to_string(model.task)) + ", requested " + pf.task);
  }
  const Table table = load_table(pf.data, pf.header);
  const Index d = model.dim();
  Matrix x;
  if (table.values.cols() == d) {
    x = table.values;
  } else if (table.values.cols() == d + 1) {
    Index drop = d;  // target assumed last unless the header names it
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (table.header[c] == model.target) drop = static_cast<Index>(c);
    }
    x.resize(table.values.rows(), d);
    Index k = 0;
    for (Index c = 0; c < table.values.cols(); ++c) {
      if (c != drop) x.col(k++) = table.values.col(c);
    }
  } else {
    throw UsageError("dimension mismatch: model expects d=" + std::to_string(d) + " input columns, data has " +
                     std::to_string(table.values.cols()) + " columns");
  }
  const Predictions p = predict(model, x);
  if (pf.output.empty() && flags.out.empty()) throw UsageError("predict needs --output (or --out)");
  // --output names the file; --out is a directory, as for every other command.
  std::filesystem::path target = pf.output.empty() ? std::filesystem::path(flags.out) / "predictions.csv"
                                                   : std::filesystem::path(pf.output);
  if (std::filesystem::is_directory(target)) target /= "predictions.csv";
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  std::ostringstream csv;
  csv << std::setprecision(17);
  if (model.task == Task::regression) {
    csv << "index,prediction\n";
    for (Index i = 0; i < p.value.size(); ++i) csv << i << "," << p.value(i) << "\n";
  } else {
    csv << "index,prediction,probability\n";
    for (Index i = 0; i < p.value.size(); ++i) csv << i << "," << (p.value(i) >= 0.5 ? 1 : 0) << "," << p.value(i) << "\n";
  }
  write_text(target, csv.str());
  if (!flags.quiet) out << p.value.size() << " predictions written to " << target.string() << "\n";
  return kExitOk;
}

// --- benchmark -------------------------------------------------------------

struct BenchmarkRow {
  std::string method;
  bool failed = false;
  std::string failure;
  FoldSummary summary;
  std::vector<double> fold_metrics;
  double seconds = 0.0;
};

inline std::vector<BenchmarkRow> run_benchmark(const RunConfig& cfg, const Dataset& data, int threads,
                                               std::vector<Fold>* folds_out = nullptr) {
  const std::vector<Fold> folds = kfold_splits(data.size(), cfg.folds, cfg.seed, cfg.validation_fraction);
  if (folds_out) *folds_out = folds;
  const std::size_t n_methods = cfg.methods.size();
  const std::size_t n_tasks = n_methods * folds.size();
  std::vector<double> metric(n_tasks, 0.0);
  std::vector<double> seconds(n_tasks, 0.0);
  std::vector<std::string> failure(n_tasks);

  auto work = [&](std::size_t task) {
    const std::size_t mi = task / folds.size();
    const std::size_t fi = task % folds.size();
    const Fold& fold = folds[fi];
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Dataset train_raw = data.subset(fold.train);
      const StandardizedSplit split = standardize(train_raw, {data.subset(fold.test)}, cfg.standardize_x);
      // Validation rows as positions inside the fold's train subset.
      std::vector<Index> val;
      std::size_t p = 0;
      for (Index v : fold.validation) {
        while (fold.train[p] != v) ++p;
        val.push_back(static_cast<Index>(p));
      }
      const MethodOutcome r = fit_method(cfg.methods[mi], split.train, split.others[0], cfg,
                                         derive_seed(cfg.seed, fi), std::move(val), {});
      metric[task] = bank::metrics(r.test_predictions, split.others[0].y, cfg.task).value;
    } catch (const std::exception& e) {
      failure[task] = e.what();
    }
    seconds[task] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) work(t);
  };
  std::vector<std::thread> pool;
  for (int i = 1; i < std::min<int>(threads, static_cast<int>(n_tasks)); ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<BenchmarkRow> rows;
  for (std::size_t mi = 0; mi < n_methods; ++mi) {
    BenchmarkRow row;
    row.method = cfg.methods[mi];
    for (std::size_t fi = 0; fi < folds.size(); ++fi) {
      const std::size_t task = mi * folds.size() + fi;
      row.seconds += seconds[task];
      if (!failure[task].empty()) {
        row.failed = true;
        row.failure = "fold " + std::to_string(fi) + ": " + failure[task];
      }
      row.fold_metrics.push_back(metric[task]);
    }
    if (!row.failed) row.summary = summarize_folds(row.fold_metrics);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline int cmd_benchmark(const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = prepare_config(flags);
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  write_text(dir / "effective_config.json", config_json(cfg).dump(2) + "\n");
  const LoadedData loaded = load_data(cfg, err);
  std::vector<Fold> folds;
  const auto rows = run_benchmark(cfg, loaded.data, resolve_threads(flags.threads), &folds);
  write_fold_assignments((dir / "folds.csv").string(), folds);

  std::ostringstream csv;
  std::ostringstream per_fold;
  csv << std::setprecision(10) << "method,metric,stderr,seconds\n";
  per_fold << std::setprecision(17) << "method,fold,metric\n";
  bool any_failed = false;
  for (const auto& r : rows) {
    if (r.failed) {
      any_failed = true;
      csv << r.method << ",failed,," << r.seconds << "\n";
      err << "method " << r.method << " failed: " << r.failure << "\n";
      continue;
    }
    csv << r.method << "," << r.summary.mean << "," << r.summary.stderr_ << "," << r.seconds << "\n";
    for (std::size_t f = 0; f < r.fold_metrics.size(); ++f) {
      per_fold << r.method << "," << f << "," << r.fold_metrics[f] << "\n";
    }
  }
  write_text(dir / "benchmark.csv", csv.str());
  write_text(dir / "benchmark_folds.csv", per_fold.str());
  if (!flags.quiet) {
    const char* name = cfg.task == Task::regression ? "MSE (standardized)" : "error rate";
    out << std::left << std::setw(8) << "method" << std::setw(28) << name << "seconds\n";
    for (const auto& r : rows) {
      std::ostringstream cell;
      if (r.failed) {
        cell << "FAILED";
      } else {
        cell << std::fixed << std::setprecision(4) << r.summary.mean << " +/- " << r.summary.stderr_;
      }
      out << std::left << std::setw(8) << r.method << std::setw(28) << cell.str() << std::fixed
          << std::setprecision(1) << r.seconds << "\n";
    }
  }
  return any_failed ? kExitRuntime : kExitOk;
}

// --- kernel-export -----------------------------------------------------------

struct GridFlags {
  std::string model;
  double lag_min = -10.0;
  double lag_max = 10.0;
  int points = 401;
  double freq_min = -5.0;
  double freq_max = 5.0;
  int freq_points = 401;
};

inline std::vector<double> linear_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(n == 1 ? lo : lo + (hi - lo) * i / (n - 1));
  return g;
}

/// Learned kernel along the first input axis, in original input units,
/// averaged over the kept snapshots (the final state if none were kept).
inline double learned_kernel(const TrainedModel& model, const std::vector<GaussianMixtureSpec>& specs, double t) {
  Vector lag = Vector::Zero(model.dim());
  const Standardization& st = model.standardization;
  lag(0) = st.x_enabled ? t / st.x_scale(0) : t;
  double k = 0.0;
  for (const auto& s : specs) k += mixture_kernel_eval(lag, s);
  return k / static_cast<double>(specs.size());
}

inline int cmd_kernel_export(const GridFlags& g, const CommonFlags& flags, std::ostream& out, std::ostream&) {
  if (g.points < 1 || g.freq_points < 1) throw UsageError("lag and frequency grids need at least one point");
  if (!(g.lag_max >= g.lag_min) || !(g.freq_max >= g.freq_min)) throw UsageError("grid bounds are reversed");
  if (flags.out.empty()) throw UsageError("kernel-export needs --out");
  const TrainedModel model = load_model(g.model);
  if (!model.has_spectral_state()) {
    throw UsageError("model method '" + model.method + "' has no learned spectral state");
  }
  std::vector<GaussianMixtureSpec> specs;
  if (model.snapshots.empty()) {
    specs.push_back(state_to_mixture_spec(model.final_state));
  } else {
    for (const auto& s : model.snapshots) specs.push_back(state_to_mixture_spec(s));
  }
  std::optional<GaussianMixtureSpec> truth;
  if (model.config.contains("synth") && model.config["synth"].value("kind", "") == "mixture" &&
      model.dim() == 1) {
    truth = detail::read_spectrum(model.config["synth"]["spectrum"], "synth.spectrum");
  }
  const std::filesystem::path dir = flags.out;
  std::filesystem::create_directories(dir);

  std::ostringstream kcsv;
  kcsv << std::setprecision(17) << (truth ? "t,k,k_true\n" : "t,k\n");
  for (double t : linear_grid(g.lag_min, g.lag_max, g.points)) {
    kcsv << t << "," << learned_kernel(model, specs, t);
    if (truth) kcsv << "," << mixture_kernel_eval(Vector::Constant(1, t), *truth);
    kcsv << "\n";
  }
  write_text(dir / "kernel.csv", kcsv.str());

  // Density along the first frequency axis, mapped to original input units.
  const Standardization& st = model.standardization;
  const double jac = st.x_enabled ? st.x_scale.prod() : 1.0;
  std::ostringstream scsv;
  scsv << std::setprecision(17) << (truth ? "omega,density,density_true\n" : "omega,density\n");
  for (double w : linear_grid(g.freq_min, g.freq_max, g.freq_points)) {
    Vector omega = Vector::Zero(model.dim());
    omega(0) = st.x_enabled ? w * st.x_scale(0) : w;
    double rho = 0.0;
    for (const auto& s : specs) rho += mixture_pdf(omega, s);
    scsv << w << "," << jac * rho / static_cast<double>(specs.size());
    if (truth) scsv << "," << mixture_pdf(Vector::Constant(1, w), *truth);
    scsv << "\n";
  }
  write_text(dir / "spectrum.csv", scsv.str());
  if (!flags.quiet) out << "wrote " << (dir / "kernel.csv").string() << " and " << (dir / "spectrum.csv").string() << "\n";
  return kExitOk;
}

// --- synth -------------------------------------------------------------------

struct SynthFlags {
  std::optional<Index> n;
  std::optional<double> noise;
  std::string kind;
};

inline int cmd_synth(const SynthFlags& sf, const CommonFlags& flags, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  if (!flags.config.empty()) cfg = load_config(flags.config);
  if (flags.seed) cfg.seed = *flags.seed;
  if (!cfg.synth) {
    cfg.synth = SynthSource{};
    cfg.synth->options.seed = cfg.seed;
  } else if (flags.seed) {
    cfg.synth->options.seed = *flags.seed;
  }
  if (!sf.kind.empty()) cfg.synth->kind = sf.kind;
  cfg.task = cfg.synth->kind == "moons" ? Task::classification : Task::regression;
  cfg.data.reset();
  if (sf.n) cfg.synth->options.n = *sf.n;
  if (sf.noise) {
    cfg.synth->options.noise = *sf.noise;
    cfg.synth->moons_noise = *sf.noise;
  }
  if (!flags.out.empty()) cfg.output_dir = flags.out;
  cfg.validate();
  const std::filesystem::path dir = cfg.output_dir;
  std::filesystem::create_directories(dir);
  const LoadedData loaded = load_data(cfg, err);
  write_csv((dir / "data.csv").string(), loaded.data, loaded.columns);
  Json truth = {{"schema_version", kOutputSchemaVersion},
                {"kind", cfg.synth->kind},
                {"seed", cfg.synth->options.seed},
                {"n", loaded.data.size()}};
  if (loaded.truth) {
    truth["spectrum"] = detail::spectrum_json(loaded.truth->spec);
    truth["m_true"] = cfg.synth->options.m_true;
    truth["noise"] = cfg.synth->options.noise;
    truth["x_std"] = cfg.synth->options.x_std;
    std::ostringstream kcsv;
    kcsv << std::setprecision(17) << "t,k_true\n";
    if (loaded.truth->spec.dim() == 1) {
      for (double t : linear_grid(-10.0, 10.0, 401)) {
        kcsv << t << "," << mixture_kernel_eval(Vector::Constant(1, t), loaded.truth->spec) << "\n";
      }
      write_text(dir / "kernel_true.csv", kcsv.str());
    }
  } else {
    truth["noise"] = cfg.synth->moons_noise;
  }
  write_text(dir / "truth.json", truth.dump(2) + "\n");
  if (!flags.quiet) out << "wrote " << loaded.data.size() << " rows to " << (dir / "data.csv").string() << "\n";
  return kExitOk;
}

// --- entry point -------------------------------------------------------------

inline void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config, "JSON run configuration");
  if (config_required) opt->required();
  cmd->add_option("--seed", f.seed, "Override the configured seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--threads", f.threads, "Worker threads (fallback: BANK_THREADS)");
  cmd->add_flag("--quiet", f.quiet, "Suppress progress output");
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App cli{"Bayesian nonparametric kernel learning with random Fourier features"};
  cli.require_subcommand(1);
  CommonFlags common;
  PredictFlags pf;
  GridFlags gf;
  SynthFlags sf;

  auto* train = cli.add_subcommand("train", "Fit one method and write model + metrics");
  add_common(train, common, true);
  auto* predict_cmd = cli.add_subcommand("predict", "Predict with a saved model");
  add_common(predict_cmd, common, false);
  predict_cmd->add_option("--model", pf.model, "Model file")->required();
  predict_cmd->add_option("--data", pf.data, "Input CSV")->required();
  predict_cmd->add_option("--output", pf.output, "Predictions CSV (default: <out>/predictions.csv)");
  predict_cmd->add_option("--task", pf.task, "Expected task; mismatch is an error");
  predict_cmd->add_flag("!--no-header", pf.header, "Input CSV has no header row");
  auto* bench = cli.add_subcommand("benchmark", "Cross-validated comparison of methods");
  add_common(bench, common, true);
  auto* kexp = cli.add_subcommand("kernel-export", "Write learned kernel and spectral density grids");
  add_common(kexp, common, false);
  kexp->add_option("--model", gf.model, "Model file")->required();
  kexp->add_option("--lag-min", gf.lag_min);
  kexp->add_option("--lag-max", gf.lag_max);
  kexp->add_option("--points", gf.points, "Lag grid size");
  kexp->add_option("--freq-min", gf.freq_min);
  kexp->add_option("--freq-max", gf.freq_max);
  kexp->add_option("--freq-points", gf.freq_points, "Frequency grid size");
  auto* synth = cli.add_subcommand("synth", "Write a synthetic dataset and its ground truth");
  add_common(synth, common, false);
  synth->add_option("--n", sf.n, "Number of rows");
  synth->add_option("--noise", sf.noise, "Noise level");
  synth->add_option("--kind", sf.kind, "mixture | moons");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  try {
    if (*train) return cmd_train(common, out, err);
    if (*predict_cmd) return cmd_predict(pf, common, out, err);
    if (*bench) return cmd_benchmark(common, out, err);
    if (*kexp) return cmd_kernel_export(gf, common, out, err);
    if (*synth) return cmd_synth(sf, common, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace bank::app
