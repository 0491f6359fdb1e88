#pragma once

// Datasets: CSV ingestion, train-statistics standardization, k-fold splits,
// metrics, and synthetic generators.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bank/core.hpp"
#include "bank/random.hpp"
#include "bank/rff.hpp"

namespace bank {

/// Per-column affine maps fitted on a training set. Zero-variance columns keep
/// scale 1 and are flagged.
struct Standardization {
  Vector x_mean;
  Vector x_scale;
  std::vector<bool> x_constant;
  double y_mean = 0.0;
  double y_scale = 1.0;
  bool x_enabled = true;
  bool y_enabled = false;

  Matrix apply_x(const Matrix& x) const {
    if (!x_enabled) return x;
    require_dim("standardization columns", x_mean.size(), x.cols());
    return ((x.rowwise() - x_mean.transpose()).array().rowwise() / x_scale.transpose().array()).matrix();
  }
  Vector apply_y(const Vector& y) const {
    if (!y_enabled) return y;
    return ((y.array() - y_mean) / y_scale).matrix();
  }
  Vector invert_y(const Vector& y) const {
    if (!y_enabled) return y;
    return (y.array() * y_scale + y_mean).matrix();
  }
};

struct Dataset {
  Matrix x;
  Vector y;
  Task task = Task::regression;
  std::optional<Standardization> standardization;

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }

  void validate() const {
    if (x.rows() < 1) throw std::invalid_argument("dataset is empty");
    require_dim("dataset targets", x.rows(), y.size());
    if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("dataset has non-finite entries");
    if (task == Task::classification) {
      for (Index i = 0; i < y.size(); ++i) {
        if (y(i) != 0.0 && y(i) != 1.0) throw LabelError("label at row " + std::to_string(i) + " is not 0 or 1");
      }
    }
  }

  Dataset subset(const std::vector<Index>& rows) const {
    Dataset out;
    out.task = task;
    out.standardization = standardization;
    out.x.resize(static_cast<Index>(rows.size()), x.cols());
    out.y.resize(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      out.x.row(static_cast<Index>(r)) = x.row(rows[r]);
      out.y(static_cast<Index>(r)) = y(rows[r]);
    }
    return out;
  }
};

// --- CSV -----------------------------------------------------------------

class CsvError : public std::runtime_error {
 public:
  CsvError(const std::string& what, Index row = -1, Index column = -1)
      : std::runtime_error(row < 0 ? what
                                   : what + " (row " + std::to_string(row) +
                                         (column < 0 ? "" : ", column " + std::to_string(column)) + ")"),
        row_(row),
        column_(column) {}
  Index row() const noexcept { return row_; }
  Index column() const noexcept { return column_; }

 private:
  Index row_;
  Index column_;
};

struct CsvOptions {
  Task task = Task::regression;
  bool header = true;
  std::optional<std::string> target_name;
  int target_column = -1;  // negative counts from the end
  std::map<double, double> label_map;
  bool skip_bad_rows = false;
};

struct LoadedCsv {
  Dataset data;
  std::vector<std::string> columns;  // feature column names (empty without header)
  std::string target;
  Index skipped_rows = 0;
  std::vector<std::string> skipped;  // one message per skipped row
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

inline std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

}  // namespace detail

/// Reads a comma-delimited numeric file. Malformed rows are errors carrying
/// their 1-based line number, unless skip_bad_rows is set, in which case they
/// are counted and reported.
inline LoadedCsv load_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path + "'");
  LoadedCsv out;
  std::string line;
  Index line_no = 0;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::size_t width = 0;
  Index target = -1;

  auto resolve_target = [&](std::size_t columns) {
    if (options.target_name) {
      const auto it = std::find(header.begin(), header.end(), *options.target_name);
      if (it == header.end()) throw CsvError("target column '" + *options.target_name + "' not in header");
      return static_cast<Index>(it - header.begin());
    }
    const Index t = options.target_column < 0 ? static_cast<Index>(columns) + options.target_column
                                              : static_cast<Index>(options.target_column);
    if (t < 0 || t >= static_cast<Index>(columns)) throw CsvError("target column index out of range");
    return t;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (options.header && header.empty()) {
      for (auto f : fields) header.emplace_back(f);
      width = header.size();
      target = resolve_target(width);
      continue;
    }
    if (width == 0) {
      width = fields.size();
      target = resolve_target(width);
    }
    std::string problem;
    Index bad_column = -1;
    std::vector<double> values;
    if (fields.size() != width) {
      problem = "expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size());
    } else {
      for (std::size_t c = 0; c < fields.size(); ++c) {
        const auto v = detail::parse_double(fields[c]);
        if (!v) {
          problem = fields[c].empty() ? "missing value" : "unparseable value '" + std::string(fields[c]) + "'";
          bad_column = static_cast<Index>(c) + 1;
          break;
        }
        values.push_back(*v);
      }
    }
    if (problem.empty() && options.task == Task::classification) {
      double& label = values[static_cast<std::size_t>(target)];
      if (!options.label_map.empty()) {
        const auto it = options.label_map.find(label);
        if (it == options.label_map.end()) {
          problem = "label has no mapping";
        } else {
          label = it->second;
        }
      }
      if (problem.empty() && label != 0.0 && label != 1.0) problem = "label is not 0 or 1";
      if (!problem.empty()) bad_column = target + 1;
    }
    if (!problem.empty()) {
      if (!options.skip_bad_rows) throw CsvError(problem, line_no, bad_column);
      ++out.skipped_rows;
      out.skipped.push_back("line " + std::to_string(line_no) + ": " + problem);
      continue;
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw CsvError("dataset '" + path + "' has no usable rows");

  const Index n = static_cast<Index>(rows.size());
  const Index d = static_cast<Index>(width) - 1;
  out.data.task = options.task;
  out.data.x.resize(n, d);
  out.data.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    Index c_out = 0;
    for (Index c = 0; c < static_cast<Index>(width); ++c) {
      const double v = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      if (c == target) {
        out.data.y(i) = v;
      } else {
        out.data.x(i, c_out++) = v;
      }
    }
  }
  for (Index c = 0; c < static_cast<Index>(header.size()); ++c) {
    if (c == target) {
      out.target = header[static_cast<std::size_t>(c)];
    } else {
      out.columns.push_back(header[static_cast<std::size_t>(c)]);
    }
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  Matrix values;
};

/// All-numeric CSV without target semantics (used for prediction inputs).
inline Table load_table(const std::string& path, bool header) {
  std::ifstream in(path);
  if (!in) throw CsvError("cannot open '" + path + "'");
  Table out;
  std::vector<std::vector<double>> rows;
  std::string line;
  Index line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (header && out.header.empty()) {
      for (auto f : fields) out.header.emplace_back(f);
      width = fields.size();
      continue;
    }
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw CsvError("expected " + std::to_string(width) + " fields, found " + std::to_string(fields.size()), line_no);
    }
    std::vector<double> values;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = detail::parse_double(fields[c]);
      if (!v) throw CsvError("unparseable value '" + std::string(fields[c]) + "'", line_no, static_cast<Index>(c) + 1);
      values.push_back(*v);
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw CsvError("'" + path + "' has no data rows");
  out.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) out.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return out;
}

inline void write_csv(const std::string& path, const Dataset& data, const std::vector<std::string>& columns = {}) {
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (Index c = 0; c < data.dim(); ++c) {
    out << (static_cast<std::size_t>(c) < columns.size() ? columns[static_cast<std::size_t>(c)] : "x" + std::to_string(c))
        << ",";
  }
  out << "y\n";
  for (Index i = 0; i < data.size(); ++i) {
    for (Index c = 0; c < data.dim(); ++c) out << data.x(i, c) << ",";
    out << data.y(i) << "\n";
  }
}

// --- Standardization -----------------------------------------------------

struct StandardizedSplit {
  Dataset train;
  std::vector<Dataset> others;
  Standardization record;
};

/// Centres and scales with TRAIN statistics only (population standard
/// deviation); targets too for regression.
inline Standardization fit_standardization(const Dataset& train, bool standardize_x = true) {
  if (train.size() < 1) throw std::invalid_argument("standardize: empty training set");
  Standardization rec;
  rec.x_enabled = standardize_x;
  rec.x_mean = train.x.colwise().mean().transpose();
  rec.x_scale.resize(train.dim());
  rec.x_constant.assign(static_cast<std::size_t>(train.dim()), false);
  for (Index c = 0; c < train.dim(); ++c) {
    const double sd = std::sqrt((train.x.col(c).array() - rec.x_mean(c)).square().mean());
    rec.x_constant[static_cast<std::size_t>(c)] = !(sd > 0.0);
    rec.x_scale(c) = sd > 0.0 ? sd : 1.0;
  }
  rec.y_enabled = train.task == Task::regression;
  if (rec.y_enabled) {
    rec.y_mean = train.y.mean();
    const double sd = std::sqrt((train.y.array() - rec.y_mean).square().mean());
    rec.y_scale = sd > 0.0 ? sd : 1.0;
  }
  return rec;
}

inline Dataset apply_standardization(const Dataset& data, const Standardization& rec) {
  Dataset out;
  out.task = data.task;
  out.x = rec.apply_x(data.x);
  out.y = rec.apply_y(data.y);
  out.standardization = rec;
  return out;
}

inline StandardizedSplit standardize(const Dataset& train, const std::vector<Dataset>& others,
                                     bool standardize_x = true) {
  StandardizedSplit out;
  out.record = fit_standardization(train, standardize_x);
  out.train = apply_standardization(train, out.record);
  for (const auto& o : others) out.others.push_back(apply_standardization(o, out.record));
  return out;
}

// --- Cross-validation ----------------------------------------------------

struct Fold {
  std::vector<Index> train;
  std::vector<Index> test;
  std::vector<Index> inner_train;  // train minus validation
  std::vector<Index> validation;   // held-out share of train for hyperparameter picking
};

/// k disjoint, exhaustive test folds (sizes differ by at most one, the first
/// N mod k folds are larger), each with a validation split of its train part.
inline std::vector<Fold> kfold_splits(Index n, int k, std::uint64_t seed, double validation_fraction = 0.2) {
  if (k < 2) throw std::invalid_argument("kfold_splits needs k >= 2");
  if (n < k) throw std::invalid_argument("kfold_splits needs N >= k");
  Rng rng(seed);
  const std::vector<Index> order = permutation(rng, n);
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  const Index base = n / k;
  const Index extra = n % k;
  Index pos = 0;
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (int f = 0; f < k; ++f) {
    const Index size = base + (f < extra ? 1 : 0);
    for (Index i = 0; i < size; ++i) fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(pos + i)])] = f;
    pos += size;
  }
  for (int f = 0; f < k; ++f) {
    Fold& fold = folds[static_cast<std::size_t>(f)];
    for (Index i = 0; i < n; ++i) (fold_of[static_cast<std::size_t>(i)] == f ? fold.test : fold.train).push_back(i);
    Rng inner = Rng::stream(seed, static_cast<std::uint64_t>(f) + 1);
    std::vector<Index> shuffled;
    for (Index idx : permutation(inner, static_cast<Index>(fold.train.size()))) {
      shuffled.push_back(fold.train[static_cast<std::size_t>(idx)]);
    }
    const auto n_val = static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(shuffled.size())));
    fold.validation.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
    fold.inner_train.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val), shuffled.end());
    std::sort(fold.validation.begin(), fold.validation.end());
    std::sort(fold.inner_train.begin(), fold.inner_train.end());
  }
  return folds;
}

/// Two-column CSV (index, fold) of test-fold membership.
inline void write_fold_assignments(const std::string& path, const std::vector<Fold>& folds) {
  std::vector<std::pair<Index, int>> rows;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (Index i : folds[f].test) rows.emplace_back(i, static_cast<int>(f));
  }
  std::sort(rows.begin(), rows.end());
  std::ofstream out(path);
  if (!out) throw CsvError("cannot write '" + path + "'");
  out << "index,fold\n";
  for (const auto& [i, f] : rows) out << i << "," << f << "\n";
}

// --- Metrics -------------------------------------------------------------

struct MetricRecord {
  Task task = Task::regression;
  double value = 0.0;   // MSE (regression) or 0-1 error rate (classification)
  double stderr_ = 0.0; // standard error of the per-sample losses
  Index count = 0;

  std::string_view name() const { return task == Task::regression ? "mse" : "error"; }
};

/// For classification, predictions are class-1 probabilities (or hard labels)
/// thresholded at 0.5.
inline MetricRecord metrics(const Vector& predictions, const Vector& truth, Task task) {
  require_dim("metrics", truth.size(), predictions.size());
  MetricRecord rec;
  rec.task = task;
  rec.count = truth.size();
  if (rec.count == 0) return rec;
  Vector loss(truth.size());
  for (Index i = 0; i < truth.size(); ++i) {
    if (task == Task::regression) {
      const double e = predictions(i) - truth(i);
      loss(i) = e * e;
    } else {
      const double label = predictions(i) >= 0.5 ? 1.0 : 0.0;
      loss(i) = label == truth(i) ? 0.0 : 1.0;
    }
  }
  rec.value = loss.mean();
  if (rec.count > 1) {
    const double var = (loss.array() - rec.value).square().sum() / static_cast<double>(rec.count - 1);
    rec.stderr_ = std::sqrt(var / static_cast<double>(rec.count));
  }
  return rec;
}

struct FoldSummary {
  double mean = 0.0;
  double stderr_ = 0.0;
};

/// Mean and standard error across folds.
inline FoldSummary summarize_folds(const std::vector<double>& values) {
  FoldSummary s;
  if (values.empty()) return s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return s;
}

// --- Synthetic data ------------------------------------------------------

struct SynthOptions {
  GaussianMixtureSpec spec = two_bump_spectrum();
  Index n = 1000;
  Index m_true = 250;
  double noise = 1.0;  // standard deviation of the additive Gaussian noise
  double x_std = 4.0;  // X_i ~ N(0, x_std^2 I)
  std::uint64_t seed = 1;
};

struct SynthResult {
  Dataset data;
  GaussianMixtureSpec spec;  // ground-truth spectral density
  FrequencyMatrix w_true;
  Vector beta;
};

/// X_i ~ N(0, x_std^2 I); w_j ~ spec (m_true of them); beta ~ N(0, I);
/// Y_i = phi(X_i)^T beta + noise * N(0, 1).
inline SynthResult synth_generate(const SynthOptions& options) {
  options.spec.validate();
  Rng rng(options.seed);
  const Index d = options.spec.dim();
  SynthResult out;
  out.spec = options.spec;
  out.data.task = Task::regression;
  out.data.x.resize(options.n, d);
  for (Index i = 0; i < options.n; ++i) {
    for (Index c = 0; c < d; ++c) out.data.x(i, c) = options.x_std * rng.normal();
  }
  out.w_true = sample_frequencies(options.spec, options.m_true, rng);
  out.beta = standard_normal_vector(rng, 2 * options.m_true);
  out.data.y = build_design(out.data.x, out.w_true) * out.beta;
  if (options.noise > 0.0) {
    for (Index i = 0; i < options.n; ++i) out.data.y(i) += options.noise * rng.normal();
  }
  return out;
}

/// Two interleaved half-moons in 2-D with isotropic Gaussian jitter.
inline Dataset synth_moons(Index n, double noise, std::uint64_t seed) {
  Rng rng(seed);
  Dataset out;
  out.task = Task::classification;
  out.x.resize(n, 2);
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const bool upper = i % 2 == 0;
    const double angle = std::numbers::pi * rng.uniform();
    if (upper) {
      out.x(i, 0) = std::cos(angle);
      out.x(i, 1) = std::sin(angle);
    } else {
      out.x(i, 0) = 1.0 - std::cos(angle);
      out.x(i, 1) = 0.5 - std::sin(angle);
    }
    out.x(i, 0) += noise * rng.normal();
    out.x(i, 1) += noise * rng.normal();
    out.y(i) = upper ? 0.0 : 1.0;
  }
  return out;
}

}  // namespace bank
