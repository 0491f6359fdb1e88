#pragma once

// Declarative run configuration (JSON). Every default is overridable and the
// effective configuration can be serialized back for provenance.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bank/baselines.hpp"
#include "bank/core.hpp"
#include "bank/data.hpp"
#include "bank/sampler.hpp"

namespace bank {

using Json = nlohmann::json;

/// Invalid or incomplete configuration; `field` names the offending key path.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& field, const std::string& problem)
      : std::invalid_argument("config field '" + field + "': " + problem), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct DataSource {
  std::string path;
  std::optional<std::string> target_name;
  int target_column = -1;
  bool header = true;
  std::map<double, double> label_map;
  bool skip_bad_rows = false;
};

struct SynthSource {
  std::string kind = "mixture";  // mixture | moons
  SynthOptions options;          // mixture recipe
  double moons_noise = 0.2;
};

struct RksSettings {
  KernelFamily::Tag family = KernelFamily::Tag::rbf;
  Index m = 500;
  BaselineGrid grid;
};

struct MklSettings {
  Index m = 500;
  std::vector<KernelFamily> bank;  // empty: laplace/rbf/cauchy at s/4, s, 4s
  BaselineGrid grid;
};

struct RunConfig {
  Task task = Task::regression;
  std::string method = "bank";
  std::vector<std::string> methods{"bank", "rks", "mkl"};  // benchmark only
  std::uint64_t seed = 1;
  std::string output_dir = "bank-out";
  std::optional<DataSource> data;
  std::optional<SynthSource> synth;
  bool standardize_x = true;
  double holdout = 0.2;  // train: share of rows held out for the test metric (0 disables)
  int folds = 5;
  double validation_fraction = 0.2;
  SamplerConfig sampler;
  RksSettings rks;
  MklSettings mkl;

  void validate() const;
};

namespace detail {

inline void check_keys(const Json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where.empty() ? "<root>" : where, "expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items()) {
    if (!ok.count(key)) throw ConfigError(where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <class T>
void read(const Json& obj, const char* key, const std::string& where, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string field = where.empty() ? key : where + "." + key;
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(field, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(field, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(field, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(field, "expected a string");
    }
    out = it->get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

inline Vector read_vector(const Json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(field, "expected an array of numbers");
    v(static_cast<Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline Matrix read_matrix(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a nonempty array of rows");
  const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
  Matrix m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = read_vector(j[r], field);
    if (static_cast<std::size_t>(row.size()) != cols) throw ConfigError(field, "ragged matrix");
    m.row(static_cast<Index>(r)) = row.transpose();
  }
  return m;
}

inline Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index r = 0; r < m.rows(); ++r) rows.push_back(vector_json(m.row(r).transpose()));
  return rows;
}

inline std::vector<double> read_doubles(const Json& obj, const char* key, const std::string& where,
                                        std::vector<double> fallback) {
  const auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  const Vector v = read_vector(*it, where + "." + key);
  return {v.data(), v.data() + v.size()};
}

inline GaussianMixtureSpec read_spectrum(const Json& j, const std::string& field) {
  if (!j.is_array() || j.empty()) throw ConfigError(field, "expected a nonempty array of components");
  GaussianMixtureSpec spec;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const std::string f = field + "[" + std::to_string(k) + "]";
    check_keys(j[k], f, {"weight", "mean", "cov"});
    MixtureComponent c;
    read(j[k], "weight", f, c.weight);
    if (!j[k].contains("mean") || !j[k].contains("cov")) throw ConfigError(f, "needs mean and cov");
    c.mean = read_vector(j[k]["mean"], f + ".mean");
    c.cov = read_matrix(j[k]["cov"], f + ".cov");
    spec.components.push_back(std::move(c));
  }
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(field, e.what());
  }
  return spec;
}

inline Json spectrum_json(const GaussianMixtureSpec& spec) {
  Json out = Json::array();
  for (const auto& c : spec.components) {
    out.push_back({{"weight", c.weight}, {"mean", vector_json(c.mean)}, {"cov", matrix_json(c.cov)}});
  }
  return out;
}

template <class Enum, class Parse>
void read_enum(const Json& obj, const char* key, const std::string& where, Enum& out, Parse parse) {
  std::string name;
  read(obj, key, where, name);
  if (name.empty()) return;
  try {
    out = parse(name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where.empty() ? std::string(key) : where + "." + key, e.what());
  }
}

inline ProposalMode parse_proposal(const std::string& s) {
  if (s == "per_frequency") return ProposalMode::per_frequency;
  if (s == "full_block") return ProposalMode::full_block;
  throw std::invalid_argument("expected per_frequency or full_block");
}
inline SwapMode parse_swap(const std::string& s) {
  if (s == "rank_update") return SwapMode::rank_update;
  if (s == "full_refit") return SwapMode::full_refit;
  throw std::invalid_argument("expected rank_update or full_refit");
}
inline PredictMode parse_predict(const std::string& s) {
  if (s == "average") return PredictMode::average;
  if (s == "final_state") return PredictMode::final_state;
  throw std::invalid_argument("expected average or final_state");
}

inline BaselineGrid read_grid(const Json& obj, const std::string& where, BaselineGrid grid) {
  grid.lambdas = read_doubles(obj, "lambdas", where, grid.lambdas);
  grid.scale_factors = read_doubles(obj, "scale_factors", where, grid.scale_factors);
  return grid;
}

}  // namespace detail

inline SamplerConfig parse_sampler(const Json& j, SamplerConfig cfg = {}) {
  const std::string w = "sampler";
  detail::check_keys(j, w, {"n_iters", "burn_in", "thin", "M", "L", "alpha", "weight_sigma", "a0", "b0", "niw",
                            "proposal", "swap", "refresh_every", "predict", "moderated"});
  detail::read(j, "n_iters", w, cfg.n_iters);
  detail::read(j, "burn_in", w, cfg.burn_in);
  detail::read(j, "thin", w, cfg.thin);
  detail::read(j, "M", w, cfg.m);
  detail::read(j, "L", w, cfg.draws);
  detail::read(j, "alpha", w, cfg.alpha);
  detail::read(j, "weight_sigma", w, cfg.weight_sigma);
  detail::read(j, "a0", w, cfg.a0);
  detail::read(j, "b0", w, cfg.b0);
  detail::read(j, "refresh_every", w, cfg.refresh_every);
  detail::read(j, "moderated", w, cfg.moderated);
  detail::read_enum(j, "proposal", w, cfg.proposal, detail::parse_proposal);
  detail::read_enum(j, "swap", w, cfg.swap, detail::parse_swap);
  detail::read_enum(j, "predict", w, cfg.predict, detail::parse_predict);
  if (j.contains("niw") && !j["niw"].is_null()) {
    const Json& n = j["niw"];
    detail::check_keys(n, "sampler.niw", {"mean", "kappa", "scale", "dof"});
    NiwParams p;
    if (!n.contains("mean") || !n.contains("scale")) throw ConfigError("sampler.niw", "needs mean and scale");
    p.mean = detail::read_vector(n["mean"], "sampler.niw.mean");
    p.scale = detail::read_matrix(n["scale"], "sampler.niw.scale");
    p.dof = static_cast<double>(p.mean.size()) + 2.0;
    detail::read(n, "kappa", "sampler.niw", p.kappa);
    detail::read(n, "dof", "sampler.niw", p.dof);
    cfg.niw = p;
  }
  return cfg;
}

inline Json sampler_json(const SamplerConfig& c) {
  Json j = {{"n_iters", c.n_iters},
            {"burn_in", c.burn_in},
            {"thin", c.thin},
            {"M", c.m},
            {"L", c.draws},
            {"alpha", c.alpha},
            {"weight_sigma", c.weight_sigma},
            {"a0", c.a0},
            {"b0", c.b0},
            {"proposal", c.proposal == ProposalMode::per_frequency ? "per_frequency" : "full_block"},
            {"swap", c.swap == SwapMode::rank_update ? "rank_update" : "full_refit"},
            {"refresh_every", c.refresh_every},
            {"predict", c.predict == PredictMode::average ? "average" : "final_state"},
            {"moderated", c.moderated}};
  if (c.niw) {
    j["niw"] = {{"mean", detail::vector_json(c.niw->mean)},
                {"kappa", c.niw->kappa},
                {"scale", detail::matrix_json(c.niw->scale)},
                {"dof", c.niw->dof}};
  } else {
    j["niw"] = nullptr;
  }
  return j;
}

inline Json family_json(const KernelFamily& f) { return {{"family", std::string(to_string(f.tag))}, {"scale", f.scale}}; }

inline RunConfig parse_config(const Json& j) {
  RunConfig cfg;
  detail::check_keys(j, "", {"task", "method", "methods", "seed", "output_dir", "data", "synth", "standardize_x",
                             "holdout", "folds", "validation_fraction", "sampler", "rks", "mkl"});
  detail::read_enum(j, "task", "", cfg.task, [](const std::string& s) { return parse_task(s); });
  detail::read(j, "method", "", cfg.method);
  if (j.contains("methods")) {
    if (!j["methods"].is_array()) throw ConfigError("methods", "expected an array of method names");
    cfg.methods.clear();
    for (const auto& m : j["methods"]) {
      if (!m.is_string()) throw ConfigError("methods", "expected an array of method names");
      cfg.methods.push_back(m.get<std::string>());
    }
  }
  detail::read(j, "seed", "", cfg.seed);
  detail::read(j, "output_dir", "", cfg.output_dir);
  detail::read(j, "standardize_x", "", cfg.standardize_x);
  detail::read(j, "holdout", "", cfg.holdout);
  detail::read(j, "folds", "", cfg.folds);
  detail::read(j, "validation_fraction", "", cfg.validation_fraction);

  if (j.contains("data")) {
    const Json& d = j["data"];
    detail::check_keys(d, "data", {"path", "target", "header", "label_map", "skip_bad_rows"});
    DataSource src;
    if (!d.contains("path")) throw ConfigError("data.path", "missing");
    detail::read(d, "path", "data", src.path);
    if (d.contains("target")) {
      if (d["target"].is_string()) {
        src.target_name = d["target"].get<std::string>();
      } else if (d["target"].is_number_integer()) {
        src.target_column = d["target"].get<int>();
      } else {
        throw ConfigError("data.target", "expected a column name or index");
      }
    }
    detail::read(d, "header", "data", src.header);
    detail::read(d, "skip_bad_rows", "data", src.skip_bad_rows);
    if (d.contains("label_map")) {
      if (!d["label_map"].is_object()) throw ConfigError("data.label_map", "expected an object");
      for (const auto& [from, to] : d["label_map"].items()) {
        const auto key = detail::parse_double(from);
        if (!key || !to.is_number()) throw ConfigError("data.label_map", "entries must map numbers to numbers");
        src.label_map[*key] = to.get<double>();
      }
    }
    cfg.data = src;
  }
  if (j.contains("synth")) {
    const Json& s = j["synth"];
    detail::check_keys(s, "synth", {"kind", "n", "m_true", "noise", "x_std", "seed", "spectrum", "moons_noise"});
    SynthSource src;
    src.options.seed = cfg.seed;
    detail::read(s, "kind", "synth", src.kind);
    detail::read(s, "n", "synth", src.options.n);
    detail::read(s, "m_true", "synth", src.options.m_true);
    detail::read(s, "noise", "synth", src.options.noise);
    detail::read(s, "x_std", "synth", src.options.x_std);
    detail::read(s, "seed", "synth", src.options.seed);
    detail::read(s, "moons_noise", "synth", src.moons_noise);
    if (s.contains("spectrum")) src.options.spec = detail::read_spectrum(s["spectrum"], "synth.spectrum");
    cfg.synth = src;
  }
  if (j.contains("sampler")) cfg.sampler = parse_sampler(j["sampler"]);
  cfg.sampler.seed = cfg.seed;
  cfg.sampler.task = cfg.task;
  if (j.contains("rks")) {
    const Json& r = j["rks"];
    detail::check_keys(r, "rks", {"family", "M", "lambdas", "scale_factors"});
    detail::read_enum(r, "family", "rks", cfg.rks.family, [](const std::string& s) { return parse_family(s); });
    detail::read(r, "M", "rks", cfg.rks.m);
    cfg.rks.grid = detail::read_grid(r, "rks", cfg.rks.grid);
  }
  if (j.contains("mkl")) {
    const Json& m = j["mkl"];
    detail::check_keys(m, "mkl", {"M", "bank", "lambdas"});
    detail::read(m, "M", "mkl", cfg.mkl.m);
    cfg.mkl.grid = detail::read_grid(m, "mkl", cfg.mkl.grid);
    if (m.contains("bank")) {
      if (!m["bank"].is_array()) throw ConfigError("mkl.bank", "expected an array of {family, scale}");
      for (std::size_t i = 0; i < m["bank"].size(); ++i) {
        const std::string f = "mkl.bank[" + std::to_string(i) + "]";
        detail::check_keys(m["bank"][i], f, {"family", "scale"});
        KernelFamily fam;
        detail::read_enum(m["bank"][i], "family", f, fam.tag, [](const std::string& s) { return parse_family(s); });
        detail::read(m["bank"][i], "scale", f, fam.scale);
        cfg.mkl.bank.push_back(fam);
      }
    }
  }
  cfg.rks.grid.validation_fraction = cfg.validation_fraction;
  cfg.mkl.grid.validation_fraction = cfg.validation_fraction;
  return cfg;
}

inline void RunConfig::validate() const {
  auto known = [](const std::string& m) { return m == "bank" || m == "rks" || m == "mkl"; };
  if (!known(method)) throw ConfigError("method", "expected bank, rks or mkl");
  if (methods.empty()) throw ConfigError("methods", "must name at least one method");
  for (const auto& m : methods) {
    if (!known(m)) throw ConfigError("methods", "unknown method '" + m + "'");
  }
  if (!data && !synth) throw ConfigError("data.path", "missing (give a data file or a synth section)");
  if (data && synth) throw ConfigError("data", "give either data or synth, not both");
  if (data) {
    if (data->path.empty()) throw ConfigError("data.path", "missing");
    if (!std::filesystem::exists(data->path)) throw ConfigError("data.path", "file '" + data->path + "' not found");
  }
  if (synth) {
    if (synth->kind != "mixture" && synth->kind != "moons") throw ConfigError("synth.kind", "expected mixture or moons");
    if (synth->options.n < 2) throw ConfigError("synth.n", "must be at least 2");
    if (synth->kind == "mixture" && task != Task::regression) {
      throw ConfigError("synth.kind", "the mixture recipe generates regression data");
    }
    if (synth->kind == "moons" && task != Task::classification) {
      throw ConfigError("synth.kind", "moons data is a classification task");
    }
    if (synth->options.m_true < 1) throw ConfigError("synth.m_true", "must be positive");
    if (synth->options.noise < 0.0) throw ConfigError("synth.noise", "must be nonnegative");
  }
  if (!(holdout >= 0.0 && holdout < 1.0)) throw ConfigError("holdout", "must lie in [0, 1)");
  if (folds < 2) throw ConfigError("folds", "must be at least 2");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction", "must lie in (0, 1)");
  }
  try {
    sampler.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("sampler", e.what());
  }
  if (rks.m < 1) throw ConfigError("rks.M", "must be positive");
  if (mkl.m < 1) throw ConfigError("mkl.M", "must be positive");
  if (rks.grid.lambdas.empty()) throw ConfigError("rks.lambdas", "must be nonempty");
  if (rks.grid.scale_factors.empty()) throw ConfigError("rks.scale_factors", "must be nonempty");
  if (mkl.grid.lambdas.empty()) throw ConfigError("mkl.lambdas", "must be nonempty");
  for (double l : rks.grid.lambdas) {
    if (!(l > 0.0)) throw ConfigError("rks.lambdas", "entries must be positive");
  }
  for (double f : rks.grid.scale_factors) {
    if (!(f > 0.0)) throw ConfigError("rks.scale_factors", "entries must be positive");
  }
  for (double l : mkl.grid.lambdas) {
    if (!(l > 0.0)) throw ConfigError("mkl.lambdas", "entries must be positive");
  }
  for (const auto& f : mkl.bank) {
    if (!(f.scale > 0.0)) throw ConfigError("mkl.bank", "scales must be positive");
  }
  const Index bank_size = mkl.bank.empty() ? 9 : static_cast<Index>(mkl.bank.size());
  if (mkl.m < bank_size) throw ConfigError("mkl.M", "must be at least the number of banks");
}

/// Effective configuration with every default filled in.
inline Json config_json(const RunConfig& c) {
  Json j;
  j["task"] = std::string(to_string(c.task));
  j["method"] = c.method;
  j["methods"] = c.methods;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["standardize_x"] = c.standardize_x;
  j["holdout"] = c.holdout;
  j["folds"] = c.folds;
  j["validation_fraction"] = c.validation_fraction;
  if (c.data) {
    Json d = {{"path", c.data->path}, {"header", c.data->header}, {"skip_bad_rows", c.data->skip_bad_rows}};
    if (c.data->target_name) {
      d["target"] = *c.data->target_name;
    } else {
      d["target"] = c.data->target_column;
    }
    Json lm = Json::object();
    for (const auto& [from, to] : c.data->label_map) {
      std::ostringstream key;
      key << std::setprecision(17) << from;
      lm[key.str()] = to;
    }
    d["label_map"] = lm;
    j["data"] = d;
  }
  if (c.synth) {
    j["synth"] = {{"kind", c.synth->kind},
                  {"n", c.synth->options.n},
                  {"m_true", c.synth->options.m_true},
                  {"noise", c.synth->options.noise},
                  {"x_std", c.synth->options.x_std},
                  {"seed", c.synth->options.seed},
                  {"moons_noise", c.synth->moons_noise},
                  {"spectrum", detail::spectrum_json(c.synth->options.spec)}};
  }
  j["sampler"] = sampler_json(c.sampler);
  j["rks"] = {{"family", std::string(to_string(c.rks.family))},
              {"M", c.rks.m},
              {"lambdas", c.rks.grid.lambdas},
              {"scale_factors", c.rks.grid.scale_factors}};
  Json bank = Json::array();
  for (const auto& f : c.mkl.bank) bank.push_back(family_json(f));
  j["mkl"] = {{"M", c.mkl.m}, {"bank", bank}, {"lambdas", c.mkl.grid.lambdas}};
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("--config", std::string("not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace bank
