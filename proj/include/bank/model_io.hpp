#pragma once

// Trained-model container and its on-disk format.
//
// Layout:
//   BANKMODEL\n
//   version <n>\n
//   metadata <bytes>\n
//   <JSON metadata, <bytes> long>\n
//   data\n
//   <blocks: little-endian IEEE-754 f64, row-major, in metadata "blocks" order>
//
// The metadata names every block with its shape, so the payload can be read
// from any language without this library.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bank/baselines.hpp"
#include "bank/config.hpp"
#include "bank/data.hpp"
#include "bank/sampler.hpp"
#include "bank/spectral_mixture.hpp"

namespace bank {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelMagic = "BANKMODEL";

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainedModel {
  std::string method;  // bank | rks | mkl
  Task task = Task::regression;
  std::uint64_t seed = 1;
  Json config;  // effective run configuration
  Standardization standardization;
  std::vector<std::string> columns;
  std::string target;
  Matrix x_train;  // standardized
  Vector y_train;  // standardized (regression) or labels

  // bank
  SamplerConfig sampler;
  std::vector<SpectralState> snapshots;
  SpectralState final_state;

  // rks | mkl
  std::optional<LinearFeatureModel> linear;

  Index dim() const { return x_train.cols(); }
  bool has_spectral_state() const { return method == "bank"; }
};

/// Predictions in original target units: inverse-standardized values (and
/// predictive variances) for regression, class-1 probabilities otherwise.
inline Predictions predict(const TrainedModel& model, const Matrix& x_raw) {
  require_dim("model input columns", model.dim(), x_raw.cols());
  const Matrix x = model.standardization.apply_x(x_raw);
  Predictions out;
  if (model.method == "bank") {
    ChainTrace trace;
    trace.snapshots = model.snapshots;
    trace.final_state = model.final_state;
    out = posterior_predict(trace, model.x_train, model.y_train, x, model.sampler);
  } else {
    if (!model.linear) throw ModelFormatError("baseline model has no weights");
    out.value = model.linear->predict(x);
  }
  if (model.task == Task::regression) {
    out.value = model.standardization.invert_y(out.value);
    if (out.variance && model.standardization.y_enabled) {
      const double s2 = model.standardization.y_scale * model.standardization.y_scale;
      out.variance = (*out.variance * s2).eval();
    }
  }
  return out;
}

namespace detail {

class BlockWriter {
 public:
  void add(const std::string& name, const Matrix& m) {
    blocks_.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    for (Index r = 0; r < m.rows(); ++r) {
      for (Index c = 0; c < m.cols(); ++c) put(m(r, c));
    }
  }
  void add(const std::string& name, const Vector& v) { add(name, Matrix(v)); }
  const Json& table() const { return blocks_; }
  const std::string& payload() const { return bytes_; }

 private:
  void put(double value) {
    const auto bits = std::bit_cast<std::uint64_t>(value);
    for (int b = 0; b < 8; ++b) bytes_.push_back(static_cast<char>((bits >> (8 * b)) & 0xffu));
  }
  Json blocks_ = Json::array();
  std::string bytes_;
};

class BlockReader {
 public:
  BlockReader(const Json& table, const std::string& payload) {
    std::size_t offset = 0;
    for (const auto& b : table) {
      const auto rows = b.at("rows").get<Index>();
      const auto cols = b.at("cols").get<Index>();
      const std::size_t bytes = static_cast<std::size_t>(rows * cols) * 8;
      if (rows < 0 || cols < 0 || offset + bytes > payload.size()) throw ModelFormatError("model payload truncated");
      Matrix m(rows, cols);
      for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
          std::uint64_t bits = 0;
          for (int k = 0; k < 8; ++k) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[offset + k])) << (8 * k);
          }
          m(r, c) = std::bit_cast<double>(bits);
          offset += 8;
        }
      }
      blocks_[b.at("name").get<std::string>()] = std::move(m);
    }
    if (offset != payload.size()) throw ModelFormatError("model payload has trailing bytes");
  }

  const Matrix& matrix(const std::string& name) const {
    const auto it = blocks_.find(name);
    if (it == blocks_.end()) throw ModelFormatError("model file lacks block '" + name + "'");
    return it->second;
  }
  Vector vector(const std::string& name) const {
    const Matrix& m = matrix(name);
    if (m.cols() != 1) throw ModelFormatError("block '" + name + "' is not a column");
    return m.col(0);
  }

 private:
  std::map<std::string, Matrix> blocks_;
};

inline Json state_json(const SpectralState& s, const std::string& prefix, BlockWriter& blocks) {
  blocks.add(prefix + ".w", s.w.matrix());
  Json comps = Json::array();
  for (std::size_t k = 0; k < s.components.size(); ++k) {
    const std::string name = prefix + ".component" + std::to_string(k);
    blocks.add(name + ".mean", s.components[k].mean());
    blocks.add(name + ".cov", s.components[k].cov());
    comps.push_back(name);
  }
  return {{"w", prefix + ".w"}, {"z", s.z}, {"counts", s.counts}, {"alpha", s.alpha}, {"components", comps}};
}

inline SpectralState state_from_json(const Json& j, const BlockReader& blocks) {
  SpectralState s;
  s.w = FrequencyMatrix(blocks.matrix(j.at("w").get<std::string>()));
  s.z = j.at("z").get<std::vector<int>>();
  s.counts = j.at("counts").get<std::vector<int>>();
  s.alpha = j.at("alpha").get<double>();
  for (const auto& name : j.at("components")) {
    const std::string n = name.get<std::string>();
    s.components.emplace_back(blocks.vector(n + ".mean"), blocks.matrix(n + ".cov"));
  }
  try {
    s.validate();
  } catch (const std::logic_error& e) {
    throw ModelFormatError(std::string("stored spectral state is inconsistent: ") + e.what());
  }
  return s;
}

}  // namespace detail

inline void save_model(const std::string& path, const TrainedModel& model) {
  detail::BlockWriter blocks;
  Json meta;
  meta["format_version"] = kModelFormatVersion;
  meta["method"] = model.method;
  meta["task"] = std::string(to_string(model.task));
  meta["seed"] = model.seed;
  meta["config"] = model.config;
  meta["columns"] = model.columns;
  meta["target"] = model.target;
  const Standardization& st = model.standardization;
  blocks.add("standardization.x_mean", st.x_mean);
  blocks.add("standardization.x_scale", st.x_scale);
  meta["standardization"] = {{"x_enabled", st.x_enabled}, {"y_enabled", st.y_enabled},
                             {"x_constant", st.x_constant}, {"y_mean", st.y_mean},
                             {"y_scale", st.y_scale}};
  blocks.add("x_train", model.x_train);
  blocks.add("y_train", model.y_train);
  if (model.method == "bank") {
    meta["sampler"] = sampler_json(model.sampler);
    meta["sampler_seed"] = model.sampler.seed;
    Json snaps = Json::array();
    for (std::size_t i = 0; i < model.snapshots.size(); ++i) {
      snaps.push_back(detail::state_json(model.snapshots[i], "snapshot" + std::to_string(i), blocks));
    }
    meta["snapshots"] = snaps;
    meta["final_state"] = detail::state_json(model.final_state, "final", blocks);
  } else {
    if (!model.linear) throw ModelFormatError("baseline model has no weights");
    Json banks = Json::array();
    for (std::size_t b = 0; b < model.linear->banks.size(); ++b) {
      const std::string name = "bank" + std::to_string(b) + ".w";
      blocks.add(name, model.linear->banks[b].w.matrix());
      Json fam = family_json(model.linear->banks[b].family);
      fam["w"] = name;
      banks.push_back(fam);
    }
    blocks.add("weights", model.linear->weights);
    meta["banks"] = banks;
    meta["lambda"] = model.linear->lambda;
  }
  meta["blocks"] = blocks.table();

  const std::string text = meta.dump(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ModelFormatError("cannot write model file '" + path + "'");
  out << kModelMagic << "\nversion " << kModelFormatVersion << "\nmetadata " << text.size() << "\n"
      << text << "\ndata\n";
  out.write(blocks.payload().data(), static_cast<std::streamsize>(blocks.payload().size()));
  if (!out) throw ModelFormatError("failed writing model file '" + path + "'");
}

inline TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open model file '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kModelMagic) throw ModelFormatError("'" + path + "' is not a model file");
  int version = -1;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "version %d", &version) != 1) {
    throw ModelFormatError("model file '" + path + "' has no version line");
  }
  if (version != kModelFormatVersion) {
    throw ModelFormatError("model file '" + path + "' has format version " + std::to_string(version) +
                           "; this build reads version " + std::to_string(kModelFormatVersion));
  }
  std::size_t meta_bytes = 0;
  if (!std::getline(in, line) || std::sscanf(line.c_str(), "metadata %zu", &meta_bytes) != 1) {
    throw ModelFormatError("model file '" + path + "' has no metadata header");
  }
  std::string text(meta_bytes, '\0');
  in.read(text.data(), static_cast<std::streamsize>(meta_bytes));
  if (!in) throw ModelFormatError("model metadata truncated");
  std::getline(in, line);  // newline after the metadata
  if (!std::getline(in, line) || line != "data") throw ModelFormatError("model file lacks data section");
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  TrainedModel model;
  try {
    const Json meta = Json::parse(text);
    if (meta.at("format_version").get<int>() != kModelFormatVersion) {
      throw ModelFormatError("model metadata version disagrees with the header");
    }
    const detail::BlockReader blocks(meta.at("blocks"), payload);
    model.method = meta.at("method").get<std::string>();
    model.task = parse_task(meta.at("task").get<std::string>());
    model.seed = meta.at("seed").get<std::uint64_t>();
    model.config = meta.at("config");
    model.columns = meta.at("columns").get<std::vector<std::string>>();
    model.target = meta.at("target").get<std::string>();
    const Json& st = meta.at("standardization");
    model.standardization.x_enabled = st.at("x_enabled").get<bool>();
    model.standardization.y_enabled = st.at("y_enabled").get<bool>();
    model.standardization.x_constant = st.at("x_constant").get<std::vector<bool>>();
    model.standardization.y_mean = st.at("y_mean").get<double>();
    model.standardization.y_scale = st.at("y_scale").get<double>();
    model.standardization.x_mean = blocks.vector("standardization.x_mean");
    model.standardization.x_scale = blocks.vector("standardization.x_scale");
    model.x_train = blocks.matrix("x_train");
    model.y_train = blocks.vector("y_train");
    if (model.method == "bank") {
      model.sampler = parse_sampler(meta.at("sampler"));
      model.sampler.seed = meta.at("sampler_seed").get<std::uint64_t>();
      model.sampler.task = model.task;
      for (const auto& s : meta.at("snapshots")) model.snapshots.push_back(detail::state_from_json(s, blocks));
      model.final_state = detail::state_from_json(meta.at("final_state"), blocks);
    } else if (model.method == "rks" || model.method == "mkl") {
      LinearFeatureModel lin;
      lin.task = model.task;
      lin.lambda = meta.at("lambda").get<double>();
      for (const auto& b : meta.at("banks")) {
        KernelFamily fam{parse_family(b.at("family").get<std::string>()), b.at("scale").get<double>()};
        lin.banks.push_back({fam, FrequencyMatrix(blocks.matrix(b.at("w").get<std::string>()))});
      }
      lin.weights = blocks.vector("weights");
      model.linear = std::move(lin);
    } else {
      throw ModelFormatError("unknown model method '" + model.method + "'");
    }
  } catch (const Json::exception& e) {
    throw ModelFormatError(std::string("malformed model metadata: ") + e.what());
  }
  return model;
}

}  // namespace bank
