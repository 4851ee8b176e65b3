#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "nmpq/analysis.hpp"
#include "nmpq/data.hpp"
#include "nmpq/frozen.hpp"
#include "nmpq/training.hpp"

namespace nmpq {

using json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- run configuration ----

struct DatasetConfig {
  bool synthetic = true;
  // synthetic
  SyntheticKind kind = SyntheticKind::kRegressionNonlinear;
  std::size_t n = 2000;
  std::size_t d = 8;
  double noise = 0.1;
  std::uint64_t seed = 7;
  // csv
  std::string csv_path;
  CsvSchema csv_schema;

  Dataset load() const {
    if (synthetic) return synth_tabular(kind, n, d, noise, seed);
    return load_csv(csv_path, csv_schema);
  }
};

struct RunConfig {
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;
  QuantConfig quant;
  std::string output_dir = "runs";

  json normalized;  // config with defaults applied; hashed for provenance
};

namespace detail {

inline void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                                const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("config: unknown key '" + (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace detail

inline QuantModeKind quant_mode_from_string(const std::string& s) {
  if (s == "full_precision") return QuantModeKind::kFullPrecision;
  if (s == "uniform") return QuantModeKind::kUniform;
  if (s == "nmp_weights_only") return QuantModeKind::kNmpWeightsOnly;
  if (s == "nmp_weights_acts") return QuantModeKind::kNmpWeightsActs;
  throw ConfigError("config: unknown quant.mode '" + s + "'");
}

inline std::string quant_mode_to_string(QuantModeKind k) {
  switch (k) {
    case QuantModeKind::kFullPrecision: return "full_precision";
    case QuantModeKind::kUniform: return "uniform";
    case QuantModeKind::kNmpWeightsOnly: return "nmp_weights_only";
    default: return "nmp_weights_acts";
  }
}

inline RunConfig parse_run_config(const json& j) {
  detail::reject_unknown_keys(j, {"dataset", "model", "train", "quant", "output_dir"}, "");
  RunConfig cfg;

  if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset'");
  {
    const json& d = j.at("dataset");
    detail::reject_unknown_keys(d,
                                {"type", "kind", "n", "d", "noise", "seed", "path", "target",
                                 "task", "header", "delimiter"},
                                "dataset");
    const std::string type = d.value("type", "synthetic");
    if (type == "synthetic") {
      cfg.dataset.synthetic = true;
      cfg.dataset.kind = synthetic_kind_from_string(d.value("kind", "regression_nonlinear"));
      cfg.dataset.n = d.value("n", 2000);
      cfg.dataset.d = d.value("d", 8);
      cfg.dataset.noise = d.value("noise", 0.1);
      cfg.dataset.seed = d.value("seed", 7);
      if (cfg.dataset.n < 10) throw ConfigError("config: dataset.n must be >= 10");
      if (cfg.dataset.d < 2) throw ConfigError("config: dataset.d must be >= 2");
      if (cfg.dataset.noise < 0.0) throw ConfigError("config: dataset.noise must be >= 0");
    } else if (type == "csv") {
      cfg.dataset.synthetic = false;
      if (!d.contains("path")) throw ConfigError("config: dataset.path required for csv");
      cfg.dataset.csv_path = d.at("path").get<std::string>();
      const std::string task = d.value("task", "regression");
      if (task == "regression") {
        cfg.dataset.csv_schema.task = Task::kRegression;
      } else if (task == "classification") {
        cfg.dataset.csv_schema.task = Task::kClassification;
      } else {
        throw ConfigError("config: dataset.task must be regression or classification");
      }
      if (!d.contains("target")) throw ConfigError("config: dataset.target required for csv");
      if (d.at("target").is_string()) {
        cfg.dataset.csv_schema.target_name = d.at("target").get<std::string>();
      } else {
        cfg.dataset.csv_schema.target_column = d.at("target").get<int>();
      }
      cfg.dataset.csv_schema.has_header = d.value("header", false);
      const std::string delim = d.value("delimiter", ",");
      if (delim.size() != 1) throw ConfigError("config: dataset.delimiter must be one character");
      cfg.dataset.csv_schema.delimiter = delim[0];
    } else {
      throw ConfigError("config: dataset.type must be synthetic or csv");
    }
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    detail::reject_unknown_keys(m, {"hidden", "nonlinearity"}, "model");
    if (m.contains("hidden")) {
      cfg.model.hidden.clear();
      for (const auto& h : m.at("hidden")) {
        const long long v = h.get<long long>();
        if (v < 1) throw ConfigError("config: model.hidden sizes must be >= 1");
        cfg.model.hidden.push_back(static_cast<std::size_t>(v));
      }
    }
    const std::string nl = m.value("nonlinearity", "relu");
    if (nl == "relu") {
      cfg.model.hidden_nonlinearity = Nonlinearity::kRelu;
    } else if (nl == "identity") {
      cfg.model.hidden_nonlinearity = Nonlinearity::kIdentity;
    } else {
      throw ConfigError("config: model.nonlinearity must be relu or identity");
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::reject_unknown_keys(
        t, {"lr", "epochs", "patience", "batch_size", "seeds", "split", "split_seed"}, "train");
    cfg.train.lr = t.value("lr", cfg.train.lr);
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.patience = t.value("patience", cfg.train.patience);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    if (t.contains("seeds")) {
      cfg.train.seeds.clear();
      for (const auto& s : t.at("seeds")) cfg.train.seeds.push_back(s.get<std::uint64_t>());
    }
    if (t.contains("split")) {
      const auto& sp = t.at("split");
      if (!sp.is_array() || sp.size() != 3) {
        throw ConfigError("config: train.split must be [train, val, test] fractions");
      }
      cfg.train.train_fraction = sp[0].get<double>();
      cfg.train.val_fraction = sp[1].get<double>();
      cfg.train.test_fraction = sp[2].get<double>();
    }
    if (t.contains("split_seed")) {
      cfg.train.split_seed = t.at("split_seed").get<std::uint64_t>();
    }
  }
  try {
    cfg.train.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (!j.contains("quant")) throw ConfigError("config: missing 'quant'");
  {
    const json& q = j.at("quant");
    detail::reject_unknown_keys(q,
                                {"mode", "uniform_bits", "uniform_act_bits", "weight_thresholds",
                                 "weight_candidates", "act_thresholds", "act_candidates", "tau",
                                 "weight_init_strength", "act_init_strength"},
                                "quant");
    if (!q.contains("mode")) throw ConfigError("config: missing 'quant.mode'");
    cfg.quant.mode.kind = quant_mode_from_string(q.at("mode").get<std::string>());
    cfg.quant.mode.uniform_bits = q.value("uniform_bits", 4.0);
    cfg.quant.mode.uniform_act_bits = q.value("uniform_act_bits", 0.0);
    cfg.quant.tau = q.value("tau", 0.05);
    if (q.contains("weight_thresholds")) {
      cfg.quant.weight_thresholds = q.at("weight_thresholds").get<std::vector<double>>();
    }
    if (q.contains("weight_candidates")) {
      cfg.quant.weight_candidates = q.at("weight_candidates").get<std::vector<double>>();
    }
    if (q.contains("act_thresholds")) {
      cfg.quant.act_thresholds = q.at("act_thresholds").get<std::vector<double>>();
    }
    if (q.contains("act_candidates")) {
      cfg.quant.act_candidates = q.at("act_candidates").get<std::vector<double>>();
    }
    cfg.quant.weight_init_strength = q.value("weight_init_strength", -1.0);
    cfg.quant.act_init_strength = q.value("act_init_strength", -1.0);
    if (cfg.quant.tau <= 0.0) throw ConfigError("config: quant.tau must be positive");
    const auto check_init = [](double v, const std::vector<double>& thresholds,
                               const char* key) {
      if (v < 0.0) return;  // default: first-band midpoint
      const double limit = thresholds.empty() ? 1.0 : thresholds.front();
      if (v >= limit) {
        throw ConfigError(std::string("config: quant.") + key +
                          " must lie in the lowest-precision band [0, t1)");
      }
    };
    check_init(cfg.quant.weight_init_strength, cfg.quant.weight_thresholds,
               "weight_init_strength");
    check_init(cfg.quant.act_init_strength, cfg.quant.act_thresholds, "act_init_strength");
    if (cfg.quant.mode.kind == QuantModeKind::kUniform) {
      const double b = cfg.quant.mode.uniform_bits;
      const bool ok = is_ternary_bits(b) || b == 1.0 || b == 2.0 || b == 4.0 || b == 8.0 ||
                      b == 16.0;
      if (!ok) throw ConfigError("config: quant.uniform_bits must be 1, 1.58, 2, 4, 8 or 16");
      const double ab = cfg.quant.mode.uniform_act_bits;
      if (ab != 0.0 && ab != 4.0 && ab != 8.0 && ab != 16.0) {
        throw ConfigError("config: quant.uniform_act_bits must be 0, 4, 8 or 16");
      }
    }
    for (double c : cfg.quant.weight_candidates) {
      if (c != 1.0 && c != 2.0 && c != 4.0 && c != 8.0 && c != 16.0) {
        throw ConfigError("config: quant.weight_candidates must be from {1,2,4,8,16}");
      }
    }
    for (double c : cfg.quant.act_candidates) {
      if (c != 4.0 && c != 8.0 && c != 16.0) {
        throw ConfigError("config: quant.act_candidates must be from {4,8,16}");
      }
    }
    try {
      cfg.quant.resolve_weight_ladder();
      cfg.quant.resolve_act_ladder();
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: quant ladder invalid: ") + e.what());
    }
  }

  cfg.output_dir = j.value("output_dir", "runs");

  // Normalized echo used for hashing and provenance.
  json norm;
  if (cfg.dataset.synthetic) {
    norm["dataset"] = {{"type", "synthetic"},
                       {"kind", cfg.dataset.kind == SyntheticKind::kRegressionNonlinear
                                    ? "regression_nonlinear"
                                    : (cfg.dataset.kind == SyntheticKind::kClassificationBlobs
                                           ? "classification_blobs"
                                           : "classification_moons")},
                       {"n", cfg.dataset.n},
                       {"d", cfg.dataset.d},
                       {"noise", cfg.dataset.noise},
                       {"seed", cfg.dataset.seed}};
  } else {
    norm["dataset"] = {{"type", "csv"},
                       {"path", cfg.dataset.csv_path},
                       {"target", cfg.dataset.csv_schema.target_name.empty()
                                      ? json(cfg.dataset.csv_schema.target_column)
                                      : json(cfg.dataset.csv_schema.target_name)},
                       {"task", cfg.dataset.csv_schema.task == Task::kRegression
                                    ? "regression"
                                    : "classification"},
                       {"header", cfg.dataset.csv_schema.has_header},
                       {"delimiter", std::string(1, cfg.dataset.csv_schema.delimiter)}};
  }
  norm["model"] = {{"hidden", cfg.model.hidden},
                   {"nonlinearity", cfg.model.hidden_nonlinearity == Nonlinearity::kRelu
                                        ? "relu"
                                        : "identity"}};
  norm["train"] = {{"lr", cfg.train.lr},
                   {"epochs", cfg.train.epochs},
                   {"patience", cfg.train.patience},
                   {"batch_size", cfg.train.batch_size},
                   {"seeds", cfg.train.seeds},
                   {"split", {cfg.train.train_fraction, cfg.train.val_fraction,
                              cfg.train.test_fraction}}};
  if (cfg.train.split_seed) norm["train"]["split_seed"] = *cfg.train.split_seed;
  norm["quant"] = {{"mode", quant_mode_to_string(cfg.quant.mode.kind)},
                   {"uniform_bits", cfg.quant.mode.uniform_bits},
                   {"uniform_act_bits", cfg.quant.mode.uniform_act_bits},
                   {"weight_thresholds", cfg.quant.weight_thresholds},
                   {"weight_candidates", cfg.quant.weight_candidates},
                   {"act_thresholds", cfg.quant.act_thresholds},
                   {"act_candidates", cfg.quant.act_candidates},
                   {"tau", cfg.quant.tau},
                   {"weight_init_strength", cfg.quant.weight_init_strength},
                   {"act_init_strength", cfg.quant.act_init_strength}};
  norm["output_dir"] = cfg.output_dir;
  cfg.normalized = norm;
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config: parse error in " + path + ": " + e.what());
  }
  return parse_run_config(j);
}

inline std::string config_hash(const RunConfig& cfg) {
  return detail::hex64(detail::fnv1a64(cfg.normalized.dump()));
}

// ---- atomic file writes ----

inline void atomic_write_file(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << contents;
  }
  std::filesystem::rename(tmp, path);
}

// ---- frozen model file ----

constexpr int kFrozenFormatVersion = 1;

inline json frozen_to_json(const FrozenModel& fm, const std::string& cfg_hash,
                           std::uint64_t seed, const std::string& mode, Task task,
                           int num_classes, const std::vector<std::string>& label_names,
                           const StandardizeStats& stats) {
  json j;
  j["format"] = "nmpq-frozen";
  j["version"] = kFrozenFormatVersion;
  j["mode"] = mode;
  j["task"] = task == Task::kRegression ? "regression" : "classification";
  j["num_classes"] = num_classes;
  j["label_names"] = label_names;
  j["provenance"] = {{"config_hash", cfg_hash}, {"seed", seed}};
  std::vector<int> constant(stats.constant_feature.begin(), stats.constant_feature.end());
  j["standardize"] = {{"mean", stats.mean}, {"stddev", stats.stddev}, {"constant", constant}};
  json layers = json::array();
  for (const auto& layer : fm.layers) {
    json jl;
    jl["d_in"] = layer.d_in;
    jl["d_out"] = layer.d_out;
    jl["nonlinearity"] = layer.nonlinearity == Nonlinearity::kRelu ? "relu" : "identity";
    json neurons = json::array();
    for (const auto& n : layer.neurons) {
      json jn;
      jn["bits"] = n.bits;
      jn["bias"] = n.bias;
      if (n.codes.empty()) {
        jn["weights"] = n.raw_weights;
      } else {
        jn["scale"] = n.scale;
        jn["codes"] = n.codes;
      }
      if (n.act_bits > 0.0) {
        jn["act_bits"] = n.act_bits;
        jn["alpha"] = n.alpha;
      }
      neurons.push_back(std::move(jn));
    }
    jl["neurons"] = std::move(neurons);
    layers.push_back(std::move(jl));
  }
  j["layers"] = std::move(layers);
  return j;
}

struct LoadedFrozenModel {
  FrozenModel model;
  Task task = Task::kRegression;
  int num_classes = 0;
  std::vector<std::string> label_names;
  StandardizeStats stats;
  std::string mode;
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline LoadedFrozenModel frozen_from_json(const json& j) {
  if (j.value("format", "") != "nmpq-frozen") {
    throw std::runtime_error("frozen model: unrecognized format");
  }
  if (j.value("version", -1) != kFrozenFormatVersion) {
    throw std::runtime_error("frozen model: unsupported version " +
                             std::to_string(j.value("version", -1)));
  }
  LoadedFrozenModel out;
  out.mode = j.value("mode", "");
  out.task = j.value("task", "regression") == "regression" ? Task::kRegression
                                                           : Task::kClassification;
  out.num_classes = j.value("num_classes", 0);
  if (j.contains("label_names")) {
    out.label_names = j.at("label_names").get<std::vector<std::string>>();
  }
  if (j.contains("provenance")) {
    out.config_hash = j.at("provenance").value("config_hash", "");
    out.seed = j.at("provenance").value("seed", 0ull);
  }
  if (j.contains("standardize")) {
    const json& s = j.at("standardize");
    out.stats.mean = s.at("mean").get<std::vector<double>>();
    out.stats.stddev = s.at("stddev").get<std::vector<double>>();
    for (int c : s.at("constant").get<std::vector<int>>()) {
      out.stats.constant_feature.push_back(c != 0);
    }
  }
  for (const auto& jl : j.at("layers")) {
    FrozenLayer layer;
    layer.d_in = jl.at("d_in").get<std::size_t>();
    layer.d_out = jl.at("d_out").get<std::size_t>();
    layer.nonlinearity = jl.value("nonlinearity", "identity") == "relu" ? Nonlinearity::kRelu
                                                                        : Nonlinearity::kIdentity;
    for (const auto& jn : jl.at("neurons")) {
      FrozenNeuron n;
      n.bits = jn.at("bits").get<double>();
      n.bias = jn.at("bias").get<double>();
      if (jn.contains("codes")) {
        n.scale = jn.at("scale").get<double>();
        n.codes = jn.at("codes").get<std::vector<std::int32_t>>();
      } else {
        n.raw_weights = jn.at("weights").get<std::vector<double>>();
        n.scale = 1.0;
      }
      if (jn.contains("act_bits")) {
        n.act_bits = jn.at("act_bits").get<double>();
        n.alpha = jn.at("alpha").get<double>();
      }
      layer.neurons.push_back(std::move(n));
    }
    if (layer.neurons.size() != layer.d_out) {
      throw std::runtime_error("frozen model: neuron count mismatch");
    }
    out.model.layers.push_back(std::move(layer));
  }
  return out;
}

inline void save_frozen(const std::string& path, const json& j) {
  atomic_write_file(path, j.dump(2) + "\n");
}

inline LoadedFrozenModel load_frozen(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open frozen model " + path);
  json j;
  in >> j;
  return frozen_from_json(j);
}

// ---- result/report serialization ----

inline json metrics_to_json(const Metrics& m) {
  json j;
  if (m.task == Task::kRegression) {
    j["mse"] = m.mse;
  } else {
    j["accuracy"] = m.accuracy;
    j["macro_f1"] = m.macro_f1;
  }
  return j;
}

inline json histogram_to_json(const BitHistogram& h) {
  json j = json::object();
  for (const auto& [bits, count] : h.counts) {
    std::ostringstream key;
    key << bits;
    j[key.str()] = count;
  }
  return j;
}

inline json bit_report_to_json(const BitReport& r) {
  json j;
  j["mean_weight_bits"] = r.mean_weight_bits;
  j["weighted_mean_weight_bits"] = r.weighted_mean_weight_bits;
  j["mean_act_bits"] = r.mean_act_bits;
  json layers = json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"fan_in", l.fan_in},
                      {"neurons", l.neurons},
                      {"weight_bits", histogram_to_json(l.weight_bits)},
                      {"act_bits", histogram_to_json(l.act_bits)}});
  }
  j["layers"] = std::move(layers);
  return j;
}

inline json memory_to_json(const MemoryFootprint& m) {
  return json{{"weight_bits_total", m.weight_bits_total},
              {"scale_overhead_bits", m.scale_overhead_bits},
              {"bias_bits", m.bias_bits},
              {"activation_bits_per_sample", m.activation_bits_per_sample},
              {"weight_bytes", m.weight_bytes},
              {"scale_bytes", m.scale_bytes},
              {"bias_bytes", m.bias_bytes},
              {"activation_bytes", m.activation_bytes},
              {"total_bytes", m.total_bytes},
              {"batch_size", m.batch_size}};
}

inline json seed_result_to_json(const SeedResult& r) {
  json j;
  j["seed"] = r.seed;
  j["aborted"] = r.aborted;
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  j["test_metrics"] = metrics_to_json(r.test_metrics);
  j["best_val_loss"] = r.best_val_loss;
  j["best_epoch"] = r.best_epoch;
  j["epochs_run"] = r.epochs_run;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  j["grad_sq_epoch_mean"] = r.grad_sq_epoch_mean;
  j["initial_weight_bits"] = histogram_to_json(r.initial_weight_bits);
  j["initial_act_bits"] = histogram_to_json(r.initial_act_bits);
  j["wall_seconds"] = r.wall_seconds;
  const ConvergenceDiagnostic diag = convergence_diagnostic(r.grad_sq_epoch_mean);
  j["convergence"] = {{"running_mean_slope", diag.running_mean_slope},
                      {"inv_sqrt_coefficient", diag.inv_sqrt_coefficient},
                      {"decaying", diag.decaying}};
  return j;
}

}  // namespace nmpq
