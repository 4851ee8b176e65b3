#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmpq/matrix.hpp"
#include "nmpq/rng.hpp"

namespace nmpq {

enum class Task { kRegression, kClassification };

struct Dataset {
  Matrix features;
  std::vector<double> targets;     // regression targets
  std::vector<int> class_labels;   // classification targets, indices in [0, k)
  Task task = Task::kRegression;
  int num_classes = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> label_names;  // class index -> original label

  std::size_t rows() const { return features.rows; }
  std::size_t dim() const { return features.cols; }
};

struct SplitSpec {
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 0;

  void validate() const {
    if (train_fraction <= 0.0 || val_fraction <= 0.0 || test_fraction <= 0.0) {
      throw std::invalid_argument("split: fractions must be positive");
    }
    const double sum = train_fraction + val_fraction + test_fraction;
    if (std::fabs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("split: fractions must sum to 1");
    }
  }
};

struct StandardizeStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<bool> constant_feature;  // zero-std features pass through unscaled
};

struct CsvSchema {
  int target_column = -1;          // index; or use target_name with header
  std::string target_name;
  Task task = Task::kRegression;
  bool has_header = false;
  char delimiter = ',';
};

namespace detail {

inline bool parse_double(const std::string& s, double& out) {
  try {
    std::size_t pos = 0;
    out = std::stod(s, &pos);
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size() && std::isfinite(out);
  } catch (...) {
    return false;
  }
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, delim)) fields.push_back(field);
  if (!line.empty() && line.back() == delim) fields.push_back("");
  return fields;
}

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace detail

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  int target_col = schema.target_column;

  if (schema.has_header) {
    if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    header = detail::split_line(line, schema.delimiter);
    for (auto& h : header) h = detail::trim(h);
    if (!schema.target_name.empty()) {
      target_col = -1;
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == schema.target_name) target_col = static_cast<int>(i);
      }
      if (target_col < 0) {
        throw std::runtime_error("load_csv: target column '" + schema.target_name +
                                 "' not found in header");
      }
    }
  } else if (!schema.target_name.empty()) {
    throw std::runtime_error("load_csv: target by name requires a header row");
  }

  Dataset ds;
  ds.task = schema.task;
  std::map<std::string, int> label_map;
  std::vector<double> values;
  std::size_t n_features = 0;
  std::size_t n_rows = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> fields = detail::split_line(line, schema.delimiter);
    if (target_col < 0 || target_col >= static_cast<int>(fields.size())) {
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                               ": target column " + std::to_string(target_col) +
                               " out of range (" + std::to_string(fields.size()) + " fields)");
    }
    if (n_rows == 0) {
      n_features = fields.size() - 1;
    } else if (fields.size() != n_features + 1) {
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                               ": expected " + std::to_string(n_features + 1) +
                               " fields, found " + std::to_string(fields.size()));
    }
    std::size_t fi = 0;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string cell = detail::trim(fields[c]);
      if (static_cast<int>(c) == target_col) {
        if (schema.task == Task::kRegression) {
          double v;
          if (!detail::parse_double(cell, v)) {
            throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                     ": non-numeric regression target '" + cell + "'");
          }
          ds.targets.push_back(v);
        } else {
          auto it = label_map.find(cell);
          if (it == label_map.end()) {
            const int idx = static_cast<int>(ds.label_names.size());
            label_map.emplace(cell, idx);
            ds.label_names.push_back(cell);
            ds.class_labels.push_back(idx);
          } else {
            ds.class_labels.push_back(it->second);
          }
        }
      } else {
        double v;
        if (!detail::parse_double(cell, v)) {
          std::string col_name = schema.has_header && c < header.size()
                                     ? "'" + header[c] + "'"
                                     : "#" + std::to_string(c);
          throw std::runtime_error("load_csv: line " + std::to_string(line_no) +
                                   ": non-numeric feature in column " + col_name);
        }
        values.push_back(v);
        ++fi;
      }
    }
    ++n_rows;
  }
  if (n_rows == 0) throw std::runtime_error("load_csv: no data rows in " + path);

  ds.features = Matrix(n_rows, n_features);
  ds.features.data = std::move(values);
  if (schema.task == Task::kClassification) {
    ds.num_classes = static_cast<int>(ds.label_names.size());
  }
  if (schema.has_header) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (static_cast<int>(c) != target_col) ds.feature_names.push_back(header[c]);
    }
  }
  return ds;
}

inline StandardizeStats compute_standardize_stats(const Dataset& train) {
  const std::vector<ColumnStats> cs = column_stats(train.features);
  StandardizeStats st;
  st.mean.resize(cs.size());
  st.stddev.resize(cs.size());
  st.constant_feature.resize(cs.size());
  for (std::size_t j = 0; j < cs.size(); ++j) {
    st.mean[j] = cs[j].mean;
    const double sd = std::sqrt(cs[j].variance);
    st.constant_feature[j] = sd <= 0.0;
    st.stddev[j] = st.constant_feature[j] ? 1.0 : sd;
  }
  return st;
}

inline Dataset standardize(const Dataset& ds, const StandardizeStats& stats) {
  if (stats.mean.size() != ds.dim()) {
    throw std::invalid_argument("standardize: stats dimension mismatch");
  }
  Dataset out = ds;
  for (std::size_t i = 0; i < out.features.rows; ++i) {
    for (std::size_t j = 0; j < out.features.cols; ++j) {
      if (!stats.constant_feature[j]) {
        out.features(i, j) = (out.features(i, j) - stats.mean[j]) / stats.stddev[j];
      }
    }
  }
  return out;
}

inline Dataset take_rows(const Dataset& ds, const std::vector<std::size_t>& idx) {
  Dataset out;
  out.task = ds.task;
  out.num_classes = ds.num_classes;
  out.feature_names = ds.feature_names;
  out.label_names = ds.label_names;
  out.features = Matrix(idx.size(), ds.dim());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (std::size_t c = 0; c < ds.dim(); ++c) out.features(r, c) = ds.features(idx[r], c);
    if (ds.task == Task::kRegression) {
      out.targets.push_back(ds.targets[idx[r]]);
    } else {
      out.class_labels.push_back(ds.class_labels[idx[r]]);
    }
  }
  return out;
}

struct DataSplits {
  Dataset train, val, test;
};

// Seeded shuffle, then contiguous slices; deterministic per seed, disjoint
// and exhaustive.
inline DataSplits split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  if (ds.rows() < 3) throw std::invalid_argument("split: need at least 3 rows");
  std::vector<std::size_t> idx(ds.rows());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  SeededRng rng(spec.seed);
  rng.shuffle(idx);

  const auto n = static_cast<double>(ds.rows());
  const auto n_train = static_cast<std::size_t>(std::lround(n * spec.train_fraction));
  const auto n_val = static_cast<std::size_t>(std::lround(n * spec.val_fraction));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= ds.rows()) {
    throw std::invalid_argument("split: a split would be empty");
  }
  std::vector<std::size_t> tr(idx.begin(), idx.begin() + n_train);
  std::vector<std::size_t> va(idx.begin() + n_train, idx.begin() + n_train + n_val);
  std::vector<std::size_t> te(idx.begin() + n_train + n_val, idx.end());
  return DataSplits{take_rows(ds, tr), take_rows(ds, va), take_rows(ds, te)};
}

enum class SyntheticKind { kRegressionNonlinear, kClassificationBlobs, kClassificationMoons };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "regression_nonlinear") return SyntheticKind::kRegressionNonlinear;
  if (s == "classification_blobs") return SyntheticKind::kClassificationBlobs;
  if (s == "classification_moons") return SyntheticKind::kClassificationMoons;
  throw std::invalid_argument("unknown synthetic dataset kind '" + s + "'");
}

// Stand-ins for the proprietary workloads: a nonlinear tabular regression
// target built from sinusoids and pairwise products, plus the usual blob and
// moon classification generators, all fully seeded.
inline Dataset synth_tabular(SyntheticKind kind, std::size_t n, std::size_t d, double noise,
                             std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("synth_tabular: n must be >= 10");
  if (d < 2) throw std::invalid_argument("synth_tabular: d must be >= 2");
  SeededRng rng(seed);
  Dataset ds;
  ds.features = Matrix(n, d);

  if (kind == SyntheticKind::kRegressionNonlinear) {
    ds.task = Task::kRegression;
    std::size_t pairs[3][2];
    double freqs[3];
    for (auto& pair : pairs) {
      pair[0] = static_cast<std::size_t>(rng.below(d));
      pair[1] = static_cast<std::size_t>(rng.below(d));
    }
    for (double& f : freqs) f = rng.uniform(0.8, 2.2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = rng.normal();
      double y = 0.0;
      for (int m = 0; m < 3; ++m) {
        const double a = ds.features(i, pairs[m][0]);
        const double b = ds.features(i, pairs[m][1]);
        y += std::sin(freqs[m] * a) + 0.5 * a * b;
      }
      ds.targets.push_back(y + noise * rng.normal());
    }
    return ds;
  }

  ds.task = Task::kClassification;
  ds.num_classes = 2;
  ds.label_names = {"0", "1"};
  if (kind == SyntheticKind::kClassificationBlobs) {
    for (std::size_t i = 0; i < n; ++i) {
      const int cls = static_cast<int>(rng.below(2));
      const double cx = cls == 0 ? -2.0 : 2.0;
      ds.features(i, 0) = cx + noise * rng.normal();
      ds.features(i, 1) = cx + noise * rng.normal();
      for (std::size_t j = 2; j < d; ++j) ds.features(i, j) = rng.normal();
      ds.class_labels.push_back(cls);
    }
    return ds;
  }

  // Two interleaved half-moons in the first two dimensions.
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(rng.below(2));
    const double t = rng.uniform(0.0, 3.141592653589793);
    double x0, x1;
    if (cls == 0) {
      x0 = std::cos(t);
      x1 = std::sin(t);
    } else {
      x0 = 1.0 - std::cos(t);
      x1 = 0.5 - std::sin(t);
    }
    ds.features(i, 0) = x0 + noise * rng.normal();
    ds.features(i, 1) = x1 + noise * rng.normal();
    for (std::size_t j = 2; j < d; ++j) ds.features(i, j) = rng.normal();
    ds.class_labels.push_back(cls);
  }
  return ds;
}

}  // namespace nmpq
