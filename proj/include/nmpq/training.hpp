#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmpq/data.hpp"
#include "nmpq/frozen.hpp"
#include "nmpq/model.hpp"

namespace nmpq {

struct NonFiniteLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::vector<std::size_t> hidden = {64, 64, 64, 64};
  Nonlinearity hidden_nonlinearity = Nonlinearity::kRelu;
};

struct QuantConfig {
  QuantMode mode;
  std::vector<double> weight_thresholds = {0.25, 0.5, 0.75};
  std::vector<double> weight_candidates = {1.0, 2.0, 4.0, 8.0};
  std::vector<double> act_thresholds = {0.33, 0.66};
  std::vector<double> act_candidates = {4.0, 8.0, 16.0};
  double tau = 0.05;
  // Strength init inside the first band; < 0 selects the band midpoint.
  double weight_init_strength = -1.0;
  double act_init_strength = -1.0;

  ThresholdLadder resolve_weight_ladder() const {
    ThresholdLadder l = [&] {
      switch (mode.kind) {
        case QuantModeKind::kFullPrecision:
          return ThresholdLadder::single(kFullPrecisionBits, tau);
        case QuantModeKind::kUniform:
          return ThresholdLadder::single(mode.uniform_bits, tau);
        default:
          return ThresholdLadder(weight_thresholds, weight_candidates, tau);
      }
    }();
    l.init_value = weight_init_strength;
    return l;
  }

  ThresholdLadder resolve_act_ladder() const {
    ThresholdLadder l = [&] {
      if (mode.kind == QuantModeKind::kUniform && mode.uniform_act_bits > 0.0) {
        return ThresholdLadder::single(mode.uniform_act_bits, tau);
      }
      return ThresholdLadder(act_thresholds, act_candidates, tau);
    }();
    l.init_value = act_init_strength;
    return l;
  }
};

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t patience = 20;
  std::size_t batch_size = 128;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double train_fraction = 0.7;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  // When set, every seed shares this split (one canonical test set; seeds
  // vary only init and shuffling). Otherwise the split follows the seed.
  std::optional<std::uint64_t> split_seed;

  void validate() const {
    if (lr <= 0.0) throw std::invalid_argument("train: lr must be positive");
    if (patience > epochs) throw std::invalid_argument("train: patience must be <= epochs");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("train: need at least one seed");
    SplitSpec{train_fraction, val_fraction, test_fraction, 0}.validate();
  }
};

// ---- loss ----

struct LossResult {
  double value = 0.0;
  Matrix output_grad;
};

inline LossResult mse_loss(const Matrix& outputs, const std::vector<double>& targets) {
  if (outputs.rows != targets.size() || outputs.cols != 1) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  LossResult r;
  r.output_grad = Matrix(outputs.rows, 1);
  const double inv_n = 1.0 / static_cast<double>(outputs.rows);
  for (std::size_t i = 0; i < outputs.rows; ++i) {
    const double d = outputs(i, 0) - targets[i];
    r.value += d * d * inv_n;
    r.output_grad(i, 0) = 2.0 * d * inv_n;
  }
  if (!std::isfinite(r.value)) throw NonFiniteLossError("mse_loss: non-finite loss");
  return r;
}

// Softmax cross-entropy with log-sum-exp stabilization.
inline LossResult cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows != labels.size()) {
    throw std::invalid_argument("cross_entropy_loss: shape mismatch");
  }
  LossResult r;
  r.output_grad = Matrix(logits.rows, logits.cols);
  const double inv_n = 1.0 / static_cast<double>(logits.rows);
  for (std::size_t i = 0; i < logits.rows; ++i) {
    double max_logit = logits(i, 0);
    for (std::size_t c = 1; c < logits.cols; ++c) max_logit = std::max(max_logit, logits(i, c));
    double sum_exp = 0.0;
    for (std::size_t c = 0; c < logits.cols; ++c) sum_exp += std::exp(logits(i, c) - max_logit);
    const double lse = max_logit + std::log(sum_exp);
    const int label = labels[i];
    if (label < 0 || label >= static_cast<int>(logits.cols)) {
      throw std::invalid_argument("cross_entropy_loss: label out of range");
    }
    r.value += (lse - logits(i, label)) * inv_n;
    for (std::size_t c = 0; c < logits.cols; ++c) {
      const double softmax = std::exp(logits(i, c) - lse);
      r.output_grad(i, c) = (softmax - (static_cast<int>(c) == label ? 1.0 : 0.0)) * inv_n;
    }
  }
  if (!std::isfinite(r.value)) throw NonFiniteLossError("cross_entropy_loss: non-finite loss");
  return r;
}

inline LossResult task_loss(const Matrix& outputs, const Dataset& ds,
                            const std::vector<std::size_t>& rows) {
  if (ds.task == Task::kRegression) {
    std::vector<double> t(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) t[i] = ds.targets[rows[i]];
    return mse_loss(outputs, t);
  }
  std::vector<int> t(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) t[i] = ds.class_labels[rows[i]];
  return cross_entropy_loss(outputs, t);
}

// ---- optimizer ----

// Strength updates are projected twice: onto [0,1], and onto the union of
// bands at or above the neuron's current one. Precision expands when the
// gradient demands it and never shrinks back across a threshold; without the
// band projection neurons hover at thresholds and flip bits every few
// batches, which destabilizes activation-quantized training.
inline double project_strength(double updated, double previous, const ThresholdLadder& ladder) {
  const double clamped = std::clamp(updated, 0.0, 1.0);
  if (hard_bits(clamped, ladder) < hard_bits(previous, ladder)) return previous;
  return clamped;
}

inline void sgd_step(MlpModel& model, const GradientSet& grads, double lr) {
  if (grads.layers.size() != model.layers.size()) {
    throw std::invalid_argument("sgd_step: gradient/model layer mismatch");
  }
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    QuantDenseLayer& layer = model.layers[l];
    const LayerGradients& lg = grads.layers[l];
    for (std::size_t i = 0; i < layer.W.data.size(); ++i) {
      layer.W.data[i] -= lr * lg.dW.data[i];
    }
    for (std::size_t j = 0; j < layer.d_out(); ++j) {
      layer.bias[j] -= lr * lg.dbias[j];
      layer.weight_strengths[j] = project_strength(
          layer.weight_strengths[j] - lr * lg.dstrengths[j], layer.weight_strengths[j],
          model.weight_ladder);
    }
    if (layer.quantizes_acts()) {
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        layer.act_strengths[j] = project_strength(
            layer.act_strengths[j] - lr * lg.dact_strengths[j], layer.act_strengths[j],
            model.act_ladder);
        layer.alpha[j] = std::max(layer.alpha[j] - lr * lg.dalpha[j], 1e-3);
      }
    }
  }
  ++model.version;
}

// ---- metrics ----

struct Metrics {
  Task task = Task::kRegression;
  double mse = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

inline Metrics metrics_from_outputs(const Matrix& outputs, const Dataset& ds) {
  if (ds.rows() == 0) throw std::invalid_argument("evaluate: empty split");
  Metrics m;
  m.task = ds.task;
  if (ds.task == Task::kRegression) {
    double sum = 0.0;
    for (std::size_t i = 0; i < outputs.rows; ++i) {
      const double d = outputs(i, 0) - ds.targets[i];
      sum += d * d;
    }
    m.mse = sum / static_cast<double>(outputs.rows);
    return m;
  }
  const int k = ds.num_classes;
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outputs.rows; ++i) {
    std::size_t pred = 0;
    for (std::size_t c = 1; c < outputs.cols; ++c) {
      if (outputs(i, c) > outputs(i, pred)) pred = c;
    }
    const int truth = ds.class_labels[i];
    if (static_cast<int>(pred) == truth) {
      ++correct;
      ++tp[truth];
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(outputs.rows);
  double f1_sum = 0.0;
  for (int c = 0; c < k; ++c) {
    const double denom = static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
    f1_sum += denom > 0.0 ? 2.0 * static_cast<double>(tp[c]) / denom : 0.0;
  }
  m.macro_f1 = f1_sum / static_cast<double>(k);
  return m;
}

inline Metrics evaluate(const MlpModel& model, const Dataset& ds) {
  return metrics_from_outputs(forward(model, ds.features, nullptr), ds);
}

inline Metrics evaluate(const FrozenModel& fm, const Dataset& ds) {
  return metrics_from_outputs(frozen_forward(fm, ds.features), ds);
}

// ---- alpha calibration ----

// Runs the hard-quantized forward with activation quantization disabled and
// sets each neuron's clip range to the 95th percentile of its post-
// nonlinearity activations (nearest-rank), falling back to 6.0 when the
// column is degenerate.
inline void init_alpha_from_batch(MlpModel& model, const Matrix& batch) {
  Matrix x = batch;
  for (auto& layer : model.layers) {
    Matrix wq(layer.d_in(), layer.d_out());
    for (std::size_t j = 0; j < layer.d_out(); ++j) {
      const double bits = hard_bits(layer.weight_strengths[j], model.weight_ladder);
      const QuantizedColumn q = quantize_column(layer.weight_column(j), bits);
      for (std::size_t i = 0; i < layer.d_in(); ++i) wq(i, j) = q.values[i];
    }
    Matrix y = matmul(x, wq);
    for (std::size_t i = 0; i < y.rows; ++i) {
      for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += layer.bias[j];
    }
    for (double& v : y.data) v = apply_nonlinearity(layer.nonlinearity, v);
    if (layer.quantizes_acts()) {
      std::vector<double> col(y.rows);
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        for (std::size_t i = 0; i < y.rows; ++i) col[i] = y(i, j);
        std::sort(col.begin(), col.end());
        const std::size_t rank = static_cast<std::size_t>(
            std::ceil(0.95 * static_cast<double>(col.size())));
        const double p95 = col[std::min(col.size() - 1, rank == 0 ? 0 : rank - 1)];
        layer.alpha[j] = (std::isfinite(p95) && p95 > 1e-9) ? p95 : 6.0;
      }
    }
    x = std::move(y);
  }
  ++model.version;
}

// ---- training loop ----

struct BitHistogram {
  std::map<double, std::size_t> counts;

  void add(double bits) { ++counts[bits]; }
  std::size_t total() const {
    std::size_t t = 0;
    for (const auto& [b, c] : counts) t += c;
    return t;
  }
  double fraction_at(double bits) const {
    const auto it = counts.find(bits);
    return total() == 0 ? 0.0
                        : static_cast<double>(it == counts.end() ? 0 : it->second) /
                              static_cast<double>(total());
  }
};

inline BitHistogram weight_bit_histogram(const MlpModel& model) {
  BitHistogram h;
  for (const auto& layer : model.layers) {
    for (double s : layer.weight_strengths) h.add(hard_bits(s, model.weight_ladder));
  }
  return h;
}

inline BitHistogram act_bit_histogram(const MlpModel& model) {
  BitHistogram h;
  for (const auto& layer : model.layers) {
    if (!layer.quantizes_acts()) continue;
    for (double s : layer.act_strengths) h.add(hard_bits(s, model.act_ladder));
  }
  return h;
}

struct SeedResult {
  std::uint64_t seed = 0;
  bool aborted = false;
  std::string abort_reason;
  Metrics test_metrics;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> grad_sq_epoch_mean;  // mean squared gradient norm per epoch
  BitHistogram initial_weight_bits;
  BitHistogram initial_act_bits;
  FrozenModel frozen;
  StandardizeStats stats;
  double wall_seconds = 0.0;
};

struct TrainResult {
  std::vector<SeedResult> seeds;

  bool any_aborted() const {
    for (const auto& s : seeds) {
      if (s.aborted) return true;
    }
    return false;
  }
};

namespace detail {

inline std::vector<QuantDenseLayer> snapshot_params(const MlpModel& model) {
  return model.layers;
}

inline void restore_params(MlpModel& model, const std::vector<QuantDenseLayer>& snap) {
  model.layers = snap;
  ++model.version;
}

inline double gradient_norm_sq(const GradientSet& grads) {
  double s = 0.0;
  for (const auto& lg : grads.layers) {
    for (double v : lg.dW.data) s += v * v;
    for (double v : lg.dbias) s += v * v;
    for (double v : lg.dstrengths) s += v * v;
    for (double v : lg.dact_strengths) s += v * v;
    for (double v : lg.dalpha) s += v * v;
  }
  return s;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) out(r, c) = m(rows[r], c);
  }
  return out;
}

}  // namespace detail

inline SeedResult train_single_seed(const Dataset& raw, const ModelConfig& mc,
                                    const QuantConfig& qc, const TrainConfig& tc,
                                    std::uint64_t seed) {
  const auto t_start = std::chrono::steady_clock::now();
  SeedResult res;
  res.seed = seed;

  const DataSplits splits =
      split(raw, SplitSpec{tc.train_fraction, tc.val_fraction, tc.test_fraction,
                           tc.split_seed.value_or(seed)});
  res.stats = compute_standardize_stats(splits.train);
  const Dataset train_ds = standardize(splits.train, res.stats);
  const Dataset val_ds = standardize(splits.val, res.stats);
  const Dataset test_ds = standardize(splits.test, res.stats);

  std::vector<std::size_t> dims;
  dims.push_back(raw.dim());
  for (std::size_t h : mc.hidden) dims.push_back(h);
  dims.push_back(raw.task == Task::kClassification ? static_cast<std::size_t>(raw.num_classes)
                                                   : 1);

  MlpModel model = build_model(dims, mc.hidden_nonlinearity, qc.mode,
                               qc.resolve_weight_ladder(), qc.resolve_act_ladder());
  SeededRng rng(seed);
  init_weights(model, rng);
  if (qc.mode.quantizes_activations()) {
    std::vector<std::size_t> first_rows;
    for (std::size_t i = 0; i < std::min<std::size_t>(tc.batch_size, train_ds.rows()); ++i) {
      first_rows.push_back(i);
    }
    init_alpha_from_batch(model, detail::gather_rows(train_ds.features, first_rows));
  }
  res.initial_weight_bits = weight_bit_histogram(model);
  res.initial_act_bits = act_bit_histogram(model);

  std::vector<std::size_t> order(train_ds.rows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::size_t> all_val(val_ds.rows());
  for (std::size_t i = 0; i < all_val.size(); ++i) all_val[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<QuantDenseLayer> best_params = detail::snapshot_params(model);

  try {
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
      rng.shuffle(order);
      double epoch_loss = 0.0;
      double grad_sq_sum = 0.0;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
        const std::size_t end = std::min(order.size(), start + tc.batch_size);
        std::vector<std::size_t> rows(order.begin() + start, order.begin() + end);
        const Matrix xb = detail::gather_rows(train_ds.features, rows);
        ForwardTrace trace;
        const Matrix out = forward(model, xb, &trace);
        const LossResult loss = task_loss(out, train_ds, rows);
        const GradientSet grads = backward(model, trace, loss.output_grad);
        grad_sq_sum += detail::gradient_norm_sq(grads);
        sgd_step(model, grads, tc.lr);
        epoch_loss += loss.value * static_cast<double>(rows.size());
        ++batches;
      }
      res.train_loss.push_back(epoch_loss / static_cast<double>(train_ds.rows()));
      res.grad_sq_epoch_mean.push_back(grad_sq_sum / static_cast<double>(batches));

      const Matrix val_out = forward(model, val_ds.features, nullptr);
      const double vloss = task_loss(val_out, val_ds, all_val).value;
      res.val_loss.push_back(vloss);
      res.epochs_run = epoch + 1;

      if (vloss < best_val) {
        best_val = vloss;
        best_epoch = epoch;
        best_params = detail::snapshot_params(model);
      } else if (epoch - best_epoch >= tc.patience) {
        break;
      }
    }
  } catch (const NonFiniteLossError& e) {
    res.aborted = true;
    res.abort_reason = e.what();
  } catch (const NumericError& e) {
    res.aborted = true;
    res.abort_reason = e.what();
  }

  detail::restore_params(model, best_params);
  res.best_val_loss = best_val;
  res.best_epoch = best_epoch;
  res.frozen = freeze(model);
  if (!res.aborted) {
    res.test_metrics = evaluate(res.frozen, test_ds);
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return res;
}

inline TrainResult train(const Dataset& raw, const ModelConfig& mc, const QuantConfig& qc,
                         const TrainConfig& tc) {
  tc.validate();
  TrainResult result;
  for (const std::uint64_t seed : tc.seeds) {
    result.seeds.push_back(train_single_seed(raw, mc, qc, tc, seed));
  }
  return result;
}

}  // namespace nmpq
