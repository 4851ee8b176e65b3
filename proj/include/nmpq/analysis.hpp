#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmpq/frozen.hpp"
#include "nmpq/model.hpp"
#include "nmpq/training.hpp"

namespace nmpq {

// ---- bit and memory reporting ----

struct LayerBitReport {
  std::size_t fan_in = 0;
  std::size_t neurons = 0;
  BitHistogram weight_bits;
  BitHistogram act_bits;  // empty when the layer does not quantize activations
};

struct BitReport {
  std::vector<LayerBitReport> layers;
  double mean_weight_bits = 0.0;           // unweighted mean over neurons
  double weighted_mean_weight_bits = 0.0;  // fan-in weighted
  double mean_act_bits = 0.0;              // over activation-quantized neurons
  std::size_t act_neurons = 0;
};

inline BitReport bit_report(const FrozenModel& fm) {
  BitReport r;
  double bit_sum = 0.0, weighted_sum = 0.0, fanin_sum = 0.0, act_sum = 0.0;
  std::size_t neuron_count = 0;
  for (const auto& layer : fm.layers) {
    LayerBitReport lr;
    lr.fan_in = layer.d_in;
    lr.neurons = layer.d_out;
    for (const auto& n : layer.neurons) {
      lr.weight_bits.add(n.bits);
      bit_sum += n.bits;
      weighted_sum += static_cast<double>(layer.d_in) * n.bits;
      fanin_sum += static_cast<double>(layer.d_in);
      ++neuron_count;
      if (n.act_bits > 0.0) {
        lr.act_bits.add(n.act_bits);
        act_sum += n.act_bits;
        ++r.act_neurons;
      }
    }
    r.layers.push_back(std::move(lr));
  }
  r.mean_weight_bits = bit_sum / static_cast<double>(neuron_count);
  r.weighted_mean_weight_bits = weighted_sum / fanin_sum;
  r.mean_act_bits = r.act_neurons > 0 ? act_sum / static_cast<double>(r.act_neurons) : 0.0;
  return r;
}

struct MemoryFootprint {
  double weight_bits_total = 0.0;
  double scale_overhead_bits = 0.0;  // 32 per quantized neuron
  double bias_bits = 0.0;            // 32 per neuron
  double activation_bits_per_sample = 0.0;
  std::uint64_t weight_bytes = 0;
  std::uint64_t scale_bytes = 0;
  std::uint64_t bias_bytes = 0;
  std::uint64_t activation_bytes = 0;  // for the given batch size
  std::uint64_t total_bytes = 0;
  std::size_t batch_size = 0;
};

inline std::uint64_t bits_to_bytes(double bits) {
  return static_cast<std::uint64_t>(std::ceil(bits / 8.0));
}

inline MemoryFootprint memory_bytes(const FrozenModel& fm, std::size_t batch_size) {
  MemoryFootprint m;
  m.batch_size = batch_size;
  for (const auto& layer : fm.layers) {
    for (const auto& n : layer.neurons) {
      m.weight_bits_total += static_cast<double>(layer.d_in) * n.bits;
      if (!n.codes.empty()) m.scale_overhead_bits += 32.0;
      m.bias_bits += 32.0;
      if (n.act_bits > 0.0) m.activation_bits_per_sample += n.act_bits;
    }
  }
  m.weight_bytes = bits_to_bytes(m.weight_bits_total);
  m.scale_bytes = bits_to_bytes(m.scale_overhead_bits);
  m.bias_bytes = bits_to_bytes(m.bias_bits);
  m.activation_bytes =
      bits_to_bytes(m.activation_bits_per_sample * static_cast<double>(batch_size));
  m.total_bytes = m.weight_bytes + m.scale_bytes + m.bias_bytes + m.activation_bytes;
  return m;
}

// ---- quantization-error model (App.-style formulas, implemented verbatim) ----

inline double epsilon_bound(double sigma2, double bits) {
  if (sigma2 < 0.0) throw std::invalid_argument("epsilon_bound: sigma2 must be >= 0");
  if (bits < 1.0) throw std::invalid_argument("epsilon_bound: bits must be >= 1");
  return sigma2 / (3.0 * std::pow(4.0, bits));
}

struct RhoBound {
  double rho_formula = 0.0;          // sqrt(sum_j d_in * eps_j(b_j))
  double empirical_frobenius = 0.0;  // ||W_q - W_ref||_F over all layers
};

inline RhoBound rho_bound(const FrozenModel& fm, const std::vector<Matrix>& reference_weights) {
  if (reference_weights.size() != fm.layers.size()) {
    throw std::invalid_argument("rho_bound: reference layer count mismatch");
  }
  RhoBound out;
  double rho_sq = 0.0, emp_sq = 0.0;
  for (std::size_t l = 0; l < fm.layers.size(); ++l) {
    const FrozenLayer& layer = fm.layers[l];
    const Matrix& ref = reference_weights[l];
    if (ref.rows != layer.d_in || ref.cols != layer.d_out) {
      throw std::invalid_argument("rho_bound: reference shape mismatch at layer " +
                                  std::to_string(l));
    }
    const std::vector<ColumnStats> cs = column_stats(ref);
    const Matrix wq = layer.weight_matrix();
    for (std::size_t j = 0; j < layer.d_out; ++j) {
      rho_sq += static_cast<double>(layer.d_in) *
                epsilon_bound(cs[j].variance, layer.neurons[j].bits);
      for (std::size_t i = 0; i < layer.d_in; ++i) {
        const double d = wq(i, j) - ref(i, j);
        emp_sq += d * d;
      }
    }
  }
  out.rho_formula = std::sqrt(rho_sq);
  out.empirical_frobenius = std::sqrt(emp_sq);
  return out;
}

// ---- ridge regression test problem for the loss-gap oracle ----

struct RidgeProblem {
  Matrix X;  // n x d
  std::vector<double> y;
  double lambda = 0.1;
};

inline double ridge_loss(const RidgeProblem& p, const std::vector<double>& w) {
  double fit = 0.0;
  for (std::size_t i = 0; i < p.X.rows; ++i) {
    double pred = 0.0;
    for (std::size_t j = 0; j < p.X.cols; ++j) pred += p.X(i, j) * w[j];
    const double d = pred - p.y[i];
    fit += d * d;
  }
  double reg = 0.0;
  for (double v : w) reg += v * v;
  return fit / (2.0 * static_cast<double>(p.X.rows)) + 0.5 * p.lambda * reg;
}

inline std::vector<double> ridge_gradient(const RidgeProblem& p, const std::vector<double>& w) {
  std::vector<double> g(w.size(), 0.0);
  for (std::size_t i = 0; i < p.X.rows; ++i) {
    double pred = 0.0;
    for (std::size_t j = 0; j < p.X.cols; ++j) pred += p.X(i, j) * w[j];
    const double r = (pred - p.y[i]) / static_cast<double>(p.X.rows);
    for (std::size_t j = 0; j < p.X.cols; ++j) g[j] += r * p.X(i, j);
  }
  for (std::size_t j = 0; j < w.size(); ++j) g[j] += p.lambda * w[j];
  return g;
}

inline Matrix ridge_hessian(const RidgeProblem& p) {
  Matrix h(p.X.cols, p.X.cols, 0.0);
  for (std::size_t i = 0; i < p.X.rows; ++i) {
    for (std::size_t a = 0; a < p.X.cols; ++a) {
      for (std::size_t b = 0; b < p.X.cols; ++b) {
        h(a, b) += p.X(i, a) * p.X(i, b) / static_cast<double>(p.X.rows);
      }
    }
  }
  for (std::size_t a = 0; a < p.X.cols; ++a) h(a, a) += p.lambda;
  return h;
}

// Cyclic Jacobi; fine for the d <= 10 problems used here.
inline double symmetric_max_eigenvalue(Matrix a) {
  if (a.rows != a.cols) throw std::invalid_argument("symmetric_max_eigenvalue: not square");
  const std::size_t n = a.rows;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::fabs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  double mx = a(0, 0);
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, a(i, i));
  return mx;
}

// Gaussian elimination with partial pivoting; solves H w = b.
inline std::vector<double> solve_linear(Matrix h, std::vector<double> b) {
  const std::size_t n = h.rows;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::fabs(h(r, col)) > std::fabs(h(pivot, col))) pivot = r;
    }
    if (std::fabs(h(pivot, col)) < 1e-14) throw std::runtime_error("solve_linear: singular");
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(h(pivot, c), h(col, c));
      std::swap(b[pivot], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = h(r, col) / h(col, col);
      for (std::size_t c = col; c < n; ++c) h(r, c) -= f * h(col, c);
      b[r] -= f * b[col];
    }
  }
  std::vector<double> w(n, 0.0);
  for (std::size_t r = n; r-- > 0;) {
    double acc = b[r];
    for (std::size_t c = r + 1; c < n; ++c) acc -= h(r, c) * w[c];
    w[r] = acc / h(r, r);
  }
  return w;
}

inline std::vector<double> ridge_solve(const RidgeProblem& p) {
  std::vector<double> rhs(p.X.cols, 0.0);
  for (std::size_t i = 0; i < p.X.rows; ++i) {
    for (std::size_t j = 0; j < p.X.cols; ++j) {
      rhs[j] += p.X(i, j) * p.y[i] / static_cast<double>(p.X.rows);
    }
  }
  return solve_linear(ridge_hessian(p), rhs);
}

struct LossGapResult {
  double gap = 0.0;
  double bound = 0.0;
  double perturbation_norm = 0.0;
  bool holds = false;
};

// Checks gap = L(w_q) - L(w*) against (L_smooth/2) * ||w_q - w*||^2.
inline LossGapResult loss_gap_check(const RidgeProblem& p, const std::vector<double>& w_q,
                                    const std::vector<double>& w_star, double smoothness) {
  const std::vector<double> g = ridge_gradient(p, w_star);
  double gn = 0.0;
  for (double v : g) gn += v * v;
  if (std::sqrt(gn) > 1e-6) {
    throw std::invalid_argument("loss_gap_check: reference point is not optimal");
  }
  LossGapResult r;
  double pert = 0.0;
  for (std::size_t j = 0; j < w_q.size(); ++j) {
    const double d = w_q[j] - w_star[j];
    pert += d * d;
  }
  r.perturbation_norm = std::sqrt(pert);
  r.gap = ridge_loss(p, w_q) - ridge_loss(p, w_star);
  r.bound = 0.5 * smoothness * pert;
  r.holds = r.gap <= r.bound + 1e-9;
  return r;
}

// ---- bit-budget condition ----

struct BitBudgetResult {
  int bits = 16;
  bool saturated = false;
  double rho_at_bits = 0.0;
  double requirement = 0.0;  // sqrt(2 eps / L)
};

inline BitBudgetResult bit_budget(double epsilon_tolerance, double smoothness,
                                  const std::vector<double>& sigma2_per_neuron,
                                  const std::vector<std::size_t>& fan_in) {
  if (epsilon_tolerance <= 0.0) throw std::invalid_argument("bit_budget: tolerance must be > 0");
  if (smoothness <= 0.0) throw std::invalid_argument("bit_budget: smoothness must be > 0");
  if (sigma2_per_neuron.size() != fan_in.size()) {
    throw std::invalid_argument("bit_budget: sigma2/fan_in size mismatch");
  }
  BitBudgetResult r;
  r.requirement = std::sqrt(2.0 * epsilon_tolerance / smoothness);
  for (int b : {1, 2, 4, 8, 16}) {
    double rho_sq = 0.0;
    for (std::size_t j = 0; j < sigma2_per_neuron.size(); ++j) {
      rho_sq += static_cast<double>(fan_in[j]) *
                epsilon_bound(sigma2_per_neuron[j], static_cast<double>(b));
    }
    const double rho = std::sqrt(rho_sq);
    if (rho <= r.requirement) {
      r.bits = b;
      r.rho_at_bits = rho;
      return r;
    }
    r.bits = b;
    r.rho_at_bits = rho;
  }
  r.saturated = true;
  return r;
}

// ---- convergence diagnostic ----

struct ConvergenceDiagnostic {
  double running_mean_slope = 0.0;   // slope of running-mean ||grad||^2 vs epoch
  double inv_sqrt_coefficient = 0.0; // c in fit running_mean ~ a + c/sqrt(t)
  bool decaying = false;
};

inline ConvergenceDiagnostic convergence_diagnostic(const std::vector<double>& grad_sq) {
  ConvergenceDiagnostic d;
  if (grad_sq.size() < 3) return d;
  std::vector<double> running(grad_sq.size());
  double acc = 0.0;
  for (std::size_t t = 0; t < grad_sq.size(); ++t) {
    acc += grad_sq[t];
    running[t] = acc / static_cast<double>(t + 1);
  }
  const auto fit_slope = [&](const std::vector<double>& xs) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sx += xs[i];
      sy += running[i];
      sxx += xs[i] * xs[i];
      sxy += xs[i] * running[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  std::vector<double> epochs(running.size()), inv_sqrt(running.size());
  for (std::size_t t = 0; t < running.size(); ++t) {
    epochs[t] = static_cast<double>(t + 1);
    inv_sqrt[t] = 1.0 / std::sqrt(static_cast<double>(t + 1));
  }
  d.running_mean_slope = fit_slope(epochs);
  d.inv_sqrt_coefficient = fit_slope(inv_sqrt);
  d.decaying = d.running_mean_slope <= 0.0;
  return d;
}

// ---- finite-difference gradient check ----
//
// Both sides of the comparison live on the fully-soft surrogate network:
// quantizer calls are linearized at the base point (value frozen, slope 1,
// i.e. STE semantics) while gates, clips and nonlinearities stay live. The
// analytic side is the shipped backward() run on a surrogate-forward trace;
// the numeric side is central differences of the locked loss below.

struct GradCheckOptions {
  // Central-difference step. 1e-5 balances truncation against roundoff for
  // the small gate gradients; the weight path is insensitive down to 1e-6.
  double step = 1e-5;
  double grad_floor = 1e-6;        // skip comparisons where both sides are tiny
  double threshold_margin = 4.0;   // in units of tau; strengths closer are excluded
};

struct GradCheckEntry {
  std::string param_class;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::size_t excluded = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> classes;
  double max_rel_err = 0.0;
  std::vector<std::string> exclusions;
};

namespace detail {

struct LockedSurrogate {
  // Residuals captured at the base point; evaluation stays differentiable in
  // every live parameter.
  struct LayerBase {
    std::vector<Matrix> weight_residuals;  // per candidate: Q_k(W0) - W0
    std::vector<Matrix> act_residuals;     // per candidate: Q_k(clip(z0)) - clip(z0)
    Matrix z0;                             // base post-nonlinearity activations
  };
  std::vector<LayerBase> layers;
  Matrix input;

  static LockedSurrogate capture(const MlpModel& model, const Matrix& x) {
    LockedSurrogate ls;
    ls.input = x;
    Matrix cur = x;
    for (const auto& layer : model.layers) {
      LayerBase base;
      const std::size_t kw = model.weight_ladder.num_candidates();
      base.weight_residuals.resize(kw, Matrix(layer.d_in(), layer.d_out()));
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        const std::vector<double> col = layer.weight_column(j);
        for (std::size_t k = 0; k < kw; ++k) {
          const QuantizedColumn q = quantize_column(col, model.weight_ladder.candidates[k]);
          for (std::size_t i = 0; i < layer.d_in(); ++i) {
            base.weight_residuals[k](i, j) = q.values[i] - col[i];
          }
        }
      }
      // Advance the base forward (mixture values) to capture z0 per layer.
      Matrix wmix(layer.d_in(), layer.d_out());
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        const std::vector<double> mix = mixture_weight_column(layer, model.weight_ladder, j);
        for (std::size_t i = 0; i < layer.d_in(); ++i) wmix(i, j) = mix[i];
      }
      Matrix y = matmul(cur, wmix);
      for (std::size_t i = 0; i < y.rows; ++i) {
        for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += layer.bias[j];
      }
      Matrix z(y.rows, y.cols);
      for (std::size_t i = 0; i < y.data.size(); ++i) {
        z.data[i] = apply_nonlinearity(layer.nonlinearity, y.data[i]);
      }
      base.z0 = z;
      Matrix out = z;
      if (layer.quantizes_acts()) {
        const std::size_t ka = model.act_ladder.num_candidates();
        base.act_residuals.resize(ka, Matrix(z.rows, z.cols));
        for (std::size_t j = 0; j < layer.d_out(); ++j) {
          const double alpha = layer.alpha[j];
          const std::vector<double> gates = soft_gates(layer.act_strengths[j], model.act_ladder);
          for (std::size_t i = 0; i < z.rows; ++i) {
            const double c0 = std::clamp(z(i, j), 0.0, alpha);
            double mixed = 0.0;
            for (std::size_t k = 0; k < ka; ++k) {
              const int b = static_cast<int>(std::lround(model.act_ladder.candidates[k]));
              const double qv = quantize_activation_value(z(i, j), b, alpha);
              base.act_residuals[k](i, j) = qv - c0;
              mixed += gates[k] * qv;
            }
            out(i, j) = mixed;
          }
        }
      }
      ls.layers.push_back(std::move(base));
      cur = std::move(out);
    }
    return ls;
  }

  struct Eval {
    double loss = 0.0;
    std::vector<signed char> masks;  // relu sign and clip region per entry
  };

  Eval evaluate(const MlpModel& model, const Dataset& ds,
                const std::vector<std::size_t>& rows) const {
    Eval ev;
    Matrix cur = input;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      const QuantDenseLayer& layer = model.layers[li];
      const LayerBase& base = layers[li];
      Matrix wlocked(layer.d_in(), layer.d_out());
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        const std::vector<double> gates = soft_gates(layer.weight_strengths[j], model.weight_ladder);
        for (std::size_t i = 0; i < layer.d_in(); ++i) {
          double v = layer.W(i, j);
          for (std::size_t k = 0; k < gates.size(); ++k) {
            v += gates[k] * base.weight_residuals[k](i, j);
          }
          wlocked(i, j) = v;
        }
      }
      Matrix y = matmul(cur, wlocked);
      for (std::size_t i = 0; i < y.rows; ++i) {
        for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += layer.bias[j];
      }
      Matrix z(y.rows, y.cols);
      for (std::size_t i = 0; i < y.data.size(); ++i) {
        z.data[i] = apply_nonlinearity(layer.nonlinearity, y.data[i]);
        if (layer.nonlinearity == Nonlinearity::kRelu) {
          ev.masks.push_back(y.data[i] > 0.0 ? 1 : 0);
        }
      }
      Matrix out = z;
      if (layer.quantizes_acts()) {
        for (std::size_t j = 0; j < layer.d_out(); ++j) {
          const double alpha = layer.alpha[j];
          const std::vector<double> gates = soft_gates(layer.act_strengths[j], model.act_ladder);
          for (std::size_t i = 0; i < z.rows; ++i) {
            const double zv = z(i, j);
            ev.masks.push_back(zv < 0.0 ? -1 : (zv > alpha ? 2 : 1));
            const double c = std::clamp(zv, 0.0, alpha);
            double v = c;
            for (std::size_t k = 0; k < gates.size(); ++k) {
              v += gates[k] * base.act_residuals[k](i, j);
            }
            out(i, j) = v;
          }
        }
      }
      cur = std::move(out);
    }
    ev.loss = task_loss(cur, ds, rows).value;
    return ev;
  }
};

enum class ParamClass { kWeight, kBias, kStrength, kActStrength, kAlpha };

inline const char* param_class_name(ParamClass c) {
  switch (c) {
    case ParamClass::kWeight: return "W";
    case ParamClass::kBias: return "bias";
    case ParamClass::kStrength: return "s";
    case ParamClass::kActStrength: return "s_act";
    default: return "alpha";
  }
}

struct ParamRef {
  ParamClass cls;
  std::size_t layer;
  std::size_t index;
};

inline double* param_pointer(MlpModel& model, const ParamRef& ref) {
  QuantDenseLayer& layer = model.layers[ref.layer];
  switch (ref.cls) {
    case ParamClass::kWeight: return &layer.W.data[ref.index];
    case ParamClass::kBias: return &layer.bias[ref.index];
    case ParamClass::kStrength: return &layer.weight_strengths[ref.index];
    case ParamClass::kActStrength: return &layer.act_strengths[ref.index];
    default: return &layer.alpha[ref.index];
  }
}

inline double analytic_value(const GradientSet& grads, const ParamRef& ref) {
  const LayerGradients& lg = grads.layers[ref.layer];
  switch (ref.cls) {
    case ParamClass::kWeight: return lg.dW.data[ref.index];
    case ParamClass::kBias: return lg.dbias[ref.index];
    case ParamClass::kStrength: return lg.dstrengths[ref.index];
    case ParamClass::kActStrength: return lg.dact_strengths[ref.index];
    default: return lg.dalpha[ref.index];
  }
}

inline bool near_threshold(double s, const ThresholdLadder& ladder, double margin_taus) {
  for (double t : ladder.thresholds) {
    if (std::fabs(s - t) < margin_taus * ladder.tau) return true;
  }
  return false;
}

}  // namespace detail

inline GradCheckReport gradient_check(const MlpModel& model, const Dataset& batch,
                                      const GradCheckOptions& opt = {}) {
  std::vector<std::size_t> rows(batch.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;

  ForwardTrace trace;
  const Matrix out = forward(model, batch.features, &trace, ForwardKind::kSurrogate);
  const LossResult base_loss = task_loss(out, batch, rows);
  const GradientSet analytic = backward(model, trace, base_loss.output_grad);

  const detail::LockedSurrogate locked = detail::LockedSurrogate::capture(model, batch.features);
  const detail::LockedSurrogate::Eval base_eval = locked.evaluate(model, batch, rows);

  std::vector<detail::ParamRef> refs;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const QuantDenseLayer& layer = model.layers[l];
    for (std::size_t i = 0; i < layer.W.data.size(); ++i) {
      refs.push_back({detail::ParamClass::kWeight, l, i});
    }
    for (std::size_t j = 0; j < layer.d_out(); ++j) {
      refs.push_back({detail::ParamClass::kBias, l, j});
      refs.push_back({detail::ParamClass::kStrength, l, j});
      if (layer.quantizes_acts()) {
        refs.push_back({detail::ParamClass::kActStrength, l, j});
        refs.push_back({detail::ParamClass::kAlpha, l, j});
      }
    }
  }

  GradCheckReport report;
  std::map<std::string, GradCheckEntry> entries;
  for (const char* name : {"W", "bias", "s", "s_act", "alpha"}) {
    entries[name].param_class = name;
  }

  MlpModel work = model;
  for (const auto& ref : refs) {
    GradCheckEntry& entry = entries[detail::param_class_name(ref.cls)];
    if (ref.cls == detail::ParamClass::kStrength &&
        detail::near_threshold(model.layers[ref.layer].weight_strengths[ref.index],
                               model.weight_ladder, opt.threshold_margin)) {
      ++entry.excluded;
      report.exclusions.push_back("s[" + std::to_string(ref.layer) + "," +
                                  std::to_string(ref.index) + "]: non-smooth point");
      continue;
    }
    if (ref.cls == detail::ParamClass::kActStrength &&
        detail::near_threshold(model.layers[ref.layer].act_strengths[ref.index],
                               model.act_ladder, opt.threshold_margin)) {
      ++entry.excluded;
      report.exclusions.push_back("s_act[" + std::to_string(ref.layer) + "," +
                                  std::to_string(ref.index) + "]: non-smooth point");
      continue;
    }

    double* p = detail::param_pointer(work, ref);
    const double saved = *p;
    *p = saved + opt.step;
    const auto plus = locked.evaluate(work, batch, rows);
    *p = saved - opt.step;
    const auto minus = locked.evaluate(work, batch, rows);
    *p = saved;

    if (plus.masks != base_eval.masks || minus.masks != base_eval.masks) {
      ++entry.excluded;
      report.exclusions.push_back(std::string(detail::param_class_name(ref.cls)) + "[" +
                                  std::to_string(ref.layer) + "," + std::to_string(ref.index) +
                                  "]: non-smooth point (mask change)");
      continue;
    }

    const double fd = (plus.loss - minus.loss) / (2.0 * opt.step);
    const double an = detail::analytic_value(analytic, ref);
    const double denom = std::max(std::fabs(fd), std::fabs(an));
    if (denom <= opt.grad_floor) continue;
    const double rel = std::fabs(fd - an) / denom;
    ++entry.checked;
    entry.max_rel_err = std::max(entry.max_rel_err, rel);
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }

  for (const char* name : {"W", "bias", "s", "s_act", "alpha"}) {
    report.classes.push_back(entries[name]);
  }
  return report;
}

}  // namespace nmpq
