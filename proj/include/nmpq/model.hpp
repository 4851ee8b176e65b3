#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nmpq/gates.hpp"
#include "nmpq/matrix.hpp"
#include "nmpq/quantize.hpp"
#include "nmpq/rng.hpp"

namespace nmpq {

enum class Nonlinearity { kRelu, kIdentity };

enum class QuantModeKind { kFullPrecision, kUniform, kNmpWeightsOnly, kNmpWeightsActs };

struct QuantMode {
  QuantModeKind kind = QuantModeKind::kFullPrecision;
  double uniform_bits = 4.0;      // may be 1.58 (ternary) or 16
  double uniform_act_bits = 0.0;  // 0 = weights only

  bool quantizes_activations() const {
    return kind == QuantModeKind::kNmpWeightsActs ||
           (kind == QuantModeKind::kUniform && uniform_act_bits > 0.0);
  }
};

inline double apply_nonlinearity(Nonlinearity nl, double y) {
  return nl == Nonlinearity::kRelu ? (y > 0.0 ? y : 0.0) : y;
}

inline double nonlinearity_derivative(Nonlinearity nl, double y) {
  return nl == Nonlinearity::kRelu ? (y > 0.0 ? 1.0 : 0.0) : 1.0;
}

struct QuantDenseLayer {
  Matrix W;  // d_in x d_out
  std::vector<double> bias;
  std::vector<double> weight_strengths;
  std::vector<double> act_strengths;  // present iff this layer quantizes activations
  std::vector<double> alpha;          // same presence as act_strengths
  Nonlinearity nonlinearity = Nonlinearity::kRelu;

  std::size_t d_in() const { return W.rows; }
  std::size_t d_out() const { return W.cols; }
  bool quantizes_acts() const { return !act_strengths.empty(); }

  std::vector<double> weight_column(std::size_t j) const {
    std::vector<double> col(W.rows);
    for (std::size_t i = 0; i < W.rows; ++i) col[i] = W(i, j);
    return col;
  }
};

struct MlpModel {
  std::vector<QuantDenseLayer> layers;
  ThresholdLadder weight_ladder;
  ThresholdLadder act_ladder;
  QuantMode mode;
  std::uint64_t version = 0;  // bumped on every parameter mutation

  std::size_t input_dim() const { return layers.front().d_in(); }
  std::size_t output_dim() const { return layers.back().d_out(); }
};

// dims = {d_in, hidden..., d_out}. The last layer always has an identity
// nonlinearity and never quantizes its activations.
inline MlpModel build_model(const std::vector<std::size_t>& dims, Nonlinearity hidden_nl,
                            const QuantMode& mode, const ThresholdLadder& weight_ladder,
                            const ThresholdLadder& act_ladder) {
  if (dims.size() < 2) throw std::invalid_argument("build_model: need at least two dims");
  MlpModel model;
  model.mode = mode;
  model.weight_ladder = weight_ladder;
  model.act_ladder = act_ladder;
  const bool act_quant = mode.quantizes_activations();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    QuantDenseLayer layer;
    layer.W = Matrix(dims[l], dims[l + 1]);
    layer.bias.assign(dims[l + 1], 0.0);
    layer.weight_strengths.assign(dims[l + 1], weight_ladder.init_strength());
    const bool last = (l + 2 == dims.size());
    layer.nonlinearity = last ? Nonlinearity::kIdentity : hidden_nl;
    if (act_quant && !last) {
      layer.act_strengths.assign(dims[l + 1], act_ladder.init_strength());
      layer.alpha.assign(dims[l + 1], 1.0);  // placeholder until init_alpha_from_batch
    }
    model.layers.push_back(std::move(layer));
  }
  return model;
}

// Kaiming-uniform fan-in init, entries drawn row-major so the consumed RNG
// stream is reproducible.
inline void init_weights(MlpModel& model, SeededRng& rng) {
  for (auto& layer : model.layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.d_in()));
    for (std::size_t i = 0; i < layer.W.rows; ++i) {
      for (std::size_t j = 0; j < layer.W.cols; ++j) {
        layer.W(i, j) = rng.uniform(-bound, bound);
      }
    }
    std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    std::fill(layer.weight_strengths.begin(), layer.weight_strengths.end(),
              model.weight_ladder.init_strength());
    if (layer.quantizes_acts()) {
      std::fill(layer.act_strengths.begin(), layer.act_strengths.end(),
                model.act_ladder.init_strength());
    }
  }
  ++model.version;
}

enum class ForwardKind {
  kHard,      // production path: hard discrete bit assignment everywhere
  kSurrogate  // gate-mixture values; used only by gradient diagnostics
};

struct LayerTrace {
  Matrix input;       // batch x d_in
  Matrix pre_act;     // batch x d_out, before nonlinearity
  Matrix post_act;    // after nonlinearity, before activation quantization
  Matrix output;      // layer output as seen by the next layer
  Matrix wq;          // weights actually used (quantized or mixture)
  std::vector<double> weight_bits;
  std::vector<double> scales;
  std::vector<double> act_bits;  // empty if no activation quantization
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  std::uint64_t model_version = 0;
};

namespace detail {

inline std::vector<double> mixture_weight_column(const QuantDenseLayer& layer,
                                                 const ThresholdLadder& ladder,
                                                 std::size_t j) {
  const std::vector<double> col = layer.weight_column(j);
  const std::vector<double> gates = soft_gates(layer.weight_strengths[j], ladder);
  std::vector<double> out(col.size(), 0.0);
  for (std::size_t k = 0; k < gates.size(); ++k) {
    const QuantizedColumn q = quantize_column(col, ladder.candidates[k]);
    for (std::size_t i = 0; i < col.size(); ++i) out[i] += gates[k] * q.values[i];
  }
  return out;
}

}  // namespace detail

inline Matrix forward(const MlpModel& model, const Matrix& batch, ForwardTrace* trace,
                      ForwardKind kind = ForwardKind::kHard) {
  if (batch.cols != model.input_dim()) {
    throw std::invalid_argument("forward: batch has " + std::to_string(batch.cols) +
                                " features, model expects " +
                                std::to_string(model.input_dim()));
  }
  if (trace) {
    trace->layers.clear();
    trace->model_version = model.version;
  }
  Matrix x = batch;
  for (const auto& layer : model.layers) {
    LayerTrace lt;
    lt.wq = Matrix(layer.d_in(), layer.d_out());
    lt.weight_bits.resize(layer.d_out());
    lt.scales.resize(layer.d_out());
    for (std::size_t j = 0; j < layer.d_out(); ++j) {
      const double bits = hard_bits(layer.weight_strengths[j], model.weight_ladder);
      lt.weight_bits[j] = bits;
      if (kind == ForwardKind::kHard) {
        const QuantizedColumn q = quantize_column(layer.weight_column(j), bits);
        lt.scales[j] = q.scale;
        for (std::size_t i = 0; i < layer.d_in(); ++i) lt.wq(i, j) = q.values[i];
      } else {
        const std::vector<double> mix =
            detail::mixture_weight_column(layer, model.weight_ladder, j);
        lt.scales[j] = 1.0;
        for (std::size_t i = 0; i < layer.d_in(); ++i) lt.wq(i, j) = mix[i];
      }
    }
    Matrix y = matmul(x, lt.wq);
    for (std::size_t i = 0; i < y.rows; ++i) {
      for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += layer.bias[j];
    }
    Matrix z(y.rows, y.cols);
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      z.data[i] = apply_nonlinearity(layer.nonlinearity, y.data[i]);
    }
    Matrix out = z;
    if (layer.quantizes_acts()) {
      lt.act_bits.resize(layer.d_out());
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        const double abits = hard_bits(layer.act_strengths[j], model.act_ladder);
        lt.act_bits[j] = abits;
        const double alpha = layer.alpha[j];
        if (kind == ForwardKind::kHard) {
          const int b = static_cast<int>(std::lround(abits));
          for (std::size_t i = 0; i < out.rows; ++i) {
            out(i, j) = quantize_activation_value(z(i, j), b, alpha);
          }
        } else {
          const std::vector<double> gates = soft_gates(layer.act_strengths[j], model.act_ladder);
          for (std::size_t i = 0; i < out.rows; ++i) {
            double v = 0.0;
            for (std::size_t k = 0; k < gates.size(); ++k) {
              const int b = static_cast<int>(std::lround(model.act_ladder.candidates[k]));
              v += gates[k] * quantize_activation_value(z(i, j), b, alpha);
            }
            out(i, j) = v;
          }
        }
      }
    }
    if (trace) {
      lt.input = x;
      lt.pre_act = y;
      lt.post_act = z;
      lt.output = out;
      trace->layers.push_back(std::move(lt));
    }
    x = std::move(out);
  }
  return x;
}

struct LayerGradients {
  Matrix dW;
  std::vector<double> dbias;
  std::vector<double> dstrengths;
  std::vector<double> dact_strengths;
  std::vector<double> dalpha;
};

struct GradientSet {
  std::vector<LayerGradients> layers;
  Matrix input_grad;
};

// STE/surrogate backward over a trace produced by forward() on the same model
// state. Weight gradients pass straight through the quantizer; precision
// strengths take the gate-mixture path; alpha takes the clip indicator.
inline GradientSet backward(const MlpModel& model, const ForwardTrace& trace,
                            const Matrix& output_grad) {
  if (trace.model_version != model.version) {
    throw std::runtime_error("backward: stale trace (model was updated after forward)");
  }
  if (trace.layers.size() != model.layers.size()) {
    throw std::runtime_error("backward: trace/model layer count mismatch");
  }
  const Matrix& last_out = trace.layers.back().output;
  if (output_grad.rows != last_out.rows || output_grad.cols != last_out.cols) {
    throw std::runtime_error("backward: output gradient shape mismatch");
  }

  GradientSet grads;
  grads.layers.resize(model.layers.size());
  Matrix g = output_grad;  // dL/d(layer output)

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const QuantDenseLayer& layer = model.layers[li];
    const LayerTrace& lt = trace.layers[li];
    LayerGradients& lg = grads.layers[li];

    Matrix dz = g;
    if (layer.quantizes_acts()) {
      lg.dalpha.assign(layer.d_out(), 0.0);
      lg.dact_strengths.assign(layer.d_out(), 0.0);
      const std::size_t k_count = model.act_ladder.num_candidates();
      const bool want_strength_grad = k_count > 1;  // single candidate: exactly zero
      std::vector<double> cand_dots(k_count);
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        const double alpha = layer.alpha[j];
        std::fill(cand_dots.begin(), cand_dots.end(), 0.0);
        for (std::size_t i = 0; i < g.rows; ++i) {
          const double z = lt.post_act(i, j);
          const double gij = g(i, j);
          if (z > alpha) lg.dalpha[j] += gij;
          dz(i, j) = (z >= 0.0 && z <= alpha) ? gij : 0.0;
          if (want_strength_grad) {
            for (std::size_t k = 0; k < k_count; ++k) {
              const int b = static_cast<int>(std::lround(model.act_ladder.candidates[k]));
              cand_dots[k] += gij * quantize_activation_value(z, b, alpha);
            }
          }
        }
        if (want_strength_grad) {
          const std::vector<double> ggrad =
              gate_gradients(layer.act_strengths[j], model.act_ladder);
          double ds = 0.0;
          for (std::size_t k = 0; k < k_count; ++k) ds += ggrad[k] * cand_dots[k];
          lg.dact_strengths[j] = ds;
        }
      }
    }

    // delta = dL/d(pre-activation)
    Matrix delta(dz.rows, dz.cols);
    for (std::size_t i = 0; i < dz.data.size(); ++i) {
      delta.data[i] = dz.data[i] * nonlinearity_derivative(layer.nonlinearity, lt.pre_act.data[i]);
    }

    lg.dbias.assign(layer.d_out(), 0.0);
    for (std::size_t i = 0; i < delta.rows; ++i) {
      for (std::size_t j = 0; j < delta.cols; ++j) lg.dbias[j] += delta(i, j);
    }

    lg.dW = matmul(transpose(lt.input), delta);

    lg.dstrengths.assign(layer.d_out(), 0.0);
    if (model.weight_ladder.num_candidates() > 1) {
      for (std::size_t j = 0; j < layer.d_out(); ++j) {
        const std::vector<double> col = layer.weight_column(j);
        const std::vector<double> ggrad = gate_gradients(layer.weight_strengths[j], model.weight_ladder);
        double ds = 0.0;
        for (std::size_t k = 0; k < model.weight_ladder.num_candidates(); ++k) {
          const QuantizedColumn q = quantize_column(col, model.weight_ladder.candidates[k]);
          double dot = 0.0;
          for (std::size_t i = 0; i < col.size(); ++i) dot += lg.dW(i, j) * q.values[i];
          ds += ggrad[k] * dot;
        }
        lg.dstrengths[j] = ds;
      }
    }

    g = matmul(delta, transpose(lt.wq));
  }
  grads.input_grad = std::move(g);
  return grads;
}

}  // namespace nmpq
