#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nmpq/model.hpp"

namespace nmpq {

// Static per-neuron record after training: discrete precision, scale and
// integer codes for the weights, plus activation precision when enabled.
// Full-precision neurons (bits == 32) keep raw weights instead of codes.
struct FrozenNeuron {
  double bits = 32.0;
  double scale = 1.0;
  std::vector<std::int32_t> codes;  // empty for full-precision neurons
  std::vector<double> raw_weights;  // used iff codes is empty
  double bias = 0.0;
  double act_bits = 0.0;  // 0 = activation not quantized
  double alpha = 0.0;
};

struct FrozenLayer {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  Nonlinearity nonlinearity = Nonlinearity::kIdentity;
  std::vector<FrozenNeuron> neurons;

  // Reconstructed weight matrix; scale * code reproduces the training-time
  // quantized values bit-exactly.
  Matrix weight_matrix() const {
    Matrix w(d_in, d_out);
    for (std::size_t j = 0; j < d_out; ++j) {
      const FrozenNeuron& n = neurons[j];
      if (n.codes.empty()) {
        for (std::size_t i = 0; i < d_in; ++i) w(i, j) = n.raw_weights[i];
      } else {
        for (std::size_t i = 0; i < d_in; ++i) {
          w(i, j) = n.scale * static_cast<double>(n.codes[i]);
        }
      }
    }
    return w;
  }
};

struct FrozenModel {
  std::vector<FrozenLayer> layers;

  std::size_t input_dim() const { return layers.front().d_in; }
  std::size_t output_dim() const { return layers.back().d_out; }
};

inline FrozenModel freeze(const MlpModel& model) {
  FrozenModel fm;
  for (const auto& layer : model.layers) {
    FrozenLayer fl;
    fl.d_in = layer.d_in();
    fl.d_out = layer.d_out();
    fl.nonlinearity = layer.nonlinearity;
    for (std::size_t j = 0; j < layer.d_out(); ++j) {
      FrozenNeuron n;
      n.bits = hard_bits(layer.weight_strengths[j], model.weight_ladder);
      n.bias = layer.bias[j];
      const std::vector<double> col = layer.weight_column(j);
      if (is_full_precision_bits(n.bits)) {
        n.raw_weights = col;
        n.scale = 1.0;
      } else {
        const QuantizedColumn q = quantize_column(col, n.bits);
        n.scale = q.scale;
        n.codes.resize(col.size());
        for (std::size_t i = 0; i < col.size(); ++i) {
          n.codes[i] = static_cast<std::int32_t>(std::lround(q.values[i] / q.scale));
        }
      }
      if (layer.quantizes_acts()) {
        n.act_bits = hard_bits(layer.act_strengths[j], model.act_ladder);
        n.alpha = layer.alpha[j];
      }
      fl.neurons.push_back(std::move(n));
    }
    fm.layers.push_back(std::move(fl));
  }
  return fm;
}

inline Matrix frozen_forward(const FrozenModel& fm, const Matrix& batch) {
  if (batch.cols != fm.input_dim()) {
    throw std::invalid_argument("frozen_forward: feature count mismatch");
  }
  Matrix x = batch;
  for (const auto& layer : fm.layers) {
    const Matrix w = layer.weight_matrix();
    Matrix y = matmul(x, w);
    for (std::size_t i = 0; i < y.rows; ++i) {
      for (std::size_t j = 0; j < y.cols; ++j) y(i, j) += layer.neurons[j].bias;
    }
    for (std::size_t i = 0; i < y.data.size(); ++i) {
      y.data[i] = apply_nonlinearity(layer.nonlinearity, y.data[i]);
    }
    for (std::size_t j = 0; j < layer.d_out; ++j) {
      const FrozenNeuron& n = layer.neurons[j];
      if (n.act_bits > 0.0) {
        const int b = static_cast<int>(std::lround(n.act_bits));
        for (std::size_t i = 0; i < y.rows; ++i) {
          y(i, j) = quantize_activation_value(y(i, j), b, n.alpha);
        }
      }
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace nmpq
