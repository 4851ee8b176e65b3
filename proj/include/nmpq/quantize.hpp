#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmpq {

// Bit-widths are carried as doubles so the ternary baseline (1.58) and the
// full-precision sentinel (32) fit the same plumbing as integer widths.
constexpr double kTernaryBits = 1.58;
constexpr double kFullPrecisionBits = 32.0;
constexpr double kTernaryThresholdFactor = 0.7;

inline bool is_ternary_bits(double bits) { return std::fabs(bits - kTernaryBits) < 1e-9; }
inline bool is_full_precision_bits(double bits) { return bits >= kFullPrecisionBits - 1e-9; }

inline int weight_qmax(int bits) { return (1 << (bits - 1)) - 1; }

struct QuantizedColumn {
  std::vector<double> values;
  double scale = 1.0;  // sentinel 1 when the column is all-zero
};

// Signed symmetric uniform quantizer on one incoming-weight column.
// bits >= 2: scale = max|w| / (2^{b-1}-1), codes round half away from zero,
// clamped to +/-(2^{b-1}-1). bits == 1: scale = mean|w|, output scale*sign(w)
// with sign(0) = +1.
inline QuantizedColumn quantize_weights(const std::vector<double>& column, int bits) {
  if (bits != 1 && bits != 2 && bits != 4 && bits != 8 && bits != 16) {
    throw std::invalid_argument("quantize_weights: unsupported bit-width " +
                                std::to_string(bits));
  }
  QuantizedColumn out;
  out.values.resize(column.size());
  bool all_zero = true;
  for (double w : column) {
    if (w != 0.0) {
      all_zero = false;
      break;
    }
  }
  if (all_zero) {
    out.scale = 1.0;
    return out;
  }
  if (bits == 1) {
    double sum_abs = 0.0;
    for (double w : column) sum_abs += std::fabs(w);
    out.scale = sum_abs / static_cast<double>(column.size());
    for (std::size_t i = 0; i < column.size(); ++i) {
      out.values[i] = column[i] < 0.0 ? -out.scale : out.scale;
    }
    return out;
  }
  const double qmax = static_cast<double>(weight_qmax(bits));
  double max_abs = 0.0;
  for (double w : column) max_abs = std::max(max_abs, std::fabs(w));
  out.scale = max_abs / qmax;
  for (std::size_t i = 0; i < column.size(); ++i) {
    double code = std::round(column[i] / out.scale);  // half away from zero
    code = std::clamp(code, -qmax, qmax);
    out.values[i] = out.scale * code;
  }
  return out;
}

// Ternary (1.58-bit) baseline: zero out entries below a threshold, map the
// survivors to +/- their mean magnitude.
inline QuantizedColumn quantize_ternary(const std::vector<double>& column,
                                        double threshold_factor = kTernaryThresholdFactor) {
  if (threshold_factor <= 0.0) {
    throw std::invalid_argument("quantize_ternary: threshold_factor must be positive");
  }
  QuantizedColumn out;
  out.values.assign(column.size(), 0.0);
  double sum_abs = 0.0;
  for (double w : column) sum_abs += std::fabs(w);
  const double delta = threshold_factor * sum_abs / static_cast<double>(column.size());
  double surviving_sum = 0.0;
  std::size_t surviving = 0;
  for (double w : column) {
    if (std::fabs(w) > delta) {
      surviving_sum += std::fabs(w);
      ++surviving;
    }
  }
  if (surviving == 0) {
    out.scale = 1.0;
    return out;
  }
  const double mu = surviving_sum / static_cast<double>(surviving);
  out.scale = mu;
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (std::fabs(column[i]) > delta) {
      out.values[i] = column[i] < 0.0 ? -mu : mu;
    }
  }
  return out;
}

// Unsigned activation quantizer on [0, alpha], step alpha/(2^b - 1).
inline double quantize_activation_value(double z, int bits, double alpha) {
  const double step = alpha / static_cast<double>((1 << bits) - 1);
  const double clipped = std::clamp(z, 0.0, alpha);
  return step * std::round(clipped / step);
}

inline void check_activation_spec(int bits, double alpha) {
  if (bits != 4 && bits != 8 && bits != 16) {
    throw std::invalid_argument("quantize_activation: unsupported bit-width " +
                                std::to_string(bits));
  }
  if (alpha <= 0.0) {
    throw std::invalid_argument("quantize_activation: alpha must be positive");
  }
}

inline std::vector<double> quantize_activation(const std::vector<double>& z, int bits,
                                               double alpha) {
  check_activation_spec(bits, alpha);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = quantize_activation_value(z[i], bits, alpha);
  }
  return out;
}

// Dispatcher over the extended bit alphabet used by the training engine.
inline QuantizedColumn quantize_column(const std::vector<double>& column, double bits) {
  if (is_full_precision_bits(bits)) {
    return QuantizedColumn{column, 1.0};
  }
  if (is_ternary_bits(bits)) {
    return quantize_ternary(column);
  }
  return quantize_weights(column, static_cast<int>(std::lround(bits)));
}

// Brute-force reference: the level closest to x, ties broken toward larger
// magnitude (and positive when magnitudes tie), matching half-away-from-zero.
inline double nearest_level(double x, const std::vector<double>& levels) {
  if (levels.empty()) throw std::invalid_argument("nearest_level: empty level set");
  double best = levels[0];
  double best_dist = std::fabs(x - levels[0]);
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const double d = std::fabs(x - levels[i]);
    if (d < best_dist ||
        (d == best_dist && (std::fabs(levels[i]) > std::fabs(best) ||
                            (std::fabs(levels[i]) == std::fabs(best) && levels[i] > best)))) {
      best = levels[i];
      best_dist = d;
    }
  }
  return best;
}

inline std::vector<double> weight_levels(int bits, double scale) {
  std::vector<double> levels;
  if (bits == 1) {
    levels = {-scale, scale};
    return levels;
  }
  const int qmax = weight_qmax(bits);
  for (int k = -qmax; k <= qmax; ++k) levels.push_back(scale * static_cast<double>(k));
  return levels;
}

inline std::vector<double> activation_levels(int bits, double alpha) {
  const int n = (1 << bits) - 1;
  const double step = alpha / static_cast<double>(n);
  std::vector<double> levels;
  for (int k = 0; k <= n; ++k) levels.push_back(step * static_cast<double>(k));
  return levels;
}

}  // namespace nmpq
