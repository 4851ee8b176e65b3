#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmpq/quantize.hpp"

namespace nmpq {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double sigmoid_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 - s);
}

// Threshold ladder 0 < t_1 < ... < t_{K-1} < 1 mapping a precision strength
// in [0,1] onto K candidate bit-widths. K = 1 (no thresholds) pins every
// neuron to the single candidate, which is how the uniform QAT baselines run.
struct ThresholdLadder {
  std::vector<double> thresholds;
  std::vector<double> candidates;
  double tau = 0.05;
  double init_value = -1.0;  // < 0: midpoint of the first band

  ThresholdLadder() = default;
  ThresholdLadder(std::vector<double> t, std::vector<double> c, double tau_in = 0.05)
      : thresholds(std::move(t)), candidates(std::move(c)), tau(tau_in) {
    validate();
  }

  void validate() const {
    if (candidates.empty()) throw std::invalid_argument("ladder: no candidates");
    if (thresholds.size() + 1 != candidates.size()) {
      throw std::invalid_argument("ladder: need K-1 thresholds for K candidates");
    }
    double prev = 0.0;
    for (double t : thresholds) {
      if (t <= prev || t >= 1.0) {
        throw std::invalid_argument("ladder: thresholds must be strictly increasing in (0,1)");
      }
      prev = t;
    }
    for (std::size_t k = 1; k < candidates.size(); ++k) {
      if (candidates[k] <= candidates[k - 1]) {
        throw std::invalid_argument("ladder: candidates must be strictly increasing");
      }
    }
    if (tau <= 0.0) throw std::invalid_argument("ladder: tau must be positive");
  }

  std::size_t num_candidates() const { return candidates.size(); }

  // Strengths start inside the first (lowest-bit) band; default midpoint.
  double init_strength() const {
    if (init_value >= 0.0) return init_value;
    return thresholds.empty() ? 0.5 : thresholds.front() / 2.0;
  }

  static ThresholdLadder default_weights(double tau = 0.05) {
    return ThresholdLadder({0.25, 0.5, 0.75}, {1.0, 2.0, 4.0, 8.0}, tau);
  }
  static ThresholdLadder default_activations(double tau = 0.05) {
    return ThresholdLadder({0.33, 0.66}, {4.0, 8.0, 16.0}, tau);
  }
  static ThresholdLadder single(double bits, double tau = 0.05) {
    return ThresholdLadder({}, {bits}, tau);
  }
};

// Piecewise-constant bit assignment: s <= t_1 -> b_1; t_{k-1} < s <= t_k -> b_k;
// s > t_{K-1} -> b_K.
inline double hard_bits(double s, const ThresholdLadder& ladder) {
  if (s < 0.0 || s > 1.0) {
    throw std::invalid_argument("hard_bits: strength " + std::to_string(s) +
                                " outside [0,1]");
  }
  for (std::size_t k = 0; k < ladder.thresholds.size(); ++k) {
    if (s <= ladder.thresholds[k]) return ladder.candidates[k];
  }
  return ladder.candidates.back();
}

// g_k(s) = sigma((s-t_{k-1})/tau) - sigma((s-t_k)/tau), with t_0 = -inf and
// t_K = +inf, so the gates telescope to an exact partition of unity.
inline std::vector<double> soft_gates(double s, const ThresholdLadder& ladder) {
  const std::size_t k_count = ladder.num_candidates();
  std::vector<double> upper(k_count);  // upper[k] = sigma((s - t_{k+1})/tau), last = 0
  for (std::size_t k = 0; k + 1 < k_count; ++k) {
    upper[k] = sigmoid((s - ladder.thresholds[k]) / ladder.tau);
  }
  upper[k_count - 1] = 0.0;
  std::vector<double> gates(k_count);
  double lower = 1.0;  // sigma((s - t_0)/tau) with t_0 = -inf
  for (std::size_t k = 0; k < k_count; ++k) {
    gates[k] = lower - upper[k];
    lower = upper[k];
  }
  return gates;
}

inline std::vector<double> gate_gradients(double s, const ThresholdLadder& ladder) {
  const std::size_t k_count = ladder.num_candidates();
  std::vector<double> upper(k_count);
  for (std::size_t k = 0; k + 1 < k_count; ++k) {
    upper[k] = sigmoid_derivative((s - ladder.thresholds[k]) / ladder.tau) / ladder.tau;
  }
  upper[k_count - 1] = 0.0;
  std::vector<double> grads(k_count);
  double lower = 0.0;  // sigma'(-inf) = 0
  for (std::size_t k = 0; k < k_count; ++k) {
    grads[k] = lower - upper[k];
    lower = upper[k];
  }
  return grads;
}

// Backward-pass surrogate: convex combination of the candidate quantizations.
// Never used to produce forward outputs.
inline std::vector<double> surrogate_mix(
    const std::vector<double>& column, double s, const ThresholdLadder& ladder,
    const std::function<std::vector<double>(const std::vector<double>&, double)>& quantize) {
  const std::vector<double> gates = soft_gates(s, ladder);
  std::vector<double> out(column.size(), 0.0);
  for (std::size_t k = 0; k < gates.size(); ++k) {
    const std::vector<double> q = quantize(column, ladder.candidates[k]);
    for (std::size_t i = 0; i < column.size(); ++i) out[i] += gates[k] * q[i];
  }
  return out;
}

}  // namespace nmpq
