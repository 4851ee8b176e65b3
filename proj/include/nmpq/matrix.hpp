#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nmpq {

// Dense row-major matrix of doubles. All public operations keep entries
// finite; violations throw.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

// Raised when a public operation would produce NaN/Inf entries; the training
// loop turns this into a per-seed abort.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_finite(const Matrix& m, const std::string& what) {
  for (double v : m.data) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value in " + what);
    }
  }
}

// Fixed left-to-right reduction over k for every output element, so results
// are bit-reproducible across runs.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: dimension mismatch (" +
                                std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                                " * " + std::to_string(b.rows) + "x" +
                                std::to_string(b.cols) + ")");
  }
  Matrix out(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      const double* brow = &b.data[k * b.cols];
      double* orow = &out.data[i * out.cols];
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  check_finite(out, "matmul result");
  return out;
}

template <typename F>
Matrix map_elementwise(const Matrix& m, F f) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    out.data[i] = f(m.data[i]);
    if (!std::isfinite(out.data[i])) {
      throw NumericError("map_elementwise: function produced non-finite value");
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

struct ColumnStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance (divide by n)
  double max_abs = 0.0;
};

inline std::vector<ColumnStats> column_stats(const Matrix& m) {
  if (m.rows == 0) throw std::invalid_argument("column_stats: empty matrix");
  std::vector<ColumnStats> stats(m.cols);
  for (std::size_t j = 0; j < m.cols; ++j) {
    double sum = 0.0, max_abs = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
      const double v = m(i, j);
      sum += v;
      max_abs = std::max(max_abs, std::fabs(v));
    }
    const double mean = sum / static_cast<double>(m.rows);
    double ss = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) {
      const double d = m(i, j) - mean;
      ss += d * d;
    }
    stats[j] = ColumnStats{mean, ss / static_cast<double>(m.rows), max_abs};
  }
  return stats;
}

inline double frobenius_norm(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data) s += v * v;
  return std::sqrt(s);
}

}  // namespace nmpq
