#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdmpo {

using Rng = std::mt19937_64;

/// Invalid configuration or hyperparameter (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or a diverged solve (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable, unwritable, or malformed file (CLI exit code 4).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles. Batches are rows.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t r) {
    assert(r < rows);
    return {data.data() + r * cols, cols};
  }
  std::span<const double> row(std::size_t r) const {
    assert(r < rows);
    return {data.data() + r * cols, cols};
  }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  static Matrix from_row(std::span<const double> values) {
    Matrix m(1, values.size());
    std::copy(values.begin(), values.end(), m.data.begin());
    return m;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Row-wise concatenation [a | b]; both must have the same row count.
Matrix hconcat(const Matrix& a, const Matrix& b);

/// Repeats each row of `m` `times` times consecutively.
Matrix repeat_rows(const Matrix& m, std::size_t times);

/// Numerically stable log(sum(exp(x))).
double log_sum_exp(std::span<const double> x);

/// Stable softmax written into `out` (same length as `logits`).
void softmax(std::span<const double> logits, std::span<double> out);

/// Derives an independent generator from a base seed and a stream label.
Rng make_rng(std::uint64_t seed, std::uint64_t stream);

}  // namespace cdmpo
