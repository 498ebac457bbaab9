#include "cdmpo/common.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cdmpo {

Matrix hconcat(const Matrix& a, const Matrix& b) {
  assert(a.rows == b.rows);
  Matrix out(a.rows, a.cols + b.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    auto dst = out.row(r);
    std::copy(a.row(r).begin(), a.row(r).end(), dst.begin());
    std::copy(b.row(r).begin(), b.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(a.cols));
  }
  return out;
}

Matrix repeat_rows(const Matrix& m, std::size_t times) {
  Matrix out(m.rows * times, m.cols);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t t = 0; t < times; ++t) {
      std::copy(m.row(r).begin(), m.row(r).end(), out.row(r * times + t).begin());
    }
  }
  return out;
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : x) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

void softmax(std::span<const double> logits, std::span<double> out) {
  assert(logits.size() == out.size());
  const double hi = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    total += out[i];
  }
  for (double& p : out) p /= total;
}

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

}  // namespace cdmpo
