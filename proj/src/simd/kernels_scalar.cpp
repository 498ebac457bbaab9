#include "cdmpo/simd/kernels.hpp"

#include <cassert>
#include <cmath>

namespace cdmpo::simd::scalar {

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = alpha * x[i] + beta * y[i];
}

void affine(std::span<const double> weight, std::span<const double> bias,
            std::span<const double> x, std::span<double> out) {
  const std::size_t cols = x.size();
  assert(weight.size() == out.size() * cols && bias.size() == out.size());
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = bias[r] + dot(weight.subspan(r * cols, cols), x);
  }
}

void adam_update(const AdamCoefficients& c, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::span<double> param) {
  assert(grad.size() == m.size() && m.size() == v.size() && v.size() == param.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace cdmpo::simd::scalar
