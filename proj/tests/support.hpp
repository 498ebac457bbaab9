#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "cdmpo/approximator.hpp"
#include "cdmpo/common.hpp"

namespace cdmpo::testing {

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(rows, cols);
  m.data = random_vector(rows * cols, rng, lo, hi);
  return m;
}

inline std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (double& x : p) s += (x = e(rng));
  for (double& x : p) x /= s;
  return p;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Central difference of `f` with respect to every parameter of `params`,
/// compared against `analytic`. Returns the worst relative error.
inline double max_fd_error(MlpParams& params, const MlpGrads& analytic, const std::function<double()>& f,
                           double h = 1e-6) {
  double worst = 0.0;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto check = [&](std::vector<double>& block, const std::vector<double>& grad) {
      for (std::size_t i = 0; i < block.size(); ++i) {
        const double saved = block[i];
        block[i] = saved + h;
        const double up = f();
        block[i] = saved - h;
        const double down = f();
        block[i] = saved;
        const double fd = (up - down) / (2.0 * h);
        const double scale = std::max({1e-3, std::abs(fd), std::abs(grad[i])});
        worst = std::max(worst, std::abs(fd - grad[i]) / scale);
      }
    };
    check(params.layers[k].weight, analytic.layers[k].weight);
    check(params.layers[k].bias, analytic.layers[k].bias);
  }
  return worst;
}

}  // namespace cdmpo::testing
