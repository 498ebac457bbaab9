#include "doctest.h"

#include <cmath>
#include <numbers>

#include "cdmpo/policy.hpp"
#include "support.hpp"

using namespace cdmpo;
using cdmpo::testing::max_fd_error;
using cdmpo::testing::random_matrix;
using cdmpo::testing::random_vector;

namespace {

// Linear policy with zero weights: the head is the same at every state.
GaussianPolicy constant_policy(std::size_t state_dim, const std::vector<double>& mean,
                               const std::vector<double>& scale, bool squash = true, double floor = 1e-3) {
  const std::size_t a = mean.size();
  GaussianPolicy p;
  p.action_dim = a;
  p.scale_floor = floor;
  p.squash = squash;
  DenseLayer l{state_dim, 2 * a, std::vector<double>(2 * a * state_dim, 0.0), std::vector<double>(2 * a),
               Activation::kIdentity};
  for (std::size_t j = 0; j < a; ++j) {
    l.bias[j] = mean[j];
    l.bias[a + j] = std::log(std::expm1(scale[j] - floor));
  }
  p.net.layers.push_back(l);
  return p;
}

// Critic over a two-atom grid on [0, 4] whose expectation is 4 * sigmoid(action).
DistributionalCritic sigmoid_critic() {
  DistributionalCritic c;
  c.grid = std::make_shared<const AtomGrid>(make_grid(0.0, 4.0, 2));
  c.net.layers.push_back({2, 2, {0.0, 0.0, 0.0, 1.0}, {0.0, 0.0}, Activation::kIdentity});
  c.target_net = c.net;
  return c;
}

double action_for(double c_expectation) { return std::log(c_expectation / (4.0 - c_expectation)); }

}  // namespace

TEST_CASE("action sets have the requested size, stay in the box and replay under a seed") {
  Rng rng(1);
  const std::vector<std::size_t> hidden{8};
  const GaussianPolicy p = make_gaussian_policy(3, 2, hidden, rng, Activation::kTanh, 2.0);
  const std::vector<double> s{0.1, -0.4, 0.9};
  CHECK(sample_action_set(p, s, 1, rng).actions.rows == 1);
  CHECK_THROWS_AS(sample_action_set(p, s, 0, rng), std::invalid_argument);

  Rng r1(42), r2(42);
  const ActionSet a = sample_action_set(p, s, 5, r1);
  const ActionSet b = sample_action_set(p, s, 5, r2);
  CHECK(a.actions == b.actions);
  CHECK(a.pre_squash == b.pre_squash);
  for (double x : a.actions.data) CHECK((x >= -1.0 && x <= 1.0));
  for (std::size_t i = 0; i < a.actions.data.size(); ++i) CHECK(a.actions.data[i] == std::tanh(a.pre_squash.data[i]));
}

TEST_CASE("a policy at the scale floor samples next to its squashed mean") {
  const GaussianPolicy p = constant_policy(2, {0.3, -0.8}, {1e-3 + 1e-9, 1e-3 + 1e-9});
  Rng rng(2);
  const std::vector<double> s{0.0, 1.0};
  const ActionSet set = sample_action_set(p, s, 50, rng);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(std::abs(set.actions(i, 0) - std::tanh(0.3)) < 6e-3);
    CHECK(std::abs(set.actions(i, 1) - std::tanh(-0.8)) < 6e-3);
  }
}

TEST_CASE("scales never drop below the floor") {
  Rng rng(3);
  const std::vector<std::size_t> hidden{4};
  GaussianPolicy p = make_gaussian_policy(2, 1, hidden, rng, Activation::kTanh, 1.0, 0.05);
  p.net.layers.back().bias[1] = -500.0;
  CHECK(policy_head(p, std::vector<double>{0.2, 0.2}).scale[0] >= 0.05);
  const GaussianPolicy fresh = make_gaussian_policy(2, 1, hidden, rng, Activation::kTanh, 0.7, 0.05);
  CHECK(policy_head(fresh, std::vector<double>{0.0, 0.0}).scale[0] == doctest::Approx(0.7).epsilon(0.2));
}

TEST_CASE("log_prob examples without squash") {
  const GaussianPolicy p = constant_policy(1, {0.2, -0.1, 0.4}, {1.0, 1.0, 1.0}, false);
  const std::vector<double> s{0.0};
  CHECK(log_prob(p, s, std::vector<double>{0.2, -0.1, 0.4}) ==
        doctest::Approx(-1.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-12));

  // Shifting mean and action together.
  const GaussianPolicy shifted = constant_policy(1, {0.5, 0.2, 0.1}, {1.0, 1.0, 1.0}, false);
  CHECK(log_prob(p, s, std::vector<double>{0.0, 0.0, 0.0}) ==
        doctest::Approx(log_prob(shifted, s, std::vector<double>{0.3, 0.3, -0.3})).epsilon(1e-12));
}

TEST_CASE("log_prob matches a per-dimension density product") {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const auto mean = random_vector(3, rng, -0.5, 0.5);
    const auto scale = random_vector(3, rng, 0.1, 2.0);
    const GaussianPolicy p = constant_policy(2, mean, scale);
    const auto a = random_vector(3, rng, -0.99, 0.99);
    double oracle = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      const double u = std::atanh(a[j]);
      const double density = std::exp(-0.5 * std::pow((u - mean[j]) / scale[j], 2)) /
                             (scale[j] * std::sqrt(2.0 * std::numbers::pi));
      oracle += std::log(density / (1.0 - a[j] * a[j]));
    }
    CHECK(std::abs(log_prob(p, std::vector<double>{0.3, 0.3}, a) - oracle) < 1e-10);
  }
}

TEST_CASE("log_prob gradients match finite differences") {
  Rng rng(5);
  const std::vector<std::size_t> hidden{5};
  for (int t = 0; t < 10; ++t) {
    GaussianPolicy p = make_gaussian_policy(3, 2, hidden, rng, Activation::kTanh, 0.8);
    const auto s = random_vector(3, rng);
    const auto a = random_vector(2, rng, -0.95, 0.95);
    const LogProbGrad g = log_prob_with_grad(p, s, a);
    CHECK(g.value == doctest::Approx(log_prob(p, s, a)).epsilon(1e-12));
    CHECK(max_fd_error(p.net, g.grads, [&] { return log_prob(p, s, a); }) < 1e-5);
  }
}

TEST_CASE("squash correction equals log(1 - tanh^2)") {
  for (double u : {-20.0, -3.0, -0.5, 0.0, 0.7, 4.0, 19.0}) {
    const double t = std::tanh(u);
    const double direct = std::log(1.0 - t * t);
    const double got = squash_log_correction(std::vector<double>{u});
    if (std::abs(u) < 10) CHECK(got == doctest::Approx(direct).epsilon(1e-10));
    CHECK(std::isfinite(got));
  }
}

TEST_CASE("Gaussian KL examples and Monte-Carlo agreement") {
  const GaussianHead p{{0.5, -1.0}, {0.7, 1.3}};
  CHECK(kl_gaussian(p, p) == 0.0);
  const GaussianHead a{{0.0}, {1.0}}, b{{0.6}, {1.0}};
  CHECK(kl_gaussian(a, b) == doctest::Approx(0.18));

  Rng rng(6);
  for (int t = 0; t < 5; ++t) {
    const GaussianHead x{random_vector(2, rng), random_vector(2, rng, 0.5, 1.5)};
    const GaussianHead y{random_vector(2, rng), random_vector(2, rng, 0.5, 1.5)};
    std::normal_distribution<double> n(0.0, 1.0);
    const int m = 100000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < m; ++i) {
      std::vector<double> u(2);
      for (std::size_t j = 0; j < 2; ++j) u[j] = x.mean[j] + x.scale[j] * n(rng);
      const double r = gaussian_log_density(x, u) - gaussian_log_density(y, u);
      sum += r;
      sq += r * r;
    }
    const double mean = sum / m;
    const double se = std::sqrt((sq / m - mean * mean) / m);
    const double kl = kl_gaussian(x, y);
    CHECK(kl >= 0.0);
    CHECK(std::abs(mean - kl) <= 3.0 * se);
  }
}

TEST_CASE("argmin_lowest_index examples") {
  CHECK(argmin_lowest_index(std::vector<double>{2.0, 1.0, 3.0}).index == 1);
  CHECK(argmin_lowest_index(std::vector<double>{1.0, 2.0, 1.0}).index == 0);
  CHECK(argmin_lowest_index(std::vector<double>{5.0}).index == 0);
  CHECK_THROWS(argmin_lowest_index(std::vector<double>{}));
}

TEST_CASE("conservative_select picks the smallest predicted cost") {
  const DistributionalCritic c = sigmoid_critic();
  const std::vector<double> s{0.0};
  Matrix cand(3, 1);
  cand(0, 0) = action_for(2.0);
  cand(1, 0) = action_for(1.0);
  cand(2, 0) = action_for(3.0);
  const Selection sel = conservative_select(c, s, cand);
  CHECK(sel.index == 1);
  CHECK(sel.value == doctest::Approx(1.0));

  Matrix tie(3, 1);
  tie(0, 0) = 0.25;
  tie(1, 0) = 0.5;
  tie(2, 0) = 0.25;
  CHECK(conservative_select(c, s, tie).index == 0);
  CHECK(conservative_select(c, s, Matrix(1, 1, 0.9)).index == 0);
  CHECK_THROWS_AS(conservative_select(c, s, Matrix(0, 1)), std::invalid_argument);
}

TEST_CASE("conservative selection properties on random critics") {
  Rng rng(7);
  const std::vector<std::size_t> hidden{6};
  const DistributionalCritic c = make_distributional_critic(3, 2, hidden, make_grid(0.0, 10.0, 21), rng);
  for (int t = 0; t < 200; ++t) {
    const auto s = random_vector(3, rng);
    const Matrix cand = random_matrix(8, 2, rng);
    const Selection sel = conservative_select(c, s, cand);
    const auto values = expected_values(c, repeat_rows(Matrix::from_row(s), 8), cand);
    for (double v : values) CHECK(sel.value <= v);

    // A positive affine map of the values keeps the index.
    std::vector<double> mapped(values);
    for (double& v : mapped) v = 3.5 * v - 2.0;
    CHECK(argmin_lowest_index(mapped).index == sel.index);

    // Supersets never select a larger value.
    Matrix more(12, 2);
    std::copy(cand.data.begin(), cand.data.end(), more.data.begin());
    const auto extra = random_vector(8, rng);
    std::copy(extra.begin(), extra.end(), more.data.begin() + 16);
    CHECK(conservative_select(c, s, more).value <= sel.value);
  }
}
