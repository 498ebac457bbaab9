#include "doctest.h"

#include <cmath>

#include "cdmpo/mpo.hpp"
#include "support.hpp"

using namespace cdmpo;
using cdmpo::testing::max_fd_error;
using cdmpo::testing::random_matrix;
using cdmpo::testing::random_simplex;
using cdmpo::testing::random_vector;

namespace {

EStepBatch random_estep(std::size_t m, std::size_t k, Rng& rng) {
  EStepBatch b;
  b.n_states = m;
  b.n_candidates = k;
  b.q_values = random_vector(m * k, rng, -2.0, 2.0);
  b.c_values = random_vector(m * k, rng, 0.0, 3.0);
  b.lambda = random_vector(1, rng, 0.0, 2.0)[0];
  b.cost_limit = 1.0;
  return b;
}

}  // namespace

TEST_CASE("E-step weight examples") {
  EStepBatch b;
  b.n_states = 1;
  b.n_candidates = 2;
  b.q_values = {1.0, 0.0};
  b.c_values = {0.0, 2.0};
  b.lambda = 1.0;
  b.cost_limit = 0.0;
  const auto w = estep_weights(b, 1.0);
  CHECK(w[0] == doctest::Approx(0.9526).epsilon(1e-3));
  CHECK(w[1] == doctest::Approx(0.0474).epsilon(1e-2));
  CHECK(std::abs(w[0] - std::exp(1.0) / (std::exp(1.0) + std::exp(-2.0))) < 1e-12);

  EStepBatch flat;
  flat.n_states = 2;
  flat.n_candidates = 4;
  flat.q_values.assign(8, 0.7);
  flat.c_values = {0, 1, 2, 3, 0, 1, 2, 3};
  for (double x : estep_weights(flat, 0.3)) CHECK(x == doctest::Approx(0.25));

  CHECK_THROWS_AS(estep_weights(b, 0.0), ConfigError);
  CHECK_THROWS_AS(estep_weights(b, -1.0), ConfigError);
}

TEST_CASE("E-step weights: normalisation, ordering and shift invariance") {
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    EStepBatch b = random_estep(3, 7, rng);
    const double eta = random_vector(1, rng, 0.05, 5.0)[0];
    const auto w = estep_weights(b, eta);
    for (std::size_t s = 0; s < 3; ++s) {
      double sum = 0.0;
      for (std::size_t k = 0; k < 7; ++k) sum += w[s * 7 + k];
      CHECK(std::abs(sum - 1.0) < 1e-9);
      for (std::size_t i = 0; i < 7; ++i) {
        for (std::size_t j = 0; j < 7; ++j) {
          if (b.advantage(s, i) < b.advantage(s, j)) CHECK(w[s * 7 + i] <= w[s * 7 + j]);
        }
      }
    }
    EStepBatch shifted = b;
    for (std::size_t s = 0; s < 3; ++s) {
      const double c = random_vector(1, rng, -50.0, 50.0)[0];
      for (std::size_t k = 0; k < 7; ++k) shifted.q_values[s * 7 + k] += c;
    }
    const auto w2 = estep_weights(shifted, eta);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(w[i] - w2[i]) < 1e-9);
  }
}

TEST_CASE("dual examples") {
  EStepBatch one;
  one.n_states = 1;
  one.n_candidates = 1;
  one.q_values = {2.0};
  one.c_values = {1.5};
  one.lambda = 0.5;
  one.cost_limit = 1.0;
  CHECK(dual_value(0.7, one, 0.1) == doctest::Approx(2.0 - 0.5 * 0.5 + 0.07).epsilon(1e-12));
  CHECK(minimize_dual(one, 0.1, {1e-3, 1e3}, 100) == doctest::Approx(1e-3));

  EStepBatch flat;
  flat.n_states = 3;
  flat.n_candidates = 4;
  flat.q_values.assign(12, -0.4);
  flat.c_values.assign(12, 0.0);
  CHECK(dual_value(2.0, flat, 0.1) == doctest::Approx(-0.4 + 0.2));
  CHECK(minimize_dual(flat, 0.1, {1e-2, 1e2}, 100) == doctest::Approx(1e-2));
  CHECK_THROWS_AS(dual_value(0.0, flat, 0.1), ConfigError);
}

TEST_CASE("dual is convex and the minimiser beats a log grid") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const EStepBatch b = random_estep(4, 10, rng);
    for (int i = 0; i < 20; ++i) {
      const double e1 = std::exp(random_vector(1, rng, std::log(1e-3), std::log(1e3))[0]);
      const double e2 = std::exp(random_vector(1, rng, std::log(1e-3), std::log(1e3))[0]);
      const double u = random_vector(1, rng, 0.0, 1.0)[0];
      CHECK(dual_value(u * e1 + (1 - u) * e2, b, 0.1) <=
            u * dual_value(e1, b, 0.1) + (1 - u) * dual_value(e2, b, 0.1) + 1e-9);
    }
    const double star = minimize_dual(b, 0.1, {1e-3, 1e3}, 200);
    const double g_star = dual_value(star, b, 0.1);
    double best = 1e300, best_eta = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const double eta = std::exp(std::log(1e-3) + (std::log(1e3) - std::log(1e-3)) * i / 999.0);
      const double g = dual_value(eta, b, 0.1);
      CHECK(g_star <= g + 1e-6);
      if (g < best) {
        best = g;
        best_eta = eta;
      }
    }
    CHECK(std::abs(star - best_eta) / best_eta < 0.01);
  }
}

TEST_CASE("at an interior optimum the weights spend the KL budget") {
  Rng rng(3);
  const EStepBatch b = random_estep(1, 50, rng);
  const double eps = 0.1;
  const double eta = minimize_dual(b, eps, {1e-3, 1e3}, 300);
  const auto w = estep_weights(b, eta);
  double kl = 0.0;
  for (double x : w) kl += x > 0 ? x * std::log(x * 50.0) : 0.0;
  CHECK(kl == doctest::Approx(eps).epsilon(1e-3));
}

TEST_CASE("weight entropies") {
  const std::vector<double> w{0.25, 0.25, 0.25, 0.25, 1.0, 0.0, 0.0, 0.0};
  const auto h = weight_entropies(w, 4);
  CHECK(h[0] == doctest::Approx(std::log(4.0)));
  CHECK(h[1] == doctest::Approx(0.0));
}

TEST_CASE("M-step objective gradient matches finite differences") {
  Rng rng(4);
  const std::vector<std::size_t> hidden{4};
  for (int t = 0; t < 10; ++t) {
    GaussianPolicy p = make_gaussian_policy(2, 2, hidden, rng, Activation::kTanh, 0.8);
    const GaussianPolicy old = p;
    accumulate(p.net, p.net, 0.05);  // move away from the old policy so the KL term is active
    const Matrix states = random_matrix(3, 2, rng);
    const Matrix cand = random_matrix(15, 2, rng, -2.0, 2.0);
    std::vector<double> w;
    for (int s = 0; s < 3; ++s) {
      const auto r = random_simplex(5, rng);
      w.insert(w.end(), r.begin(), r.end());
    }
    const MStepObjective obj = mstep_objective(p, old, states, cand, w, 2.5);
    CHECK(obj.kl > 0.0);
    CHECK(max_fd_error(p.net, obj.grads, [&] { return mstep_objective(p, old, states, cand, w, 2.5).value; }) < 1e-5);
  }
}

TEST_CASE("one-hot weights give the plain log-likelihood of the squashed actions") {
  Rng rng(5);
  const std::vector<std::size_t> hidden{3};
  const GaussianPolicy p = make_gaussian_policy(2, 1, hidden, rng, Activation::kTanh, 0.8);
  const Matrix states = random_matrix(2, 2, rng);
  const Matrix cand = random_matrix(6, 1, rng);
  const std::vector<double> w{0, 1, 0, 0, 0, 1};
  const MStepObjective obj = mstep_objective(p, p, states, cand, w, 1.0);
  const double ll = (gaussian_log_density(policy_head(p, states.row(0)), cand.row(1)) -
                     squash_log_correction(cand.row(1)) +
                     gaussian_log_density(policy_head(p, states.row(1)), cand.row(5)) -
                     squash_log_correction(cand.row(5))) /
                    2.0;
  CHECK(ll == doctest::Approx((log_prob(p, states.row(0), std::vector<double>{std::tanh(cand(1, 0))}) +
                               log_prob(p, states.row(1), std::vector<double>{std::tanh(cand(5, 0))})) /
                              2.0)
                  .epsilon(1e-9));
  CHECK(obj.weighted_log_likelihood == doctest::Approx(ll).epsilon(1e-12));
  CHECK(obj.kl == 0.0);
  CHECK(mean_kl(p, p, states) == 0.0);
}

TEST_CASE("M-step penalty adapts and a large step is reverted") {
  Rng rng(6);
  const std::vector<std::size_t> hidden{4};
  const GaussianPolicy old = make_gaussian_policy(2, 1, hidden, rng, Activation::kTanh, 0.5);
  const Matrix states = random_matrix(8, 2, rng);
  const Matrix cand(40, 1, 1.5);  // all weight on actions far from the mean
  std::vector<double> w(40, 0.2);

  MStepConfig cfg;
  cfg.epsilon_m = 0.01;
  cfg.optimizer.learning_rate = 1e-4;
  {
    GaussianPolicy p = old;
    MStepState st = make_mstep_state(p, cfg);
    const MStepDiagnostics d = mstep_update(p, old, states, cand, w, cfg, st);
    CHECK_FALSE(d.aborted);
    CHECK(d.kl <= cfg.epsilon_m);
    CHECK(st.kl_penalty == doctest::Approx(cfg.kl_penalty_init / cfg.kl_penalty_rate));
    CHECK(d.objective == doctest::Approx(mstep_objective(old, old, states, cand, w, 1.0).value));
  }
  {
    cfg.optimizer.learning_rate = 0.5;
    GaussianPolicy p = old;
    MStepState st = make_mstep_state(p, cfg);
    const MStepDiagnostics d = mstep_update(p, old, states, cand, w, cfg, st);
    CHECK(d.aborted);
    CHECK(p.net == old.net);
    CHECK(d.kl == 0.0);
    CHECK(st.kl_penalty == doctest::Approx(cfg.kl_penalty_init / cfg.kl_penalty_rate));
  }
  {
    // Some step size lands between epsilon_m and 10 epsilon_m: kept, penalty grows.
    bool seen = false;
    for (double lr = 1e-3; lr < 0.5 && !seen; lr *= 1.25) {
      cfg.optimizer.learning_rate = lr;
      GaussianPolicy p = old;
      MStepState st = make_mstep_state(p, cfg);
      const MStepDiagnostics d = mstep_update(p, old, states, cand, w, cfg, st);
      if (!d.aborted && d.kl > cfg.epsilon_m) {
        seen = true;
        CHECK(d.kl <= 10.0 * cfg.epsilon_m);
        CHECK(st.kl_penalty == doctest::Approx(cfg.kl_penalty_init * cfg.kl_penalty_rate));
      }
    }
    CHECK(seen);
  }
}

TEST_CASE("the penalty stops at its cap while KL stays above budget") {
  Rng rng(8);
  const std::vector<std::size_t> hidden{4};
  const GaussianPolicy old = make_gaussian_policy(2, 1, hidden, rng, Activation::kTanh, 0.5);
  GaussianPolicy p = old;
  accumulate(p.net, p.net, 0.5);  // start well outside the trust region
  const Matrix states = random_matrix(8, 2, rng);
  const Matrix cand(40, 1, 1.5);
  const std::vector<double> w(40, 0.2);
  MStepConfig cfg;
  cfg.epsilon_m = 1e-6;
  cfg.kl_penalty_max = 20.0;
  cfg.optimizer.learning_rate = 1e-5;
  MStepState st = make_mstep_state(p, cfg);
  double prev = st.kl_penalty;
  for (int k = 0; k < 30; ++k) {
    const MStepDiagnostics d = mstep_update(p, old, states, cand, w, cfg, st);
    CHECK(d.kl > cfg.epsilon_m);
    CHECK(st.kl_penalty == doctest::Approx(std::min(prev * cfg.kl_penalty_rate, 20.0)));
    prev = st.kl_penalty;
  }
  CHECK(st.kl_penalty == 20.0);
}

TEST_CASE("configuration validation") {
  MStepConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.epsilon_e = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MStepConfig{};
  cfg.eta_bounds = {0.0, 1.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MStepConfig{};
  cfg.kl_penalty_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = MStepConfig{};
  cfg.kl_penalty_max = 0.5 * cfg.kl_penalty_init;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
