#include "doctest.h"

#include <cmath>

#include "cdmpo/approximator.hpp"
#include "cdmpo/checkpoint.hpp"
#include "support.hpp"

using namespace cdmpo;
using cdmpo::testing::max_fd_error;
using cdmpo::testing::random_matrix;

namespace {

MlpParams tiny_net() {
  MlpParams p;
  p.layers.push_back({2, 2, {1.0, -1.0, 0.5, 2.0}, {0.0, -1.0}, Activation::kRelu});
  p.layers.push_back({2, 1, {3.0, -2.0}, {0.5}, Activation::kIdentity});
  return p;
}

}  // namespace

TEST_CASE("forward matches a hand computation") {
  const MlpParams p = tiny_net();
  // hidden = relu([1 - 2, 0.5 + 4 - 1]) = [0, 3.5]; out = 0 - 7 + 0.5
  const auto y = forward(p, std::vector<double>{1.0, 2.0});
  REQUIRE(y.size() == 1);
  CHECK(y[0] == doctest::Approx(-6.5));
  // hidden = relu([3 - 1, 1.5 + 2 - 1]) = [2, 2.5]; out = 6 - 5 + 0.5
  CHECK(forward(p, std::vector<double>{3.0, 1.0})[0] == doctest::Approx(1.5));
}

TEST_CASE("batched forward agrees with single-row forward") {
  Rng rng(1);
  const std::vector<std::size_t> hidden{7, 5};
  const MlpParams p = make_mlp(4, hidden, 3, Activation::kTanh, rng);
  const Matrix x = random_matrix(9, 4, rng);
  const Matrix y = forward(p, x);
  for (std::size_t r = 0; r < 9; ++r) {
    const auto single = forward(p, x.row(r));
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(single[c] - y(r, c)) < 1e-14);
  }
}

TEST_CASE("make_mlp respects shapes, ranges and zero biases") {
  Rng rng(2);
  const std::vector<std::size_t> hidden{8};
  const MlpParams p = make_mlp(5, hidden, 2, Activation::kRelu, rng, 0.5);
  REQUIRE(p.layers.size() == 2);
  CHECK(p.input_dim() == 5);
  CHECK(p.output_dim() == 2);
  CHECK(p.parameter_count() == 5 * 8 + 8 + 8 * 2 + 2);
  for (double w : p.layers[0].weight) CHECK(std::abs(w) <= 0.5 * std::sqrt(1.0 / 5.0));
  for (double b : p.layers[0].bias) CHECK(b == 0.0);
  CHECK(p.layers[1].activation == Activation::kIdentity);
}

TEST_CASE("backward matches central differences for every activation") {
  Rng rng(3);
  for (Activation act : {Activation::kRelu, Activation::kTanh, Activation::kIdentity}) {
    const std::vector<std::size_t> hidden{6, 4};
    MlpParams p = make_mlp(3, hidden, 2, act, rng);
    const Matrix x = random_matrix(5, 3, rng);
    const Matrix coef = random_matrix(5, 2, rng);
    auto loss = [&]() {
      const Matrix y = forward(p, x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.data.size(); ++i) s += coef.data[i] * y.data[i] * y.data[i];
      return s;
    };
    Tape tape;
    const Matrix y = forward(p, x, &tape);
    Matrix g(5, 2);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = 2.0 * coef.data[i] * y.data[i];
    Matrix input_grad;
    const MlpGrads grads = backward(p, tape, g, &input_grad);
    CHECK(max_fd_error(p, grads, loss) < 1e-5);

    // Input gradient by central differences.
    Matrix xv = x;
    auto loss_x = [&]() {
      const Matrix yy = forward(p, xv);
      double s = 0.0;
      for (std::size_t i = 0; i < yy.data.size(); ++i) s += coef.data[i] * yy.data[i] * yy.data[i];
      return s;
    };
    for (std::size_t i = 0; i < xv.data.size(); ++i) {
      const double saved = xv.data[i];
      xv.data[i] = saved + 1e-6;
      const double up = loss_x();
      xv.data[i] = saved - 1e-6;
      const double down = loss_x();
      xv.data[i] = saved;
      const double fd = (up - down) / 2e-6;
      CHECK(std::abs(fd - input_grad.data[i]) <= 1e-5 * std::max(1e-3, std::abs(fd)));
    }
  }
}

TEST_CASE("Adam follows the bias-corrected recurrence") {
  MlpParams p;
  p.layers.push_back({1, 1, {0.5}, {-0.25}, Activation::kIdentity});
  AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};
  OptimizerState opt = make_optimizer(p, cfg);
  double w = 0.5, m = 0.0, v = 0.0;
  const double grads[] = {1.0, -2.0, 0.5, 3.0, -0.1};
  for (int t = 1; t <= 5; ++t) {
    MlpGrads g = p.zeros_like();
    g.layers[0].weight[0] = grads[t - 1];
    optimizer_step(opt, p, g);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(p.layers[0].weight[0] == doctest::Approx(w).epsilon(1e-12));
    CHECK(p.layers[0].bias[0] == -0.25);  // zero gradient leaves the bias alone
  }
  CHECK(opt.step == 5);
}

TEST_CASE("target_sync interpolates and tau = 1 copies") {
  Rng rng(4);
  const std::vector<std::size_t> hidden{3};
  const MlpParams online = make_mlp(2, hidden, 1, Activation::kRelu, rng);
  MlpParams target = make_mlp(2, hidden, 1, Activation::kRelu, rng);
  const MlpParams before = target;
  target_sync(online, target, 0.25);
  CHECK(target.layers[0].weight[1] ==
        doctest::Approx(0.25 * online.layers[0].weight[1] + 0.75 * before.layers[0].weight[1]));
  target_sync(online, target, 1.0);
  CHECK(target == online);
  CHECK_THROWS(target_sync(online, target, 0.0));
}

TEST_CASE("accumulate, squared_norm and finiteness") {
  MlpParams p = tiny_net();
  MlpGrads g = p.zeros_like();
  accumulate(g, p, 2.0);
  CHECK(g.layers[0].weight[3] == 4.0);
  CHECK(squared_norm(p) == doctest::Approx(1 + 1 + 0.25 + 4 + 0 + 1 + 9 + 4 + 0.25));
  CHECK(p.all_finite());
  p.layers[1].bias[0] = std::nan("");
  CHECK_FALSE(p.all_finite());
  CHECK(parse_activation("tanh") == Activation::kTanh);
  CHECK(to_string(Activation::kRelu) == "relu");
  CHECK_THROWS_AS(parse_activation("gelu"), ConfigError);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(5);
  const std::vector<std::size_t> hidden{4, 3};
  Checkpoint c;
  c.networks["policy"] = make_mlp(3, hidden, 2, Activation::kTanh, rng);
  c.networks["q"] = make_mlp(4, hidden, 11, Activation::kRelu, rng);
  c.networks["q"].layers[0].weight[0] = 1.0 / 3.0;
  c.blobs["config"] = "{\"a\": 1}";
  c.blobs["empty"] = "";
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 8) == "CDMPOCKP");
  CHECK(decode_checkpoint(bytes) == c);
}

TEST_CASE("checkpoint decoding rejects bad magic, versions and truncation") {
  Rng rng(6);
  const std::vector<std::size_t> hidden{2};
  Checkpoint c;
  c.networks["n"] = make_mlp(1, hidden, 1, Activation::kRelu, rng);
  c.blobs["b"] = "xyz";
  const std::string bytes = encode_checkpoint(c);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), IoError);

  std::string future = bytes;
  future[8] = 2;
  CHECK_THROWS_AS(decode_checkpoint(future), IoError);

  for (std::size_t len : {0ul, 4ul, 12ul, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, len)), IoError);
  }
  CHECK_THROWS_AS(decode_checkpoint(bytes + "junk"), IoError);
}
