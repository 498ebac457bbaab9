#include "cdmpo/approximator.hpp"

#include <cmath>

#include "cdmpo/simd/kernels.hpp"

namespace cdmpo {

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
  }
  return "unknown";
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

bool MlpParams::all_finite() const {
  for (const auto& l : layers) {
    for (double w : l.weight)
      if (!std::isfinite(w)) return false;
    for (double b : l.bias)
      if (!std::isfinite(b)) return false;
  }
  return true;
}

bool MlpParams::same_shape(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].in != other.layers[k].in || layers[k].out != other.layers[k].out) return false;
  }
  return true;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams z = *this;
  for (auto& l : z.layers) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return z;
}

MlpParams make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                   Activation hidden_activation, Rng& rng, double init_scale) {
  MlpParams params;
  std::size_t in = input_dim;
  auto add_layer = [&](std::size_t out, Activation act) {
    DenseLayer layer;
    layer.in = in;
    layer.out = out;
    layer.activation = act;
    layer.weight.resize(in * out);
    layer.bias.assign(out, 0.0);
    const double bound = init_scale * std::sqrt(1.0 / static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& w : layer.weight) w = dist(rng);
    params.layers.push_back(std::move(layer));
    in = out;
  };
  for (std::size_t h : hidden) add_layer(h, hidden_activation);
  add_layer(output_dim, Activation::kIdentity);
  return params;
}

namespace {

inline void activate(Activation act, std::span<double> v) {
  switch (act) {
    case Activation::kIdentity: break;
    case Activation::kRelu:
      for (double& x : v) x = x > 0.0 ? x : 0.0;
      break;
    case Activation::kTanh:
      for (double& x : v) x = std::tanh(x);
      break;
  }
}

// Converts d loss / d activated output into d loss / d pre-activation, in place.
inline void activation_backward(Activation act, std::span<const double> activated, std::span<double> grad) {
  switch (act) {
    case Activation::kIdentity: break;
    case Activation::kRelu:
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (activated[i] <= 0.0) grad[i] = 0.0;
      break;
    case Activation::kTanh:
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - activated[i] * activated[i];
      break;
  }
}

}  // namespace

Matrix forward(const MlpParams& params, const Matrix& input, Tape* tape) {
  if (input.cols != params.input_dim()) {
    throw std::invalid_argument("network input width " + std::to_string(input.cols) + " != " +
                                std::to_string(params.input_dim()));
  }
  if (tape) {
    tape->activations.clear();
    tape->activations.reserve(params.layers.size() + 1);
    tape->activations.push_back(input);
  }
  Matrix current = input;
  for (const auto& layer : params.layers) {
    Matrix next(current.rows, layer.out);
    for (std::size_t r = 0; r < current.rows; ++r) {
      auto out = next.row(r);
      simd::affine(layer.weight, layer.bias, current.row(r), out);
      activate(layer.activation, out);
    }
    if (tape) tape->activations.push_back(next);
    current = std::move(next);
  }
  return current;
}

std::vector<double> forward(const MlpParams& params, std::span<const double> input) {
  return forward(params, Matrix::from_row(input)).data;
}

MlpGrads backward(const MlpParams& params, const Tape& tape, const Matrix& output_grad, Matrix* input_grad) {
  assert(tape.activations.size() == params.layers.size() + 1);
  MlpGrads grads = params.zeros_like();
  Matrix delta = output_grad;
  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const auto& layer = params.layers[k];
    const Matrix& activated = tape.activations[k + 1];
    const Matrix& below = tape.activations[k];
    auto& g = grads.layers[k];
    const bool need_below = k > 0 || input_grad != nullptr;
    Matrix delta_below = need_below ? Matrix(delta.rows, layer.in) : Matrix();
    for (std::size_t r = 0; r < delta.rows; ++r) {
      auto d = delta.row(r);
      activation_backward(layer.activation, activated.row(r), d);
      const auto x = below.row(r);
      for (std::size_t o = 0; o < layer.out; ++o) {
        const double go = d[o];
        if (go == 0.0) continue;
        g.bias[o] += go;
        simd::axpy(go, x, std::span<double>(g.weight).subspan(o * layer.in, layer.in));
        if (need_below) {
          simd::axpy(go, std::span<const double>(layer.weight).subspan(o * layer.in, layer.in),
                     delta_below.row(r));
        }
      }
    }
    if (need_below) delta = std::move(delta_below);
  }
  if (input_grad) *input_grad = std::move(delta);
  return grads;
}

void accumulate(MlpGrads& into, const MlpGrads& grads, double scale) {
  assert(into.same_shape(grads));
  for (std::size_t k = 0; k < into.layers.size(); ++k) {
    simd::axpy(scale, grads.layers[k].weight, into.layers[k].weight);
    simd::axpy(scale, grads.layers[k].bias, into.layers[k].bias);
  }
}

double squared_norm(const MlpGrads& grads) {
  double acc = 0.0;
  for (const auto& l : grads.layers) {
    acc += simd::dot(l.weight, l.weight);
    acc += simd::dot(l.bias, l.bias);
  }
  return acc;
}

OptimizerState make_optimizer(const MlpParams& params, const AdamConfig& config) {
  if (!(config.learning_rate > 0.0) || !(config.beta1 > 0.0 && config.beta1 < 1.0) ||
      !(config.beta2 > 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0)) {
    throw ConfigError("invalid optimizer settings");
  }
  return OptimizerState{0, params.zeros_like(), params.zeros_like(), config};
}

void optimizer_step(OptimizerState& state, MlpParams& params, const MlpGrads& grads) {
  assert(params.same_shape(grads) && params.same_shape(state.first_moment));
  ++state.step;
  const double t = static_cast<double>(state.step);
  const simd::AdamCoefficients c{state.config.learning_rate, state.config.beta1, state.config.beta2,
                                 state.config.epsilon, 1.0 - std::pow(state.config.beta1, t),
                                 1.0 - std::pow(state.config.beta2, t)};
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    auto& p = params.layers[k];
    const auto& g = grads.layers[k];
    simd::adam_update(c, g.weight, state.first_moment.layers[k].weight, state.second_moment.layers[k].weight,
                      p.weight);
    simd::adam_update(c, g.bias, state.first_moment.layers[k].bias, state.second_moment.layers[k].bias, p.bias);
  }
}

void target_sync(const MlpParams& online, MlpParams& target, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("target sync tau must lie in (0, 1]");
  if (!online.same_shape(target)) throw std::invalid_argument("target network shape mismatch");
  for (std::size_t k = 0; k < online.layers.size(); ++k) {
    if (tau == 1.0) {
      target.layers[k].weight = online.layers[k].weight;
      target.layers[k].bias = online.layers[k].bias;
    } else {
      simd::axpby(tau, online.layers[k].weight, 1.0 - tau, target.layers[k].weight);
      simd::axpby(tau, online.layers[k].bias, 1.0 - tau, target.layers[k].bias);
    }
  }
}

}  // namespace cdmpo
