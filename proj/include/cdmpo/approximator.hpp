#pragma once

// Small fully connected networks with exact reverse-mode gradients, an Adam
// optimizer, and soft target synchronisation. Everything is double precision
// and operates on row-major batches.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdmpo/common.hpp"

namespace cdmpo {

enum class Activation : std::uint32_t { kIdentity = 0, kRelu = 1, kTanh = 2 };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // out x in, row-major
  std::vector<double> bias;    // out
  Activation activation = Activation::kIdentity;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

struct MlpParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
  std::size_t parameter_count() const;
  bool all_finite() const;
  bool same_shape(const MlpParams& other) const;

  /// Zero-valued record with the same shapes (used for gradients and moments).
  MlpParams zeros_like() const;

  /// Visits every weight and bias block of this record and `other` in lockstep.
  template <typename F>
  void for_each_block(const MlpParams& other, F&& fn) const;
  template <typename F>
  void for_each_block(MlpParams& other, F&& fn);

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

/// Gradients share the parameter layout.
using MlpGrads = MlpParams;

/// Hidden layers use `hidden_activation`; the output layer is linear.
/// Weights are uniform in +-sqrt(1/fan_in) scaled by `init_scale`, biases zero.
MlpParams make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t output_dim,
                   Activation hidden_activation, Rng& rng, double init_scale = 1.0);

/// Cached layer outputs from a forward pass; activations[0] is the input batch.
struct Tape {
  std::vector<Matrix> activations;
};

Matrix forward(const MlpParams& params, const Matrix& input, Tape* tape = nullptr);
std::vector<double> forward(const MlpParams& params, std::span<const double> input);

/// Exact parameter gradients of a scalar loss whose derivative with respect to
/// the network output is `output_grad`. Optionally returns d loss / d input.
MlpGrads backward(const MlpParams& params, const Tape& tape, const Matrix& output_grad,
                  Matrix* input_grad = nullptr);

/// grads_into += scale * grads
void accumulate(MlpGrads& into, const MlpGrads& grads, double scale = 1.0);

double squared_norm(const MlpGrads& grads);

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::uint64_t step = 0;
  MlpParams first_moment;
  MlpParams second_moment;
  AdamConfig config;
};

OptimizerState make_optimizer(const MlpParams& params, const AdamConfig& config);

/// Bias-corrected Adam update applied in place.
void optimizer_step(OptimizerState& state, MlpParams& params, const MlpGrads& grads);

/// target <- tau * online + (1 - tau) * target
void target_sync(const MlpParams& online, MlpParams& target, double tau);

// ---------------------------------------------------------------------------

template <typename F>
void MlpParams::for_each_block(const MlpParams& other, F&& fn) const {
  assert(same_shape(other));
  for (std::size_t k = 0; k < layers.size(); ++k) {
    fn(std::span<const double>(layers[k].weight), std::span<const double>(other.layers[k].weight));
    fn(std::span<const double>(layers[k].bias), std::span<const double>(other.layers[k].bias));
  }
}

template <typename F>
void MlpParams::for_each_block(MlpParams& other, F&& fn) {
  assert(same_shape(other));
  for (std::size_t k = 0; k < layers.size(); ++k) {
    fn(std::span<double>(layers[k].weight), std::span<double>(other.layers[k].weight));
    fn(std::span<double>(layers[k].bias), std::span<double>(other.layers[k].bias));
  }
}

}  // namespace cdmpo
