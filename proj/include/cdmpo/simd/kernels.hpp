#pragma once

// Dense double-precision kernels used by the approximator inner loops.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active variant is chosen once at startup from the
// CPU feature flags; CDMPO_SIMD=scalar in the environment forces the
// reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace cdmpo::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// True when the running CPU can execute the given variant.
bool isa_supported(Isa isa);

/// Variant currently used by the dispatching entry points below.
Isa active_isa();

/// Overrides the dispatch choice (tests use this to compare variants).
/// Requesting an unsupported variant falls back to kScalar.
void set_active_isa(Isa isa);

// Dispatching entry points. Spans that are read together must have equal
// length; this is checked with assert only.

double dot(std::span<const double> a, std::span<const double> b);

/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

/// y = alpha * x + beta * y
void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y);

/// out[r] = bias[r] + dot(weight row r, x) for a row-major rows x x.size() matrix.
void affine(std::span<const double> weight, std::span<const double> bias,
            std::span<const double> x, std::span<double> out);

struct AdamCoefficients {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

/// One bias-corrected adaptive-moment update over a flat parameter block.
void adam_update(const AdamCoefficients& c, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::span<double> param);

// Per-variant implementations, exposed for equivalence tests.
namespace scalar {
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y);
void affine(std::span<const double> weight, std::span<const double> bias,
            std::span<const double> x, std::span<double> out);
void adam_update(const AdamCoefficients& c, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::span<double> param);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define CDMPO_HAVE_AVX2_KERNELS 1
namespace avx2 {
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y);
void affine(std::span<const double> weight, std::span<const double> bias,
            std::span<const double> x, std::span<double> out);
void adam_update(const AdamCoefficients& c, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::span<double> param);
}  // namespace avx2
#else
#define CDMPO_HAVE_AVX2_KERNELS 0
#endif

}  // namespace cdmpo::simd
