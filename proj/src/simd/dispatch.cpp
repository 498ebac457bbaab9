#include "cdmpo/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace cdmpo::simd {
namespace {

Isa detect() {
  if (const char* forced = std::getenv("CDMPO_SIMD"); forced != nullptr) {
    if (std::strcmp(forced, "scalar") == 0) return Isa::kScalar;
  }
  return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return "scalar";
    case Isa::kAvx2: return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar: return true;
    case Isa::kAvx2:
#if CDMPO_HAVE_AVX2_KERNELS && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  current().store(isa_supported(isa) ? isa : Isa::kScalar, std::memory_order_relaxed);
}

#if CDMPO_HAVE_AVX2_KERNELS
#define CDMPO_DISPATCH(fn, ...)                                   \
  return active_isa() == Isa::kAvx2 ? avx2::fn(__VA_ARGS__) : scalar::fn(__VA_ARGS__)
#else
#define CDMPO_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

double dot(std::span<const double> a, std::span<const double> b) { CDMPO_DISPATCH(dot, a, b); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  CDMPO_DISPATCH(axpy, alpha, x, y);
}

void axpby(double alpha, std::span<const double> x, double beta, std::span<double> y) {
  CDMPO_DISPATCH(axpby, alpha, x, beta, y);
}

void affine(std::span<const double> weight, std::span<const double> bias,
            std::span<const double> x, std::span<double> out) {
  CDMPO_DISPATCH(affine, weight, bias, x, out);
}

void adam_update(const AdamCoefficients& c, std::span<const double> grad,
                 std::span<double> m, std::span<double> v, std::span<double> param) {
  CDMPO_DISPATCH(adam_update, c, grad, m, v, param);
}

#undef CDMPO_DISPATCH

}  // namespace cdmpo::simd
