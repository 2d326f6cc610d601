#pragma once

// Data-parallel inner loops used by the denoiser, the optimizer, the
// diffusion forward process and FedAvg aggregation.
//
// Every kernel has a scalar reference implementation. Vector variants
// (AVX2+FMA on x86-64, NEON on aarch64) are selected once at startup from
// the CPU feature set; FEDDIFF_ISA=scalar in the environment forces the
// reference path. Vector variants reorder floating-point reductions, so they
// agree with the scalar path to rounding, not bitwise.

#include <cstddef>
#include <span>
#include <string_view>

namespace feddiff::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa);

/// Best ISA supported by this CPU and this build.
Isa detected_isa();

/// ISA currently used by the dispatching entry points below.
Isa active_isa();

/// Switches the dispatch table. Throws std::invalid_argument if `isa` is not
/// available on this machine. Not thread-safe: call before spawning workers.
void set_active_isa(Isa isa);

bool isa_available(Isa isa);

struct AdamCoefficients {
  float learning_rate;
  float beta1;
  float beta2;
  float epsilon;
  // 1 - beta^step, precomputed by the caller.
  float bias_correction1;
  float bias_correction2;
};

// y += a * x
void axpy(float a, std::span<const float> x, std::span<float> y);
void axpy(double a, std::span<const double> x, std::span<double> y);

float dot(std::span<const float> x, std::span<const float> y);
double dot(std::span<const double> x, std::span<const double> y);

// out = a * x + b * y
void axpby(double a, std::span<const double> x, double b, std::span<const double> y,
           std::span<double> out);

// acc += w * x, with a float source and double accumulator.
void accumulate_scaled(double w, std::span<const float> x, std::span<double> acc);

// One bias-corrected Adam update over a flat parameter block.
void adam_update(std::span<float> params, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, const AdamCoefficients& c);

// Per-ISA tables, exposed for equivalence testing.
struct KernelTable {
  void (*axpy_f32)(float, const float*, float*, std::size_t);
  void (*axpy_f64)(double, const double*, double*, std::size_t);
  float (*dot_f32)(const float*, const float*, std::size_t);
  double (*dot_f64)(const double*, const double*, std::size_t);
  void (*axpby_f64)(double, const double*, double, const double*, double*, std::size_t);
  void (*accumulate_scaled)(double, const float*, double*, std::size_t);
  void (*adam_update)(float*, const float*, float*, float*, std::size_t, const AdamCoefficients&);
};

const KernelTable& kernel_table(Isa isa);

namespace detail {
extern const KernelTable kScalarTable;
#if defined(FEDDIFF_HAVE_AVX2)
extern const KernelTable kAvx2Table;
#endif
#if defined(FEDDIFF_HAVE_NEON)
extern const KernelTable kNeonTable;
#endif
}  // namespace detail

}  // namespace feddiff::simd
