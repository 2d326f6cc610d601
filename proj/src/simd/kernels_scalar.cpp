#include <cmath>

#include "feddiff/simd/kernels.hpp"

namespace feddiff::simd {
namespace {

void axpy_f32(float a, const float* x, float* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

float dot_f32(const float* x, const float* y, std::size_t n) {
  float s = 0.0f;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpby_f64(double a, const double* x, double b, const double* y, double* out,
               std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void accumulate_scaled(double w, const float* x, double* acc, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += w * static_cast<double>(x[i]);
}

void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 const AdamCoefficients& c) {
  const float one_minus_b1 = 1.0f - c.beta1;
  const float one_minus_b2 = 1.0f - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * g[i] * g[i];
    const float m_hat = m[i] / c.bias_correction1;
    const float v_hat = v[i] / c.bias_correction2;
    p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

namespace detail {
const KernelTable kScalarTable = {axpy_f32,  axpy_f64,          dot_f32,    dot_f64,
                                  axpby_f64, accumulate_scaled, adam_update};
}  // namespace detail

}  // namespace feddiff::simd
