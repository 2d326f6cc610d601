#include <arm_neon.h>

#include <cmath>

#include "feddiff/simd/kernels.hpp"

namespace feddiff::simd {
namespace {

void axpy_f32(float a, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot_f32(const float* x, const float* y, std::size_t n) {
  float32x4_t acc = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = vfmaq_f32(acc, vld1q_f32(x + i), vld1q_f32(y + i));
  float s = vaddvq_f32(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(x + i), vld1q_f64(y + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpby_f64(double a, const double* x, double b, const double* y, double* out,
               std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  const float64x2_t vb = vdupq_n_f64(b);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(out + i, vfmaq_f64(vmulq_f64(vb, vld1q_f64(y + i)), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void accumulate_scaled(double w, const float* x, double* acc, std::size_t n) {
  const float64x2_t vw = vdupq_n_f64(w);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t xd = vcvt_f64_f32(vld1_f32(x + i));
    vst1q_f64(acc + i, vfmaq_f64(vld1q_f64(acc + i), vw, xd));
  }
  for (; i < n; ++i) acc[i] += w * static_cast<double>(x[i]);
}

void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                 const AdamCoefficients& c) {
  const float32x4_t b1 = vdupq_n_f32(c.beta1);
  const float32x4_t b2 = vdupq_n_f32(c.beta2);
  const float32x4_t omb1 = vdupq_n_f32(1.0f - c.beta1);
  const float32x4_t omb2 = vdupq_n_f32(1.0f - c.beta2);
  const float32x4_t bc1 = vdupq_n_f32(c.bias_correction1);
  const float32x4_t bc2 = vdupq_n_f32(c.bias_correction2);
  const float32x4_t lr = vdupq_n_f32(c.learning_rate);
  const float32x4_t eps = vdupq_n_f32(c.epsilon);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float32x4_t gi = vld1q_f32(g + i);
    const float32x4_t mi = vfmaq_f32(vmulq_f32(omb1, gi), b1, vld1q_f32(m + i));
    const float32x4_t vi = vfmaq_f32(vmulq_f32(vmulq_f32(omb2, gi), gi), b2, vld1q_f32(v + i));
    vst1q_f32(m + i, mi);
    vst1q_f32(v + i, vi);
    const float32x4_t m_hat = vdivq_f32(mi, bc1);
    const float32x4_t v_hat = vdivq_f32(vi, bc2);
    const float32x4_t step = vdivq_f32(vmulq_f32(lr, m_hat), vaddq_f32(vsqrtq_f32(v_hat), eps));
    vst1q_f32(p + i, vsubq_f32(vld1q_f32(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0f - c.beta1) * g[i];
    v[i] = c.beta2 * v[i] + (1.0f - c.beta2) * g[i] * g[i];
    const float m_hat = m[i] / c.bias_correction1;
    const float v_hat = v[i] / c.bias_correction2;
    p[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

namespace detail {
const KernelTable kNeonTable = {axpy_f32,  axpy_f64,          dot_f32,    dot_f64,
                                axpby_f64, accumulate_scaled, adam_update};
}  // namespace detail

}  // namespace feddiff::simd
