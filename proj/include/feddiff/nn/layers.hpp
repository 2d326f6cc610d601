#pragma once

// Per-sample layer primitives with hand-written backward passes. Tensors are
// CHW. Parameter blocks are addressed by offset into one flat array so the
// same code runs on float (training) and double (gradient checks).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "feddiff/simd/kernels.hpp"

namespace feddiff::nn {

template <class T>
struct VectorOps;

template <>
struct VectorOps<float> {
  explicit VectorOps(const simd::KernelTable& k) : table(&k) {}
  void axpy(float a, const float* x, float* y, std::size_t n) const { table->axpy_f32(a, x, y, n); }
  float dot(const float* x, const float* y, std::size_t n) const { return table->dot_f32(x, y, n); }
  const simd::KernelTable* table;
};

template <>
struct VectorOps<double> {
  explicit VectorOps(const simd::KernelTable& k) : table(&k) {}
  void axpy(double a, const double* x, double* y, std::size_t n) const {
    table->axpy_f64(a, x, y, n);
  }
  double dot(const double* x, const double* y, std::size_t n) const {
    return table->dot_f64(x, y, n);
  }
  const simd::KernelTable* table;
};

template <class T>
VectorOps<T> active_ops() {
  return VectorOps<T>(simd::kernel_table(simd::active_isa()));
}

struct Conv2dSpec {
  std::size_t weight = 0;  // [out][in][k][k]
  std::size_t bias = 0;    // [out]
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;

  int pad() const { return (kernel - 1) / 2; }
  int out_size(int in) const { return (in + 2 * pad() - kernel) / stride + 1; }
  std::size_t patch() const { return static_cast<std::size_t>(in_channels) * kernel * kernel; }
};

struct LinearSpec {
  std::size_t weight = 0;  // [out][in]
  std::size_t bias = 0;
  int in_features = 0;
  int out_features = 0;
};

struct GroupNormSpec {
  std::size_t gamma = 0;
  std::size_t beta = 0;
  int channels = 0;
  int groups = 1;
};

inline constexpr double kGroupNormEpsilon = 1e-5;

/// Largest group count <= 8 that divides `channels`.
inline int group_count(int channels) {
  for (int g = std::min(8, channels); g > 1; --g) {
    if (channels % g == 0) return g;
  }
  return 1;
}

// col is laid out [out_pixel][in_channel * k * k].
template <class T>
void im2col(const Conv2dSpec& s, const T* in, int h, int w, std::vector<T>& col) {
  const int oh = s.out_size(h);
  const int ow = s.out_size(w);
  const std::size_t patch = s.patch();
  col.assign(static_cast<std::size_t>(oh) * ow * patch, T(0));
  const int pad = s.pad();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      T* row = col.data() + (static_cast<std::size_t>(oy) * ow + ox) * patch;
      std::size_t r = 0;
      for (int c = 0; c < s.in_channels; ++c) {
        const T* plane = in + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = oy * s.stride + ky - pad;
          for (int kx = 0; kx < s.kernel; ++kx, ++r) {
            const int ix = ox * s.stride + kx - pad;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) row[r] = plane[iy * w + ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const Conv2dSpec& s, const std::vector<T>& dcol, int h, int w, T* din) {
  const int oh = s.out_size(h);
  const int ow = s.out_size(w);
  const std::size_t patch = s.patch();
  const int pad = s.pad();
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = dcol.data() + (static_cast<std::size_t>(oy) * ow + ox) * patch;
      std::size_t r = 0;
      for (int c = 0; c < s.in_channels; ++c) {
        T* plane = din + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = oy * s.stride + ky - pad;
          for (int kx = 0; kx < s.kernel; ++kx, ++r) {
            const int ix = ox * s.stride + kx - pad;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += row[r];
          }
        }
      }
    }
  }
}

/// out must hold out_channels * oh * ow values. Leaves the im2col buffer in
/// `col` for the backward pass.
template <class T>
void conv2d_forward(const VectorOps<T>& ops, const T* params, const Conv2dSpec& s, const T* in,
                    int h, int w, T* out, std::vector<T>& col) {
  im2col(s, in, h, w, col);
  const std::size_t pixels = static_cast<std::size_t>(s.out_size(h)) * s.out_size(w);
  const std::size_t patch = s.patch();
  for (int co = 0; co < s.out_channels; ++co) {
    const T* wrow = params + s.weight + static_cast<std::size_t>(co) * patch;
    const T b = params[s.bias + co];
    T* orow = out + static_cast<std::size_t>(co) * pixels;
    for (std::size_t p = 0; p < pixels; ++p) orow[p] = b + ops.dot(wrow, col.data() + p * patch, patch);
  }
}

/// Accumulates parameter gradients into `grad`; adds the input gradient to
/// `din` when it is non-null.
template <class T>
void conv2d_backward(const VectorOps<T>& ops, const T* params, const Conv2dSpec& s, int h, int w,
                     const std::vector<T>& col, const T* dout, T* grad, T* din,
                     std::vector<T>& dcol) {
  const std::size_t pixels = static_cast<std::size_t>(s.out_size(h)) * s.out_size(w);
  const std::size_t patch = s.patch();
  if (din != nullptr) dcol.assign(pixels * patch, T(0));
  for (int co = 0; co < s.out_channels; ++co) {
    const T* drow = dout + static_cast<std::size_t>(co) * pixels;
    T* gw = grad + s.weight + static_cast<std::size_t>(co) * patch;
    const T* wrow = params + s.weight + static_cast<std::size_t>(co) * patch;
    T bias_sum = 0;
    for (std::size_t p = 0; p < pixels; ++p) {
      const T g = drow[p];
      bias_sum += g;
      if (g == T(0)) continue;
      ops.axpy(g, col.data() + p * patch, gw, patch);
      if (din != nullptr) ops.axpy(g, wrow, dcol.data() + p * patch, patch);
    }
    grad[s.bias + co] += bias_sum;
  }
  if (din != nullptr) col2im_add(s, dcol, h, w, din);
}

template <class T>
void linear_forward(const VectorOps<T>& ops, const T* params, const LinearSpec& s, const T* in,
                    T* out) {
  for (int o = 0; o < s.out_features; ++o) {
    out[o] = params[s.bias + o] +
             ops.dot(params + s.weight + static_cast<std::size_t>(o) * s.in_features, in,
                     static_cast<std::size_t>(s.in_features));
  }
}

template <class T>
void linear_backward(const VectorOps<T>& ops, const T* params, const LinearSpec& s, const T* in,
                     const T* dout, T* grad, T* din) {
  const auto n = static_cast<std::size_t>(s.in_features);
  for (int o = 0; o < s.out_features; ++o) {
    const T g = dout[o];
    grad[s.bias + o] += g;
    ops.axpy(g, in, grad + s.weight + static_cast<std::size_t>(o) * n, n);
    if (din != nullptr) ops.axpy(g, params + s.weight + static_cast<std::size_t>(o) * n, din, n);
  }
}

/// Stores per-group mean and reciprocal std in `stats` (2 * groups values).
template <class T>
void group_norm_forward(const T* params, const GroupNormSpec& s, const T* in, std::size_t hw,
                        T* out, std::vector<T>& stats) {
  const int per_group = s.channels / s.groups;
  const std::size_t m = static_cast<std::size_t>(per_group) * hw;
  stats.resize(2 * static_cast<std::size_t>(s.groups));
  for (int g = 0; g < s.groups; ++g) {
    const T* x = in + static_cast<std::size_t>(g) * m;
    double mean = 0.0;
    for (std::size_t i = 0; i < m; ++i) mean += x[i];
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double d = x[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    const double rstd = 1.0 / std::sqrt(var + kGroupNormEpsilon);
    stats[2 * g] = static_cast<T>(mean);
    stats[2 * g + 1] = static_cast<T>(rstd);
    for (int cl = 0; cl < per_group; ++cl) {
      const int c = g * per_group + cl;
      const T gamma = params[s.gamma + c];
      const T beta = params[s.beta + c];
      const T* xc = x + static_cast<std::size_t>(cl) * hw;
      T* oc = out + static_cast<std::size_t>(c) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        oc[i] = static_cast<T>((xc[i] - mean) * rstd) * gamma + beta;
      }
    }
  }
}

template <class T>
void group_norm_backward(const T* params, const GroupNormSpec& s, const T* in, std::size_t hw,
                         const std::vector<T>& stats, const T* dout, T* grad, T* din) {
  const int per_group = s.channels / s.groups;
  const std::size_t m = static_cast<std::size_t>(per_group) * hw;
  std::vector<T> dxhat(m);
  std::vector<T> xhat(m);
  for (int g = 0; g < s.groups; ++g) {
    const T mean = stats[2 * g];
    const T rstd = stats[2 * g + 1];
    const T* x = in + static_cast<std::size_t>(g) * m;
    const T* dy = dout + static_cast<std::size_t>(g) * m;
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (int cl = 0; cl < per_group; ++cl) {
      const int c = g * per_group + cl;
      const T gamma = params[s.gamma + c];
      T dgamma = 0;
      T dbeta = 0;
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t j = static_cast<std::size_t>(cl) * hw + i;
        xhat[j] = (x[j] - mean) * rstd;
        dgamma += dy[j] * xhat[j];
        dbeta += dy[j];
        dxhat[j] = dy[j] * gamma;
        sum_dxhat += dxhat[j];
        sum_dxhat_xhat += dxhat[j] * xhat[j];
      }
      grad[s.gamma + c] += dgamma;
      grad[s.beta + c] += dbeta;
    }
    const double inv_m = 1.0 / static_cast<double>(m);
    T* dx = din + static_cast<std::size_t>(g) * m;
    for (std::size_t j = 0; j < m; ++j) {
      dx[j] += static_cast<T>(rstd * (dxhat[j] - inv_m * sum_dxhat - xhat[j] * inv_m * sum_dxhat_xhat));
    }
  }
}

template <class T>
inline T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
void silu_forward(const T* in, std::size_t n, T* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = in[i] * sigmoid(in[i]);
}

/// din += dout * silu'(in)
template <class T>
void silu_backward(const T* in, const T* dout, std::size_t n, T* din) {
  for (std::size_t i = 0; i < n; ++i) {
    const T s = sigmoid(in[i]);
    din[i] += dout[i] * (s + in[i] * s * (T(1) - s));
  }
}

template <class T>
void upsample_nearest2x_forward(const T* in, int channels, int h, int w, T* out) {
  const int ow = 2 * w;
  for (int c = 0; c < channels; ++c) {
    const T* ip = in + static_cast<std::size_t>(c) * h * w;
    T* op = out + static_cast<std::size_t>(c) * 4 * h * w;
    for (int y = 0; y < 2 * h; ++y) {
      for (int x = 0; x < ow; ++x) op[y * ow + x] = ip[(y / 2) * w + x / 2];
    }
  }
}

template <class T>
void upsample_nearest2x_backward(const T* dout, int channels, int h, int w, T* din) {
  const int ow = 2 * w;
  for (int c = 0; c < channels; ++c) {
    const T* op = dout + static_cast<std::size_t>(c) * 4 * h * w;
    T* ip = din + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < 2 * h; ++y) {
      for (int x = 0; x < ow; ++x) ip[(y / 2) * w + x / 2] += op[y * ow + x];
    }
  }
}

}  // namespace feddiff::nn
