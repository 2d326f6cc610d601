#include <cstdlib>
#include <stdexcept>
#include <string>

#include "feddiff/simd/kernels.hpp"

namespace feddiff::simd {
namespace {

bool cpu_has_avx2() {
#if defined(FEDDIFF_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("FEDDIFF_ISA")) {
    const std::string value(env);
    if (value == "scalar") return Isa::kScalar;
  }
  return detected_isa();
}

const KernelTable* g_table = nullptr;
Isa g_isa = Isa::kScalar;

const KernelTable& table() {
  if (g_table == nullptr) {
    g_isa = initial_isa();
    g_table = &kernel_table(g_isa);
  }
  return *g_table;
}

void check_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
    case Isa::kNeon:
      return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return cpu_has_avx2();
    case Isa::kNeon:
#if defined(FEDDIFF_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detected_isa() {
  if (isa_available(Isa::kAvx2)) return Isa::kAvx2;
  if (isa_available(Isa::kNeon)) return Isa::kNeon;
  return Isa::kScalar;
}

Isa active_isa() {
  table();
  return g_isa;
}

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw std::invalid_argument("ISA not available: " + std::string(isa_name(isa)));
  }
  g_isa = isa;
  g_table = &kernel_table(isa);
}

const KernelTable& kernel_table(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return detail::kScalarTable;
    case Isa::kAvx2:
#if defined(FEDDIFF_HAVE_AVX2)
      return detail::kAvx2Table;
#else
      break;
#endif
    case Isa::kNeon:
#if defined(FEDDIFF_HAVE_NEON)
      return detail::kNeonTable;
#else
      break;
#endif
  }
  throw std::invalid_argument("no kernels built for ISA " + std::string(isa_name(isa)));
}

void axpy(float a, std::span<const float> x, std::span<float> y) {
  check_same_length(x.size(), y.size(), "axpy");
  table().axpy_f32(a, x.data(), y.data(), x.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  check_same_length(x.size(), y.size(), "axpy");
  table().axpy_f64(a, x.data(), y.data(), x.size());
}

float dot(std::span<const float> x, std::span<const float> y) {
  check_same_length(x.size(), y.size(), "dot");
  return table().dot_f32(x.data(), y.data(), x.size());
}

double dot(std::span<const double> x, std::span<const double> y) {
  check_same_length(x.size(), y.size(), "dot");
  return table().dot_f64(x.data(), y.data(), x.size());
}

void axpby(double a, std::span<const double> x, double b, std::span<const double> y,
           std::span<double> out) {
  check_same_length(x.size(), y.size(), "axpby");
  check_same_length(x.size(), out.size(), "axpby");
  table().axpby_f64(a, x.data(), b, y.data(), out.data(), x.size());
}

void accumulate_scaled(double w, std::span<const float> x, std::span<double> acc) {
  check_same_length(x.size(), acc.size(), "accumulate_scaled");
  table().accumulate_scaled(w, x.data(), acc.data(), x.size());
}

void adam_update(std::span<float> params, std::span<const float> grad, std::span<float> m,
                 std::span<float> v, const AdamCoefficients& c) {
  check_same_length(params.size(), grad.size(), "adam_update");
  check_same_length(params.size(), m.size(), "adam_update");
  check_same_length(params.size(), v.size(), "adam_update");
  table().adam_update(params.data(), grad.data(), m.data(), v.data(), params.size(), c);
}

}  // namespace feddiff::simd
