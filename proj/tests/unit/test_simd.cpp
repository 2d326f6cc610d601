#include <vector>

#include "doctest.h"
#include "feddiff/rng.hpp"
#include "feddiff/simd/kernels.hpp"
#include "helpers.hpp"

using namespace feddiff;

namespace {

std::vector<simd::Isa> vector_isas() {
  std::vector<simd::Isa> out;
  for (auto isa : {simd::Isa::kAvx2, simd::Isa::kNeon}) {
    if (simd::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

template <class T>
std::vector<T> randv(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal());
  return v;
}

// Lengths around every vector width, including empty and ragged tails.
const std::size_t kLengths[] = {0, 1, 3, 4, 7, 8, 9, 15, 16, 17, 31, 33, 64, 127, 1000};

}  // namespace

TEST_SUITE("simd") {

TEST_CASE("scalar table is always available and dispatch can be switched") {
  CHECK(simd::isa_available(simd::Isa::kScalar));
  const auto before = simd::active_isa();
  simd::set_active_isa(simd::Isa::kScalar);
  CHECK(simd::active_isa() == simd::Isa::kScalar);
  simd::set_active_isa(before);
  CHECK(simd::active_isa() == before);
  for (auto isa : {simd::Isa::kAvx2, simd::Isa::kNeon}) {
    if (!simd::isa_available(isa)) CHECK_THROWS_AS(simd::set_active_isa(isa), std::invalid_argument);
  }
}

TEST_CASE("vector kernels match the scalar reference") {
  const auto& ref = simd::kernel_table(simd::Isa::kScalar);
  const auto isas = vector_isas();
  if (isas.empty()) MESSAGE("no vector ISA on this machine; equivalence is vacuous");
  for (auto isa : isas) {
    const auto& vec = simd::kernel_table(isa);
    CAPTURE(simd::isa_name(isa));
    for (std::size_t n : kLengths) {
      CAPTURE(n);
      const auto xf = randv<float>(n, 1 + n);
      const auto yf = randv<float>(n, 2 + n);
      const auto xd = randv<double>(n, 3 + n);
      const auto yd = randv<double>(n, 4 + n);

      auto a = yf, b = yf;
      ref.axpy_f32(0.75f, xf.data(), a.data(), n);
      vec.axpy_f32(0.75f, xf.data(), b.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-6));

      auto ad = yd, bd = yd;
      ref.axpy_f64(-1.25, xd.data(), ad.data(), n);
      vec.axpy_f64(-1.25, xd.data(), bd.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(bd[i] == doctest::Approx(ad[i]).epsilon(1e-14));

      CHECK(vec.dot_f32(xf.data(), yf.data(), n) ==
            doctest::Approx(ref.dot_f32(xf.data(), yf.data(), n)).epsilon(1e-5));
      CHECK(vec.dot_f64(xd.data(), yd.data(), n) ==
            doctest::Approx(ref.dot_f64(xd.data(), yd.data(), n)).epsilon(1e-12));

      std::vector<double> o1(n), o2(n);
      ref.axpby_f64(0.3, xd.data(), 0.9, yd.data(), o1.data(), n);
      vec.axpby_f64(0.3, xd.data(), 0.9, yd.data(), o2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(o2[i] == doctest::Approx(o1[i]).epsilon(1e-14));

      auto acc1 = yd, acc2 = yd;
      ref.accumulate_scaled(0.2, xf.data(), acc1.data(), n);
      vec.accumulate_scaled(0.2, xf.data(), acc2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(acc2[i] == doctest::Approx(acc1[i]).epsilon(1e-14));

      const simd::AdamCoefficients c{2e-4f, 0.9f, 0.999f, 1e-8f, 1.0f - 0.9f * 0.9f,
                                     1.0f - 0.999f * 0.999f};
      auto p1 = xf, p2 = xf, m1 = yf, m2 = yf;
      std::vector<float> v1(n), v2(n);
      for (std::size_t i = 0; i < n; ++i) v1[i] = v2[i] = 0.01f * static_cast<float>(i % 7);
      ref.adam_update(p1.data(), yf.data(), m1.data(), v1.data(), n, c);
      vec.adam_update(p2.data(), yf.data(), m2.data(), v2.data(), n, c);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(p2[i] == doctest::Approx(p1[i]).epsilon(1e-6));
        CHECK(m2[i] == doctest::Approx(m1[i]).epsilon(1e-6));
        CHECK(v2[i] == doctest::Approx(v1[i]).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("dispatching entry points reject length mismatches") {
  std::vector<float> x(3), y(4);
  CHECK_THROWS_AS(simd::axpy(1.0f, x, y), std::invalid_argument);
  CHECK_THROWS_AS(simd::dot(std::span<const float>(x), std::span<const float>(y)),
                  std::invalid_argument);
}

}  // TEST_SUITE
