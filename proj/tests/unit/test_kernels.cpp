#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "uca/simd/kernels.hpp"

using namespace uca;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

}  // namespace

TEST_CASE("scalar kernels compute the textbook formulas") {
  const auto& k = simd::scalar_kernels();
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  CHECK(k.dot(a.data(), b.data(), 3) == 12.0);
  CHECK(k.sq_diff_sum(a.data(), b.data(), 3) == 9.0 + 49.0 + 9.0);
  std::vector<double> y{1, 1, 1};
  k.axpy(2.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3, 5, 7});
  CHECK(k.dot(a.data(), b.data(), 0) == 0.0);
}

TEST_CASE("every available SIMD variant matches the scalar reference") {
  const auto& ref = simd::scalar_kernels();
  const auto variants = simd::available_kernels();
  REQUIRE(!variants.empty());
  CHECK(variants.front()->name == ref.name);
  for (const auto* k : variants) {
    CAPTURE(k->name);
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 63u, 64u, 65u, 1000u}) {
      CAPTURE(n);
      const auto a = random_vec(n, 11 + n), b = random_vec(n, 97 + n);
      const double d_ref = ref.dot(a.data(), b.data(), n), d = k->dot(a.data(), b.data(), n);
      CHECK(std::abs(d - d_ref) <= 1e-12 * (1.0 + std::abs(d_ref)));
      const double s_ref = ref.sq_diff_sum(a.data(), b.data(), n), s = k->sq_diff_sum(a.data(), b.data(), n);
      CHECK(std::abs(s - s_ref) <= 1e-12 * (1.0 + s_ref));
      auto y_ref = b, y = b;
      ref.axpy(-0.37, a.data(), y_ref.data(), n);
      k->axpy(-0.37, a.data(), y.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y[i] - y_ref[i]) <= 1e-15 * (1.0 + std::abs(y_ref[i])));
    }
  }
}

TEST_CASE("active kernel table is one of the available ones") {
  const auto& act = simd::active();
  bool found = false;
  for (const auto* k : simd::available_kernels()) found = found || k->name == act.name;
  CHECK(found);
}

TEST_CASE("gemm helpers agree with naive loops") {
  const std::size_t m = 5, k = 7, n = 9;
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n, 0.5), naive(m * n, 0.5);
  simd::gemm_acc(a.data(), b.data(), c.data(), m, k, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) naive[i * n + j] += a[i * k + p] * b[p * n + j];
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(naive[i]).epsilon(1e-12));

  // C(m x k) += A(m x n) B(k x n)^T
  const auto a2 = random_vec(m * n, 3), b2 = random_vec(k * n, 4);
  std::vector<double> c2(m * k, 0.0), n2(m * k, 0.0);
  simd::gemm_nt_acc(a2.data(), b2.data(), c2.data(), m, n, k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t p = 0; p < n; ++p) n2[i * k + j] += a2[i * n + p] * b2[j * n + p];
  for (std::size_t i = 0; i < c2.size(); ++i) CHECK(c2[i] == doctest::Approx(n2[i]).epsilon(1e-12));

  // C(k x n) += A(m x k)^T B(m x n)
  const auto a3 = random_vec(m * k, 5), b3 = random_vec(m * n, 6);
  std::vector<double> c3(k * n, 0.0), n3(k * n, 0.0);
  simd::gemm_tn_acc(a3.data(), b3.data(), c3.data(), m, k, n);
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < n; ++j) n3[i * n + j] += a3[p * k + i] * b3[p * n + j];
  for (std::size_t i = 0; i < c3.size(); ++i) CHECK(c3[i] == doctest::Approx(n3[i]).epsilon(1e-12));
}
