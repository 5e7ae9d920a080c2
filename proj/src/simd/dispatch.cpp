#include <cstdlib>
#include <string_view>

#include <spdlog/spdlog.h>

#include "uca/simd/kernels.hpp"

namespace uca::simd {
namespace {

const KernelTable& select() {
  const char* env = std::getenv("UCA_SIMD");
  const std::string_view want = env ? env : "auto";
  if (want == "scalar") return scalar_kernels();
  if (want == "avx2" && avx2_kernels()) return *avx2_kernels();
  if (want == "neon" && neon_kernels()) return *neon_kernels();
  if (want != "auto")
    spdlog::warn("UCA_SIMD={} is not available here, falling back to auto", want);
  if (const auto* k = avx2_kernels()) return *k;
  if (const auto* k = neon_kernels()) return *k;
  return scalar_kernels();
}

}  // namespace

std::vector<const KernelTable*> available_kernels() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const auto* k = avx2_kernels()) out.push_back(k);
  if (const auto* k = neon_kernels()) out.push_back(k);
  return out;
}

const KernelTable& active() noexcept {
  static const KernelTable& table = select();
  return table;
}

void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto& kt = active();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      if (ai[p] != 0.0) kt.axpy(ai[p], b + p * n, ci, n);
    }
  }
}

void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
  const auto& kt = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) ci[p] += kt.dot(ai, b + p * n, n);
  }
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  const auto& kt = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      if (ai[p] != 0.0) kt.axpy(ai[p], bi, c + p * n, n);
    }
  }
}

}  // namespace uca::simd
