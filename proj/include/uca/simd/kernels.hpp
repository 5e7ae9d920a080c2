#pragma once

// Dense double-precision inner loops with a scalar reference implementation
// and ISA-specific variants selected once at runtime.

#include <cstddef>
#include <string_view>
#include <vector>

namespace uca::simd {

struct KernelTable {
  std::string_view name;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*sq_diff_sum)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

/// Every variant usable on this machine, scalar first.
std::vector<const KernelTable*> available_kernels();

/// Selected on first use: honours UCA_SIMD=scalar|avx2|neon, otherwise the
/// widest supported variant.
const KernelTable& active() noexcept;

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline double sq_diff_sum(const double* a, const double* b, std::size_t n) {
  return active().sq_diff_sum(a, b, n);
}

/// C(m x n) += A(m x k) * B(k x n), row-major.
void gemm_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
/// C(m x k) += A(m x n) * B(k x n)^T, row-major.
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k);
/// C(k x n) += A(m x k)^T * B(m x n), row-major.
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

}  // namespace uca::simd
