#pragma once

#include <cstdint>
#include <vector>

namespace attrcloak::kern {

// Flat-array compute kernels behind everything tensor- and tape-level.
// One table per instruction set; dispatch picks a table once per process.
//
// Equivalence contract between tables, enforced by tests:
//  - single-rounding elementwise ops (add..clamp, relu/maxc and their
//    backwards): bitwise identical to scalar,
//  - reductions and gemm (dot, sum, gemm_*): within small relative tolerance;
//    SIMD variants may reorder sums and use fma.
struct Kernels {
  const char* name;

  // out[i] = a[i] op b[i]
  void (*add)(const double* a, const double* b, double* out, int64_t n);
  void (*sub)(const double* a, const double* b, double* out, int64_t n);
  void (*mul)(const double* a, const double* b, double* out, int64_t n);
  // out[i] = s * a[i]
  void (*scale)(const double* a, double s, double* out, int64_t n);
  // y[i] += s * x[i]
  void (*axpy)(double s, const double* x, double* y, int64_t n);
  // acc[i] += a[i] * b[i]
  void (*madd)(const double* a, const double* b, double* acc, int64_t n);

  double (*dot)(const double* a, const double* b, int64_t n);
  double (*sum)(const double* a, int64_t n);

  // out[i] = max(a[i], 0)
  void (*relu)(const double* a, double* out, int64_t n);
  // acc[i] += g[i] * [a[i] > 0]
  void (*relu_bwd)(const double* a, const double* g, double* acc, int64_t n);
  // out[i] = max(a[i], c)
  void (*maxc)(const double* a, double c, double* out, int64_t n);
  // acc[i] += g[i] * [a[i] > c]
  void (*maxc_bwd)(const double* a, double c, const double* g, double* acc, int64_t n);
  // out[i] = min(max(a[i], lo), hi)
  void (*clamp)(const double* a, double lo, double hi, double* out, int64_t n);

  // All gemm accumulate into C (m x n, row-major).
  // C += A(m x k) * B(k x n)
  void (*gemm_nn)(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
  // C += A(m x k) * B(n x k)^T
  void (*gemm_nt)(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
  // C += A(k x m)^T * B(k x n)
  void (*gemm_tn)(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n);
};

const Kernels& scalar_kernels();

#if defined(__x86_64__) || defined(_M_X64)
bool avx2_supported();
const Kernels& avx2_kernels();
#endif
#if defined(__aarch64__)
const Kernels& neon_kernels();
#endif

// Active table. Chosen on first use: ATTRCLOAK_KERNELS env var in
// {auto, scalar, avx2, neon}; "auto" (or unset) picks the best supported.
// Unknown value or an unsupported explicit choice raises ConfigError.
const Kernels& active();

// Every table usable on this machine, scalar first. For equivalence tests.
std::vector<const Kernels*> available();

}  // namespace attrcloak::kern
