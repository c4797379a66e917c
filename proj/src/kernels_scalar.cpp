// Reference kernels. Compiled with contraction off; plain sequential loops so
// every other table has a fixed answer to match.

#include "attrcloak/kernels.hpp"

namespace attrcloak::kern {
namespace {

void s_add(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void s_sub(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void s_mul(const double* a, const double* b, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void s_scale(const double* a, double s, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = s * a[i];
}
void s_axpy(double s, const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = y[i] + s * x[i];
}
void s_madd(const double* a, const double* b, double* acc, int64_t n) {
  for (int64_t i = 0; i < n; ++i) acc[i] = acc[i] + a[i] * b[i];
}
double s_dot(const double* a, const double* b, int64_t n) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
double s_sum(const double* a, int64_t n) {
  double acc = 0.0;
  for (int64_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}
void s_relu(const double* a, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void s_relu_bwd(const double* a, const double* g, double* acc, int64_t n) {
  for (int64_t i = 0; i < n; ++i) acc[i] += a[i] > 0.0 ? g[i] : 0.0;
}
void s_maxc(const double* a, double c, double* out, int64_t n) {
  for (int64_t i = 0; i < n; ++i) out[i] = a[i] > c ? a[i] : c;
}
void s_maxc_bwd(const double* a, double c, const double* g, double* acc, int64_t n) {
  for (int64_t i = 0; i < n; ++i) acc[i] += a[i] > c ? g[i] : 0.0;
}
void s_clamp(const double* a, double lo, double hi, double* out, int64_t n) {
  // Written as max-then-min so SIMD tables match bitwise even at signed zeros.
  for (int64_t i = 0; i < n; ++i) {
    double t = a[i] > lo ? a[i] : lo;
    out[i] = t < hi ? t : hi;
  }
}

void s_gemm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (int64_t p = 0; p < k; ++p) s_axpy(arow[p], B + p * n, crow, n);
  }
}
void s_gemm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += s_dot(arow, B + j * k, k);
  }
}
void s_gemm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  // A is k x m; walk the shared dimension outermost to keep rows streaming.
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = A + p * m;
    const double* brow = B + p * n;
    for (int64_t i = 0; i < m; ++i) s_axpy(arow[i], brow, C + i * n, n);
  }
}

const Kernels table = {
    "scalar", s_add,      s_sub,  s_mul,      s_scale, s_axpy,     s_madd,
    s_dot,    s_sum,      s_relu, s_relu_bwd, s_maxc,  s_maxc_bwd, s_clamp,
    s_gemm_nn, s_gemm_nt, s_gemm_tn,
};

}  // namespace

const Kernels& scalar_kernels() { return table; }

}  // namespace attrcloak::kern
