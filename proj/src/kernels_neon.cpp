// NEON kernel table for aarch64. Mirrors the AVX2 layout: elementwise ops
// bitwise-match scalar (separate mul+add), reductions use lane accumulators.

#if defined(__aarch64__)

#include <arm_neon.h>

#include "attrcloak/kernels.hpp"

namespace attrcloak::kern {
namespace {

void v_add(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void v_sub(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}
void v_mul(const double* a, const double* b, double* out, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void v_scale(const double* a, double s, double* out, int64_t n) {
  float64x2_t vs = vdupq_n_f64(s);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vs, vld1q_f64(a + i)));
  for (; i < n; ++i) out[i] = s * a[i];
}
void v_axpy(double s, const double* x, double* y, int64_t n) {
  float64x2_t vs = vdupq_n_f64(s);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t prod = vmulq_f64(vs, vld1q_f64(x + i));
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + s * x[i];
}
void v_madd(const double* a, const double* b, double* acc, int64_t n) {
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t prod = vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i));
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), prod));
  }
  for (; i < n; ++i) acc[i] = acc[i] + a[i] * b[i];
}
double v_dot(const double* a, const double* b, int64_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return vaddvq_f64(acc) + tail;
}
double v_sum(const double* a, int64_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i];
  return vaddvq_f64(acc) + tail;
}
void v_relu(const double* a, double* out, int64_t n) {
  float64x2_t zero = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t v = vld1q_f64(a + i);
    uint64x2_t m = vcgtq_f64(v, zero);
    vst1q_f64(out + i, vbslq_f64(m, v, zero));
  }
  for (; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}
void v_relu_bwd(const double* a, const double* g, double* acc, int64_t n) {
  float64x2_t zero = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    uint64x2_t m = vcgtq_f64(vld1q_f64(a + i), zero);
    float64x2_t gated = vbslq_f64(m, vld1q_f64(g + i), zero);
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), gated));
  }
  for (; i < n; ++i) acc[i] += a[i] > 0.0 ? g[i] : 0.0;
}
void v_maxc(const double* a, double c, double* out, int64_t n) {
  float64x2_t vc = vdupq_n_f64(c);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t v = vld1q_f64(a + i);
    uint64x2_t m = vcgtq_f64(v, vc);
    vst1q_f64(out + i, vbslq_f64(m, v, vc));
  }
  for (; i < n; ++i) out[i] = a[i] > c ? a[i] : c;
}
void v_maxc_bwd(const double* a, double c, const double* g, double* acc, int64_t n) {
  float64x2_t vc = vdupq_n_f64(c);
  float64x2_t zero = vdupq_n_f64(0.0);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    uint64x2_t m = vcgtq_f64(vld1q_f64(a + i), vc);
    float64x2_t gated = vbslq_f64(m, vld1q_f64(g + i), zero);
    vst1q_f64(acc + i, vaddq_f64(vld1q_f64(acc + i), gated));
  }
  for (; i < n; ++i) acc[i] += a[i] > c ? g[i] : 0.0;
}
void v_clamp(const double* a, double lo, double hi, double* out, int64_t n) {
  float64x2_t vlo = vdupq_n_f64(lo);
  float64x2_t vhi = vdupq_n_f64(hi);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t v = vld1q_f64(a + i);
    uint64x2_t m1 = vcgtq_f64(v, vlo);
    float64x2_t t = vbslq_f64(m1, v, vlo);
    uint64x2_t m2 = vcltq_f64(t, vhi);
    vst1q_f64(out + i, vbslq_f64(m2, t, vhi));
  }
  for (; i < n; ++i) {
    double t = a[i] > lo ? a[i] : lo;
    out[i] = t < hi ? t : hi;
  }
}

void axpy_fma(double s, const double* x, double* y, int64_t n) {
  float64x2_t vs = vdupq_n_f64(s);
  int64_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), vs, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += s * x[i];
}
void v_gemm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (int64_t p = 0; p < k; ++p) axpy_fma(arow[p], B + p * n, crow, n);
  }
}
void v_gemm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = A + i * k;
    double* crow = C + i * n;
    for (int64_t j = 0; j < n; ++j) crow[j] += v_dot(arow, B + j * k, k);
  }
}
void v_gemm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = A + p * m;
    const double* brow = B + p * n;
    for (int64_t i = 0; i < m; ++i) axpy_fma(arow[i], brow, C + i * n, n);
  }
}

const Kernels table = {
    "neon",   v_add,      v_sub,  v_mul,      v_scale, v_axpy,     v_madd,
    v_dot,    v_sum,      v_relu, v_relu_bwd, v_maxc,  v_maxc_bwd, v_clamp,
    v_gemm_nn, v_gemm_nt, v_gemm_tn,
};

}  // namespace

const Kernels& neon_kernels() { return table; }

}  // namespace attrcloak::kern

#endif  // aarch64
