#include "pk/kernels.hpp"

#include <cmath>

#if defined(__x86_64__) || defined(_M_X64)
#define PK_HAVE_X86 1
#include <immintrin.h>
#else
#define PK_HAVE_X86 0
#endif

namespace pk::kernels::avx2 {

#if PK_HAVE_X86

#define PK_AVX2 __attribute__((target("avx2,fma")))

namespace {

PK_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

PK_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

PK_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

PK_AVX2 double squared_distance(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(diff, diff, acc);
  }
  double out = hsum(acc);
  for (; i < n; ++i) {
    const double diff = a[i] - b[i];
    out += diff * diff;
  }
  return out;
}

PK_AVX2 void batched_matvec(const double* k, const double* x, double* out, std::size_t d, std::size_t batch) {
  for (std::size_t b = 0; b < batch; ++b) {
    const double* kb = k + b * d * d;
    const double* xb = x + b * d;
    double* ob = out + b * d;
    for (std::size_t i = 0; i < d; ++i) ob[i] = dot(kb + i * d, xb, d);
  }
}

PK_AVX2 void batched_matvec_backward(const double* k, const double* x, const double* g, double* gk, double* gx,
                                     std::size_t d, std::size_t batch) {
  for (std::size_t b = 0; b < batch; ++b) {
    const double* kb = k + b * d * d;
    const double* xb = x + b * d;
    const double* gb = g + b * d;
    for (std::size_t i = 0; i < d; ++i) {
      if (gk != nullptr) axpy(gb[i], xb, gk + b * d * d + i * d, d);
      if (gx != nullptr) axpy(gb[i], kb + i * d, gx + b * d, d);
    }
  }
}

PK_AVX2 void adam_update(double* params, double* m, double* v, const double* grad, std::size_t n, double lr,
                         double beta1, double beta2, double eps, double corr1, double corr2) {
  const __m256d b1 = _mm256_set1_pd(beta1);
  const __m256d b1c = _mm256_set1_pd(1.0 - beta1);
  const __m256d b2 = _mm256_set1_pd(beta2);
  const __m256d b2c = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d ve = _mm256_set1_pd(eps);
  const __m256d c1 = _mm256_set1_pd(corr1);
  const __m256d c2 = _mm256_set1_pd(corr2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d g = _mm256_loadu_pd(grad + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(b1c, g));
    const __m256d vi =
        _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)), _mm256_mul_pd(b2c, _mm256_mul_pd(g, g)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, _mm256_mul_pd(mi, c1)),
                                       _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vi, c2)), ve));
    _mm256_storeu_pd(params + i, _mm256_sub_pd(_mm256_loadu_pd(params + i), step));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= lr * (m[i] * corr1) / (std::sqrt(v[i] * corr2) + eps);
  }
}

}  // namespace

bool supported() {
  static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  return ok;
}

const Table& table() {
  static const Table t{"avx2", batched_matvec, batched_matvec_backward, adam_update, dot, axpy, squared_distance};
  return t;
}

#else

bool supported() { return false; }

const Table& table() { return scalar::table(); }

#endif

}  // namespace pk::kernels::avx2
