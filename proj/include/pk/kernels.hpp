#pragma once
// Dense inner-loop kernels with a scalar reference and an AVX2 variant.
//
// Every kernel exists twice: `pk::kernels::scalar::*` is the portable
// reference, `pk::kernels::avx2::*` uses 256-bit intrinsics. The free
// functions in `pk::kernels` forward to whichever table `active()` returns;
// the table is picked once per process from CPUID and can be pinned with the
// PK_KERNELS environment variable ("scalar" or "avx2").
//
// Batched layouts are column-major over the batch: sample b of a batch of
// square d x d matrices occupies k[b*d*d .. (b+1)*d*d) in row-major order, and
// sample b of a batch of d-vectors occupies x[b*d .. (b+1)*d).

#include <cstddef>
#include <string_view>

namespace pk::kernels {

struct Table {
  std::string_view name;

  /// out_b = K_b x_b for every sample b.
  void (*batched_matvec)(const double* k, const double* x, double* out, std::size_t d, std::size_t batch);

  /// Reverse of batched_matvec: gk_b += g_b x_b^T, gx_b += K_b^T g_b.
  void (*batched_matvec_backward)(const double* k, const double* x, const double* g, double* gk, double* gx,
                                  std::size_t d, std::size_t batch);

  /// One Adam update in place; `corr1`, `corr2` are 1/(1-beta^t) bias corrections.
  void (*adam_update)(double* params, double* m, double* v, const double* grad, std::size_t n, double lr,
                      double beta1, double beta2, double eps, double corr1, double corr2);

  double (*dot)(const double* a, const double* b, std::size_t n);

  /// y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  /// sum_i (a_i - b_i)^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
};

namespace scalar {
const Table& table();
}

namespace avx2 {
/// False when the host lacks AVX2/FMA; the table must not be used then.
bool supported();
const Table& table();
}  // namespace avx2

const Table& active();

inline void batched_matvec(const double* k, const double* x, double* out, std::size_t d, std::size_t batch) {
  active().batched_matvec(k, x, out, d, batch);
}

inline void batched_matvec_backward(const double* k, const double* x, const double* g, double* gk, double* gx,
                                    std::size_t d, std::size_t batch) {
  active().batched_matvec_backward(k, x, g, gk, gx, d, batch);
}

inline void adam_update(double* params, double* m, double* v, const double* grad, std::size_t n, double lr,
                        double beta1, double beta2, double eps, double corr1, double corr2) {
  active().adam_update(params, m, v, grad, n, lr, beta1, beta2, eps, corr1, corr2);
}

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }

inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }

inline double squared_distance(const double* a, const double* b, std::size_t n) {
  return active().squared_distance(a, b, n);
}

}  // namespace pk::kernels
