#include "pk/kernels.hpp"

#include <cmath>

namespace pk::kernels::scalar {
namespace {

void batched_matvec(const double* k, const double* x, double* out, std::size_t d, std::size_t batch) {
  for (std::size_t b = 0; b < batch; ++b) {
    const double* kb = k + b * d * d;
    const double* xb = x + b * d;
    double* ob = out + b * d;
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += kb[i * d + j] * xb[j];
      ob[i] = acc;
    }
  }
}

void batched_matvec_backward(const double* k, const double* x, const double* g, double* gk, double* gx,
                             std::size_t d, std::size_t batch) {
  for (std::size_t b = 0; b < batch; ++b) {
    const double* kb = k + b * d * d;
    const double* xb = x + b * d;
    const double* gb = g + b * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double gi = gb[i];
      if (gk != nullptr) {
        double* row = gk + b * d * d + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += gi * xb[j];
      }
      if (gx != nullptr) {
        double* gxb = gx + b * d;
        for (std::size_t j = 0; j < d; ++j) gxb[j] += kb[i * d + j] * gi;
      }
    }
  }
}

void adam_update(double* params, double* m, double* v, const double* grad, std::size_t n, double lr, double beta1,
                 double beta2, double eps, double corr1, double corr2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    params[i] -= lr * (m[i] * corr1) / (std::sqrt(v[i] * corr2) + eps);
  }
}

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double diff = a[i] - b[i];
    acc += diff * diff;
  }
  return acc;
}

}  // namespace

const Table& table() {
  static const Table t{"scalar", batched_matvec, batched_matvec_backward, adam_update, dot, axpy, squared_distance};
  return t;
}

}  // namespace pk::kernels::scalar
