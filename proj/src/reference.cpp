#include <cmath>

#include "idc/kernels.hpp"

namespace idc::reference {

void matmul_nn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = s;
    }
}

void matmul_nt(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
      c[i * n + j] = s;
    }
}

void matmul_tn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c) {
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (int64_t mm = 0; mm < m; ++mm) s += a[mm * k + i] * b[mm * n + j];
      c[i * n + j] = s;
    }
}

void softmax_rows(int64_t rows, int64_t n, const double* x, double* y) {
  for (int64_t r = 0; r < rows; ++r) {
    double mx = x[r * n];
    for (int64_t j = 1; j < n; ++j) mx = std::fmax(mx, x[r * n + j]);
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      y[r * n + j] = std::exp(x[r * n + j] - mx);
      sum += y[r * n + j];
    }
    for (int64_t j = 0; j < n; ++j) y[r * n + j] /= sum;
  }
}

void layer_norm_rows(int64_t rows, int64_t n, const double* x,
                     const double* gain, const double* bias, double eps,
                     double* y) {
  for (int64_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += x[r * n + j];
    mu /= double(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double d = x[r * n + j] - mu;
      var += d * d;
    }
    var /= double(n);
    double rs = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < n; ++j)
      y[r * n + j] = gain[j] * ((x[r * n + j] - mu) * rs) + bias[j];
  }
}

void gelu(int64_t n, const double* x, double* y) {
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  for (int64_t i = 0; i < n; ++i) {
    double v = x[i];
    y[i] = 0.5 * v * (1.0 + std::tanh(c * (v + 0.044715 * v * v * v)));
  }
}

}  // namespace idc::reference
