#pragma once

#include <cstdint>

namespace idc::kernels {

// Execution policy for the OpenMP kernels. Auto parallelizes when the
// work is large enough to pay for the fork.
enum class Exec { Auto, Serial, Parallel };

void set_max_threads(int n);
int max_threads();

// Accumulation order contract: every output element is produced by one
// serial sum over its reduction index in ascending order, regardless of
// Exec and thread count. Parallelism is only ever across independent
// output elements, so results are bit-reproducible.

// c[m,n] = a[m,k] * b[k,n], or += when accumulate.
void matmul_nn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c, bool accumulate = false,
               Exec exec = Exec::Auto);

// c[m,n] = a[m,k] * b[n,k]^T
void matmul_nt(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c, bool accumulate = false,
               Exec exec = Exec::Auto);

// c[k,n] = a[m,k]^T * b[m,n]
void matmul_tn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c, bool accumulate = false,
               Exec exec = Exec::Auto);

// Row-wise softmax with max subtraction.
void softmax_rows(int64_t rows, int64_t n, const double* x, double* y,
                  Exec exec = Exec::Auto);

// dx[m,n] += softmax backward given y = softmax(x) and dy.
void softmax_rows_bwd(int64_t rows, int64_t n, const double* y,
                      const double* dy, double* dx, Exec exec = Exec::Auto);

// y = gain * (x - mean) / sqrt(var + eps) + bias per row; mean/rstd are
// written per row for the backward pass.
void layer_norm_rows(int64_t rows, int64_t n, const double* x,
                     const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd,
                     Exec exec = Exec::Auto);

void layer_norm_rows_bwd(int64_t rows, int64_t n, const double* x,
                         const double* gain, const double* mean,
                         const double* rstd, const double* dy, double* dx,
                         double* dgain, double* dbias,
                         Exec exec = Exec::Auto);

// tanh-approximation GELU, elementwise.
void gelu(int64_t n, const double* x, double* y, Exec exec = Exec::Auto);
void gelu_bwd(int64_t n, const double* x, const double* dy, double* dx,
              Exec exec = Exec::Auto);

}  // namespace idc::kernels

namespace idc::reference {

// Textbook serial implementations kept as oracles for the OpenMP kernels
// and as the baseline for the benchmark target.
void matmul_nn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c);
void matmul_nt(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c);
void matmul_tn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c);
void softmax_rows(int64_t rows, int64_t n, const double* x, double* y);
void layer_norm_rows(int64_t rows, int64_t n, const double* x,
                     const double* gain, const double* bias, double eps,
                     double* y);
void gelu(int64_t n, const double* x, double* y);

}  // namespace idc::reference
