#include "idc/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

namespace idc::kernels {

namespace {

int g_max_threads = 0;  // 0 = library default

// Work below this many flops is not worth a parallel region on 2-8 cores.
constexpr int64_t kParallelFlops = 64 * 1024;

bool go_parallel(Exec exec, int64_t flops) {
  if (exec == Exec::Serial) return false;
  if (exec == Exec::Parallel) return true;
  return flops >= kParallelFlops && omp_get_max_threads() > 1;
}

}  // namespace

void set_max_threads(int n) {
  g_max_threads = n;
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() {
  return g_max_threads > 0 ? g_max_threads : omp_get_max_threads();
}

void matmul_nn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c, bool accumulate, Exec exec) {
  const bool par = go_parallel(exec, 2 * m * k * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    const double* ai = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

void matmul_nt(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c, bool accumulate, Exec exec) {
  const bool par = go_parallel(exec, 2 * m * k * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      ci[j] = accumulate ? ci[j] + s : s;
    }
  }
}

void matmul_tn(int64_t m, int64_t k, int64_t n, const double* a,
               const double* b, double* c, bool accumulate, Exec exec) {
  const bool par = go_parallel(exec, 2 * m * k * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < k; ++i) {
    double* ci = c + i * n;
    if (!accumulate)
      for (int64_t j = 0; j < n; ++j) ci[j] = 0.0;
    for (int64_t mm = 0; mm < m; ++mm) {
      const double av = a[mm * k + i];
      const double* bm = b + mm * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bm[j];
    }
  }
}

void softmax_rows(int64_t rows, int64_t n, const double* x, double* y,
                  Exec exec) {
  const bool par = go_parallel(exec, 8 * rows * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x + r * n;
    double* yi = y + r * n;
    double mx = xi[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < n; ++j) yi[j] *= inv;
  }
}

void softmax_rows_bwd(int64_t rows, int64_t n, const double* y,
                      const double* dy, double* dx, Exec exec) {
  const bool par = go_parallel(exec, 8 * rows * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* yi = y + r * n;
    const double* di = dy + r * n;
    double* oi = dx + r * n;
    double dot = 0.0;
    for (int64_t j = 0; j < n; ++j) dot += yi[j] * di[j];
    for (int64_t j = 0; j < n; ++j) oi[j] += yi[j] * (di[j] - dot);
  }
}

void layer_norm_rows(int64_t rows, int64_t n, const double* x,
                     const double* gain, const double* bias, double eps,
                     double* y, double* mean, double* rstd, Exec exec) {
  const bool par = go_parallel(exec, 8 * rows * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x + r * n;
    double* yi = y + r * n;
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += xi[j];
    mu /= double(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double d = xi[j] - mu;
      var += d * d;
    }
    var /= double(n);
    const double rs = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    rstd[r] = rs;
    for (int64_t j = 0; j < n; ++j)
      yi[j] = gain[j] * ((xi[j] - mu) * rs) + bias[j];
  }
}

void layer_norm_rows_bwd(int64_t rows, int64_t n, const double* x,
                         const double* gain, const double* mean,
                         const double* rstd, const double* dy, double* dx,
                         double* dgain, double* dbias, Exec exec) {
  // dgain/dbias reduce over rows; keep that loop serial so the order is
  // row-ascending no matter the thread count.
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x + r * n;
    const double* di = dy + r * n;
    for (int64_t j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mean[r]) * rstd[r];
      dgain[j] += di[j] * xhat;
      dbias[j] += di[j];
    }
  }
  const bool par = go_parallel(exec, 16 * rows * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = x + r * n;
    const double* di = dy + r * n;
    double* oi = dx + r * n;
    double sum_g = 0.0, sum_gx = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mean[r]) * rstd[r];
      const double g = di[j] * gain[j];
      sum_g += g;
      sum_gx += g * xhat;
    }
    const double inv_n = 1.0 / double(n);
    for (int64_t j = 0; j < n; ++j) {
      const double xhat = (xi[j] - mean[r]) * rstd[r];
      const double g = di[j] * gain[j];
      oi[j] += rstd[r] * (g - inv_n * sum_g - inv_n * xhat * sum_gx);
    }
  }
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

void gelu(int64_t n, const double* x, double* y, Exec exec) {
  const bool par = go_parallel(exec, 16 * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double u = kGeluC * (v + kGeluA * v * v * v);
    y[i] = 0.5 * v * (1.0 + std::tanh(u));
  }
}

void gelu_bwd(int64_t n, const double* x, const double* dy, double* dx,
              Exec exec) {
  const bool par = go_parallel(exec, 32 * n);
#pragma omp parallel for if (par) schedule(static)
  for (int64_t i = 0; i < n; ++i) {
    const double v = x[i];
    const double u = kGeluC * (v + kGeluA * v * v * v);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
    dx[i] += dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
  }
}

}  // namespace idc::kernels
