// Times the OpenMP kernels against the serial reference and checks that
// the parallel path reproduces the serial path bit for bit.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "idc/kernels.hpp"
#include "idc/rng.hpp"

using idc::kernels::Exec;

namespace {

double time_of(const std::function<void()>& fn, int iters) {
  fn();  // warm up
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < iters; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double>(t1 - t0).count() / iters;
}

std::vector<double> random_vec(int64_t n, uint64_t seed) {
  idc::Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

void bench_matmul(int64_t m, int64_t k, int64_t n) {
  const std::vector<double> a = random_vec(m * k, 1);
  const std::vector<double> b = random_vec(k * n, 2);
  std::vector<double> c_ref(size_t(m * n)), c_ser(size_t(m * n)),
      c_par(size_t(m * n));

  const double t_ref = time_of(
      [&] { idc::reference::matmul_nn(m, k, n, a.data(), b.data(), c_ref.data()); },
      5);
  const double t_ser = time_of(
      [&] {
        idc::kernels::matmul_nn(m, k, n, a.data(), b.data(), c_ser.data(),
                                false, Exec::Serial);
      },
      5);
  const double t_par = time_of(
      [&] {
        idc::kernels::matmul_nn(m, k, n, a.data(), b.data(), c_par.data(),
                                false, Exec::Parallel);
      },
      5);
  const double flops = 2.0 * m * k * n;
  std::printf(
      "matmul %4lldx%4lldx%4lld  ref %7.2f ms  serial %7.2f ms (%5.2f GF/s)  "
      "omp %7.2f ms (%5.2f GF/s)  speedup %.2fx  bit-equal %s\n",
      (long long)m, (long long)k, (long long)n, t_ref * 1e3, t_ser * 1e3,
      flops / t_ser / 1e9, t_par * 1e3, flops / t_par / 1e9, t_ser / t_par,
      bit_equal(c_ser, c_par) ? "yes" : "NO");
}

void bench_rows(const char* name, int64_t rows, int64_t n,
                void (*serial_fn)(int64_t, int64_t, const double*, double*,
                                  Exec),
                void (*ref_fn)(int64_t, int64_t, const double*, double*)) {
  const std::vector<double> x = random_vec(rows * n, 3);
  std::vector<double> y_ref(size_t(rows * n)), y_ser(size_t(rows * n)),
      y_par(size_t(rows * n));
  const double t_ref = time_of([&] { ref_fn(rows, n, x.data(), y_ref.data()); }, 20);
  const double t_ser = time_of(
      [&] { serial_fn(rows, n, x.data(), y_ser.data(), Exec::Serial); }, 20);
  const double t_par = time_of(
      [&] { serial_fn(rows, n, x.data(), y_par.data(), Exec::Parallel); }, 20);
  std::printf(
      "%-8s %5lldx%-5lld ref %7.3f ms  serial %7.3f ms  omp %7.3f ms  "
      "speedup %.2fx  bit-equal %s\n",
      name, (long long)rows, (long long)n, t_ref * 1e3, t_ser * 1e3,
      t_par * 1e3, t_ser / t_par, bit_equal(y_ser, y_par) ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  int threads = omp_get_max_threads();
  if (argc > 1) threads = std::atoi(argv[1]);
  idc::kernels::set_max_threads(threads);
  std::printf("threads: %d\n", threads);

  for (int64_t s : {64, 128, 256, 512}) bench_matmul(s, s, s);
  bench_matmul(64, 192, 64);
  bench_matmul(24, 64, 256);

  bench_rows("softmax", 4096, 64, idc::kernels::softmax_rows,
             idc::reference::softmax_rows);
  bench_rows("gelu", 4096, 64,
             [](int64_t rows, int64_t n, const double* x, double* y, Exec e) {
               idc::kernels::gelu(rows * n, x, y, e);
             },
             [](int64_t rows, int64_t n, const double* x, double* y) {
               idc::reference::gelu(rows * n, x, y);
             });
  return 0;
}
