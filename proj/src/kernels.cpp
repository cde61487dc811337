#include "aoa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace aoa::kernels {

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// Per-row bodies shared by both variants so they reduce in the same order.

inline void nn_row(const double* a, const double* b, double* c, double* acc, std::size_t k,
                   std::size_t n, bool accumulate) {
  std::fill(acc, acc + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
  }
  if (accumulate) {
    for (std::size_t j = 0; j < n; ++j) c[j] += acc[j];
  } else {
    std::copy(acc, acc + n, c);
  }
}

inline void nt_row(const double* a, const double* b, double* c, std::size_t k, std::size_t n,
                   bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s = 0.0;
    for (std::size_t p = 0; p < k; ++p) s += a[p] * brow[p];
    c[j] = accumulate ? c[j] + s : s;
  }
}

// Row i of a^T b where a is (k x m).
inline void tn_row(const double* a, const double* b, double* c, double* acc, std::size_t i,
                   std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  std::fill(acc, acc + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
  }
  if (accumulate) {
    for (std::size_t j = 0; j < n; ++j) c[j] += acc[j];
  } else {
    std::copy(acc, acc + n, c);
  }
}

inline void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  for (std::size_t j = 0; j < n; ++j) y[j] /= sum;
}

inline void log_softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) sum += std::exp(x[j] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - lse;
}

inline void layer_norm_row(const double* x, double* xhat, double* inv_std, std::size_t n,
                           double eps) {
  double mean = 0.0;
  for (std::size_t j = 0; j < n; ++j) mean += x[j];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(n);
  const double is = 1.0 / std::sqrt(var + eps);
  *inv_std = is;
  for (std::size_t j = 0; j < n; ++j) xhat[j] = (x[j] - mean) * is;
}

}  // namespace

namespace serial {

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i)
    nn_row(a.data() + i * k, b.data(), c.data() + i * n, acc.data(), k, n, accumulate);
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    nt_row(a.data() + i * k, b.data(), c.data() + i * n, k, n, accumulate);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i)
    tn_row(a.data(), b.data(), c.data() + i * n, acc.data(), i, m, k, n, accumulate);
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) softmax_row(x.data() + i * n, y.data() + i * n, n);
}

void log_softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m,
                      std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) log_softmax_row(x.data() + i * n, y.data() + i * n, n);
}

void layer_norm_rows(std::span<const double> x, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t m, std::size_t n, double eps) {
  for (std::size_t i = 0; i < m; ++i)
    layer_norm_row(x.data() + i * n, xhat.data() + i * n, inv_std.data() + i, n, eps);
}

}  // namespace serial

namespace parallel {

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const bool big = m * k * n >= kParallelWorkThreshold && m > 1;
#pragma omp parallel if (big)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < m; ++i)
      nn_row(a.data() + i * k, b.data(), c.data() + i * n, acc.data(), k, n, accumulate);
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const bool big = m * k * n >= kParallelWorkThreshold && m > 1;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < m; ++i)
    nt_row(a.data() + i * k, b.data(), c.data() + i * n, k, n, accumulate);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const bool big = m * k * n >= kParallelWorkThreshold && m > 1;
#pragma omp parallel if (big)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (std::size_t i = 0; i < m; ++i)
      tn_row(a.data(), b.data(), c.data() + i * n, acc.data(), i, m, k, n, accumulate);
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n) {
  const bool big = m * n >= kParallelWorkThreshold && m > 1;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < m; ++i) softmax_row(x.data() + i * n, y.data() + i * n, n);
}

void log_softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m,
                      std::size_t n) {
  const bool big = m * n >= kParallelWorkThreshold && m > 1;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < m; ++i) log_softmax_row(x.data() + i * n, y.data() + i * n, n);
}

void layer_norm_rows(std::span<const double> x, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t m, std::size_t n, double eps) {
  const bool big = m * n >= kParallelWorkThreshold && m > 1;
#pragma omp parallel for schedule(static) if (big)
  for (std::size_t i = 0; i < m; ++i)
    layer_norm_row(x.data() + i * n, xhat.data() + i * n, inv_std.data() + i, n, eps);
}

}  // namespace parallel

}  // namespace aoa::kernels
