#pragma once

#include <cstddef>
#include <span>

// Raw row-major float64 kernels. Every kernel has a serial reference and an
// OpenMP version; the two produce bit-identical results because each output
// element is reduced by a single thread in the same order.
namespace aoa::kernels {

void set_num_threads(int n);
int num_threads();

// Below this many multiply-adds the parallel kernels run on one thread.
inline constexpr std::size_t kParallelWorkThreshold = 1 << 15;

// c (m x n)  = a (m x k) * b (k x n), or += when accumulate is set.
// nt: b is stored (n x k) and used transposed. tn: a is stored (k x m).
namespace serial {
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);
void log_softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m,
                      std::size_t n);
// Writes normalized (pre-affine) rows to xhat and 1/sqrt(var+eps) per row.
void layer_norm_rows(std::span<const double> x, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t m, std::size_t n, double eps);
}  // namespace serial

namespace parallel {
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m, std::size_t n);
void log_softmax_rows(std::span<const double> x, std::span<double> y, std::size_t m,
                      std::size_t n);
void layer_norm_rows(std::span<const double> x, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t m, std::size_t n, double eps);
}  // namespace parallel

// Default dispatch used by the differentiable ops.
using parallel::layer_norm_rows;
using parallel::log_softmax_rows;
using parallel::matmul_nn;
using parallel::matmul_nt;
using parallel::matmul_tn;
using parallel::softmax_rows;

}  // namespace aoa::kernels
