#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "aoa/kernels.hpp"

using namespace aoa;

namespace {

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(-2.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("serial matmul matches the triple loop") {
    const std::size_t m = 5, k = 7, n = 3;
    auto a = random_values(m * k, 1), b = random_values(k * n, 2);
    std::vector<double> c(m * n);
    kernels::serial::matmul_nn(a, b, c, m, k, n, false);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = 0;
        for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
        CHECK(c[i * n + j] == doctest::Approx(s).epsilon(1e-12));
      }
  }

  TEST_CASE("transposed variants agree with explicit transposes") {
    const std::size_t m = 4, k = 6, n = 5;
    auto a = random_values(m * k, 3), b = random_values(k * n, 4);
    std::vector<double> bt(n * k), at(k * m);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    std::vector<double> ref(m * n), c1(m * n), c2(m * n);
    kernels::serial::matmul_nn(a, b, ref, m, k, n, false);
    kernels::serial::matmul_nt(a, bt, c1, m, k, n, false);
    kernels::serial::matmul_tn(at, b, c2, m, k, n, false);
    for (std::size_t i = 0; i < m * n; ++i) {
      CHECK(c1[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      CHECK(c2[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("parallel kernels are bit-identical to serial above the threshold") {
    kernels::set_num_threads(4);
    const std::size_t m = 96, k = 80, n = 72;
    auto a = random_values(m * k, 5), b = random_values(k * n, 6), bt = random_values(n * k, 7),
         at = random_values(k * m, 8);
    for (bool acc : {false, true}) {
      std::vector<double> s(m * n, 1.5), p(m * n, 1.5);
      kernels::serial::matmul_nn(a, b, s, m, k, n, acc);
      kernels::parallel::matmul_nn(a, b, p, m, k, n, acc);
      CHECK(s == p);
      std::fill(s.begin(), s.end(), 0.25);
      std::fill(p.begin(), p.end(), 0.25);
      kernels::serial::matmul_nt(a, bt, s, m, k, n, acc);
      kernels::parallel::matmul_nt(a, bt, p, m, k, n, acc);
      CHECK(s == p);
      kernels::serial::matmul_tn(at, b, s, m, k, n, acc);
      kernels::parallel::matmul_tn(at, b, p, m, k, n, acc);
      CHECK(s == p);
    }
    const std::size_t rows = 300, cols = 200;
    auto x = random_values(rows * cols, 9);
    std::vector<double> ys(rows * cols), yp(rows * cols);
    kernels::serial::softmax_rows(x, ys, rows, cols);
    kernels::parallel::softmax_rows(x, yp, rows, cols);
    CHECK(ys == yp);
    kernels::serial::log_softmax_rows(x, ys, rows, cols);
    kernels::parallel::log_softmax_rows(x, yp, rows, cols);
    CHECK(ys == yp);
    std::vector<double> is(rows), ip(rows);
    kernels::serial::layer_norm_rows(x, ys, is, rows, cols, 1e-5);
    kernels::parallel::layer_norm_rows(x, yp, ip, rows, cols, 1e-5);
    CHECK(ys == yp);
    CHECK(is == ip);
  }

  TEST_CASE("softmax rows are normalized and stable for large inputs") {
    std::vector<double> x = {1000.0, 1001.0, 1002.0, -5.0, 0.0, 5.0};
    std::vector<double> y(6), ly(6);
    kernels::softmax_rows(x, y, 2, 3);
    kernels::log_softmax_rows(x, ly, 2, 3);
    for (int r = 0; r < 2; ++r) {
      double s = 0;
      for (int c = 0; c < 3; ++c) {
        s += y[r * 3 + c];
        CHECK(std::exp(ly[r * 3 + c]) == doctest::Approx(y[r * 3 + c]).epsilon(1e-12));
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  TEST_CASE("layer norm rows have zero mean and unit variance") {
    auto x = random_values(4 * 10, 11);
    std::vector<double> xhat(40), inv(4);
    kernels::layer_norm_rows(x, xhat, inv, 4, 10, 0.0);
    for (int r = 0; r < 4; ++r) {
      double mean = 0, var = 0;
      for (int c = 0; c < 10; ++c) mean += xhat[r * 10 + c] / 10;
      for (int c = 0; c < 10; ++c) var += (xhat[r * 10 + c] - mean) * (xhat[r * 10 + c] - mean) / 10;
      CHECK(std::abs(mean) < 1e-12);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}
