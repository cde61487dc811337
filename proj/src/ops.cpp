#include "aoa/ops.hpp"

#include <algorithm>
#include <cmath>

#include "aoa/errors.hpp"
#include "aoa/kernels.hpp"

namespace aoa {

namespace {

using detail::make_result;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + a.shape().str() + " and " +
                       b.shape().str());
}

Shape row_result_shape(const Tensor& rows_from, std::size_t cols) {
  if (rows_from.rank() == 1) return Shape{cols};
  return Shape{rows_from.rows(), cols};
}

bool is_broadcast_scalar(const Tensor& a, const Tensor& b) {
  return b.numel() == 1 && a.numel() != 1;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  kernels::matmul_nn(a.data(), b.data(), out, m, k, n, false);
  return make_result(row_result_shape(a, n), std::move(out), {a, b},
                     [a, b, m, k, n](std::span<const double>, const double* g,
                                     std::span<double* const> gin) {
                       std::span<const double> gs(g, m * n);
                       if (gin[0]) kernels::matmul_nt(gs, b.data(), {gin[0], m * k}, m, n, k, true);
                       if (gin[1]) kernels::matmul_tn(a.data(), gs, {gin[1], k * n}, k, m, n, true);
                     });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (b.rank() != 2 || a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  kernels::matmul_nt(a.data(), b.data(), out, m, k, n, false);
  return make_result(row_result_shape(a, n), std::move(out), {a, b},
                     [a, b, m, k, n](std::span<const double>, const double* g,
                                     std::span<double* const> gin) {
                       std::span<const double> gs(g, m * n);
                       if (gin[0]) kernels::matmul_nn(gs, b.data(), {gin[0], m * k}, m, n, k, true);
                       if (gin[1]) kernels::matmul_tn(gs, a.data(), {gin[1], n * k}, n, m, k, true);
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose needs a matrix, got " + a.shape().str());
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return make_result(Shape{n, m}, std::move(out), {a},
                     [m, n](std::span<const double>, const double* g, std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < n; ++j) gin[0][i * n + j] += g[j * m + i];
                     });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.cols() != weight.cols()) shape_error("linear", x, weight);
  const std::size_t m = x.rows(), k = x.cols(), n = weight.rows();
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != n) shape_error("linear bias", weight, bias);
  std::vector<double> out(m * n);
  kernels::matmul_nt(x.data(), weight.data(), out, m, k, n, false);
  if (has_bias) {
    auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result(row_result_shape(x, n), std::move(out), std::move(inputs),
                     [x, weight, m, k, n](std::span<const double>, const double* g,
                                          std::span<double* const> gin) {
                       std::span<const double> gs(g, m * n);
                       if (gin[0]) kernels::matmul_nn(gs, weight.data(), {gin[0], m * k}, m, n, k, true);
                       if (gin[1]) kernels::matmul_tn(gs, x.data(), {gin[1], n * k}, n, m, k, true);
                       if (gin.size() > 2 && gin[2]) {
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gin[2][j] += g[i * n + j];
                       }
                     });
}

namespace {

template <typename Fwd, typename Da, typename Db>
Tensor binary_elementwise(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, Da da,
                          Db db) {
  const bool bcast = is_broadcast_scalar(a, b);
  if (!bcast && a.shape() != b.shape()) shape_error(name, a, b);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[bcast ? 0 : i]);
  return make_result(a.shape(), std::move(out), {a, b},
                     [a, b, n, bcast, da, db](std::span<const double>, const double* g,
                                              std::span<double* const> gin) {
                       auto av = a.data();
                       auto bv = b.data();
                       for (std::size_t i = 0; i < n; ++i) {
                         const double bi = bv[bcast ? 0 : i];
                         if (gin[0]) gin[0][i] += g[i] * da(av[i], bi);
                         if (gin[1]) gin[1][bcast ? 0 : i] += g[i] * db(av[i], bi);
                       }
                     });
}

template <typename Fwd, typename Dy>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Dy dy_from_out) {
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x},
                     [n, dy_from_out](std::span<const double> y, const double* g,
                                      std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i] * dy_from_out(y[i]);
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor elem_mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      "elem_mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  auto av = a.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = av[i] * s;
  return make_result(a.shape(), std::move(out), {a},
                     [n, s](std::span<const double>, const double* g, std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i] * s;
                     });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  const std::size_t m = x.rows(), n = x.cols();
  if (row.numel() != n) shape_error("add_row", x, row);
  std::vector<double> out(x.data().begin(), x.data().end());
  auto rv = row.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += rv[j];
  return make_result(x.shape(), std::move(out), {x, row},
                     [m, n](std::span<const double>, const double* g, std::span<double* const> gin) {
                       if (gin[0])
                         for (std::size_t i = 0; i < m * n; ++i) gin[0][i] += g[i];
                       if (gin[1])
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) gin[1][j] += g[i * n + j];
                     });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double s) { return s * (1.0 - s); });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::tanh(v); }, [](double t) { return 1.0 - t * t; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) throw DimensionError("softmax_rows needs at least one column");
  std::vector<double> out(m * n);
  kernels::softmax_rows(x.data(), out, m, n);
  return make_result(x.shape(), std::move(out), {x},
                     [m, n](std::span<const double> y, const double* g, std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* yr = y.data() + i * n;
                         const double* gr = g + i * n;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < n; ++j) dot += gr[j] * yr[j];
                         for (std::size_t j = 0; j < n; ++j) gin[0][i * n + j] += yr[j] * (gr[j] - dot);
                       }
                     });
}

Tensor log_softmax_rows(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) throw DimensionError("log_softmax_rows needs at least one column");
  std::vector<double> out(m * n);
  kernels::log_softmax_rows(x.data(), out, m, n);
  return make_result(x.shape(), std::move(out), {x},
                     [m, n](std::span<const double> y, const double* g, std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < m; ++i) {
                         const double* yr = y.data() + i * n;
                         const double* gr = g + i * n;
                         double gsum = 0.0;
                         for (std::size_t j = 0; j < n; ++j) gsum += gr[j];
                         for (std::size_t j = 0; j < n; ++j)
                           gin[0][i * n + j] += gr[j] - std::exp(yr[j]) * gsum;
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (n < 2) throw DimensionError("layer_norm needs at least 2 columns, got " + x.shape().str());
  if (gain.numel() != n) shape_error("layer_norm gain", x, gain);
  if (bias.numel() != n) shape_error("layer_norm bias", x, bias);
  if (!(eps > 0.0)) throw ContractError("layer_norm eps must be positive");
  std::vector<double> xhat(m * n), inv_std(m);
  kernels::layer_norm_rows(x.data(), xhat, inv_std, m, n, eps);
  std::vector<double> out(m * n);
  auto gv = gain.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xhat[i * n + j] * gv[j] + bv[j];
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [gain, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          std::span<const double>, const double* g, std::span<double* const> gin) {
        auto gv = gain.data();
        const double dn = static_cast<double>(n);
        std::vector<double> dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          const double* xr = xhat.data() + i * n;
          const double* gr = g + i * n;
          if (gin[1])
            for (std::size_t j = 0; j < n; ++j) gin[1][j] += gr[j] * xr[j];
          if (gin[2])
            for (std::size_t j = 0; j < n; ++j) gin[2][j] += gr[j];
          if (!gin[0]) continue;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = gr[j] * gv[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xr[j];
          }
          for (std::size_t j = 0; j < n; ++j)
            gin[0][i * n + j] += inv_std[i] / dn * (dn * dxhat[j] - s1 - xr[j] * s2);
        }
      });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols of zero tensors");
  const std::size_t m = parts.front().rows();
  bool all_vectors = true;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_error("concat_cols", parts.front(), p);
    all_vectors = all_vectors && p.rank() == 1;
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto v = parts[p].data();
    const std::size_t w = widths[p];
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.data() + i * w, w, out.data() + i * total + offset);
    offset += w;
  }
  Shape shape = all_vectors ? Shape{total} : Shape{m, total};
  return make_result(std::move(shape), std::move(out), parts,
                     [m, total, widths](std::span<const double>, const double* g,
                                        std::span<double* const> gin) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         const std::size_t w = widths[p];
                         if (gin[p]) {
                           for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < w; ++j)
                               gin[p][i * w + j] += g[i * total + offset + j];
                         }
                         offset += w;
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for " + x.shape().str());
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto v = x.data();
  for (std::size_t i = 0; i < m; ++i) std::copy_n(v.data() + i * n + begin, w, out.data() + i * w);
  return make_result(row_result_shape(x, w), std::move(out), {x},
                     [m, n, w, begin](std::span<const double>, const double* g,
                                      std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < m; ++i)
                         for (std::size_t j = 0; j < w; ++j) gin[0][i * n + begin + j] += g[i * w + j];
                     });
}

std::vector<Tensor> split_cols(const Tensor& x, std::size_t parts) {
  const std::size_t n = x.cols();
  if (parts == 0 || n % parts != 0) {
    throw DimensionError("split_cols: " + std::to_string(n) + " columns not divisible into " +
                         std::to_string(parts) + " parts");
  }
  if (parts == 1) return {x};
  const std::size_t w = n / parts;
  std::vector<Tensor> out;
  out.reserve(parts);
  for (std::size_t p = 0; p < parts; ++p) out.push_back(slice_cols(x, p * w, (p + 1) * w));
  return out;
}

Tensor mean_rows(const Tensor& a) {
  const std::size_t k = a.rank() == 1 ? 1 : a.rows();
  const std::size_t d = a.cols();
  if (k == 0 || a.numel() == 0) throw ContractError("mean_rows of empty input " + a.shape().str());
  std::vector<double> out(d, 0.0);
  auto v = a.data();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += v[i * d + j];
  const double inv = 1.0 / static_cast<double>(k);
  for (auto& o : out) o *= inv;
  return make_result(Shape{d}, std::move(out), {a},
                     [k, d, inv](std::span<const double>, const double* g,
                                 std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < k; ++i)
                         for (std::size_t j = 0; j < d; ++j) gin[0][i * d + j] += g[j] * inv;
                     });
}

Tensor sum(const Tensor& x) {
  const std::size_t n = x.numel();
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_result(Shape{1}, {s}, {x},
                     [n](std::span<const double>, const double* g, std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[0];
                     });
}

Tensor pick(const Tensor& x, std::size_t index) {
  if (index >= x.numel()) {
    throw DimensionError("pick index " + std::to_string(index) + " out of range for " +
                         x.shape().str());
  }
  return make_result(Shape{1}, {x.data()[index]}, {x},
                     [index](std::span<const double>, const double* g, std::span<double* const> gin) {
                       if (gin[0]) gin[0][index] += g[0];
                     });
}

Tensor column(const Tensor& w, std::size_t j) {
  if (w.rank() != 2 || j >= w.cols()) {
    throw DimensionError("column " + std::to_string(j) + " out of range for " + w.shape().str());
  }
  const std::size_t r = w.rows(), c = w.cols();
  std::vector<double> out(r);
  auto v = w.data();
  for (std::size_t i = 0; i < r; ++i) out[i] = v[i * c + j];
  return make_result(Shape{r}, std::move(out), {w},
                     [r, c, j](std::span<const double>, const double* g, std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < r; ++i) gin[0][i * c + j] += g[i];
                     });
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (shape.numel() != x.numel()) shape_error("reshape", x, Tensor(shape));
  const std::size_t n = x.numel();
  return make_result(shape, x.to_vector(), {x},
                     [n](std::span<const double>, const double* g, std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i];
                     });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
  const std::size_t n = x.numel();
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> mask(n);
  for (auto& m : mask) m = keep(rng) ? 1.0 / (1.0 - rate) : 0.0;
  std::vector<double> out(n);
  auto v = x.data();
  for (std::size_t i = 0; i < n; ++i) out[i] = v[i] * mask[i];
  return make_result(x.shape(), std::move(out), {x},
                     [n, mask = std::move(mask)](std::span<const double>, const double* g,
                                                 std::span<double* const> gin) {
                       if (!gin[0]) return;
                       for (std::size_t i = 0; i < n; ++i) gin[0][i] += g[i] * mask[i];
                     });
}

}  // namespace aoa
