#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "aoa/tensor.hpp"

// Differentiable operations. Rank-1 operands act as a single row wherever a
// matrix is expected, and results keep the rank of the row-carrying operand.
namespace aoa {

// a (m x k) * b (k x n).
Tensor matmul(const Tensor& a, const Tensor& b);
// a (m x k) * b^T where b is (n x k).
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// x W^T + bias, W stored (out x in); bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// Elementwise; b may also be a single-element tensor broadcast over a.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor elem_mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// x (m x n) + row (n) added to every row.
Tensor add_row(const Tensor& x, const Tensor& row);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

// Per row (x - mean) / sqrt(var + eps) * gain + bias, population variance.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
std::vector<Tensor> split_cols(const Tensor& x, std::size_t parts);

// Mean over rows of a (k x D) matrix, giving a length-D vector.
Tensor mean_rows(const Tensor& a);
Tensor sum(const Tensor& x);
// Single element (flat index) as a scalar.
Tensor pick(const Tensor& x, std::size_t index);
// Column j of a matrix as a vector; used for embedding lookup.
Tensor column(const Tensor& w, std::size_t j);
Tensor reshape(const Tensor& x, const Shape& shape);

// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace aoa
