#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "aoa/tensor.hpp"

namespace aoa {

// Attention weights produced by one attention call. `weights` is the
// head-averaged n_q x n_k matrix; `heads` holds the per-head matrices (a
// single entry for single-head attention).
struct AttentionTrace {
  Tensor weights;
  std::vector<Tensor> heads;
};

struct AttentionResult {
  Tensor output;  // attended vectors, one row per query
  AttentionTrace trace;
};

// f_att(Q, K, V). Implementations must treat the arguments as already
// projected.
using AttentionFn = std::function<AttentionResult(const Tensor& q, const Tensor& k, const Tensor& v)>;

// softmax(Q K^T / sqrt(d)) V with d the column count of Q.
AttentionResult dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Splits Q, K, V into `heads` column slices, applies dot_attention per slice
// and concatenates the results. No output projection.
AttentionResult multi_head(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads);

AttentionFn multi_head_fn(std::size_t heads);

}  // namespace aoa
