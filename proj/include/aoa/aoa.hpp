#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "aoa/attention.hpp"
#include "aoa/parameters.hpp"
#include "aoa/tensor.hpp"

namespace aoa {

// Learnables of the attention-on-attention gate. Matrices are D x D and act
// on row vectors as x W^T.
struct AoAParams {
  Tensor W_i_q, W_i_v, W_g_q, W_g_v;
  Tensor b_i, b_g;

  std::size_t dim() const { return W_i_q.rows(); }

  // Matrices from U(-1/sqrt(D), 1/sqrt(D)), biases zero.
  static AoAParams init(std::size_t dim, std::mt19937_64& rng);
  static AoAParams zeros(std::size_t dim);
  void collect(const std::string& prefix, ParameterSet& out) const;
  void validate() const;
};

struct GatedOutput {
  Tensor value;  // g ⊙ i
  Tensor gate;   // g
  Tensor info;   // i
};

// i = q W_i_q^T + v_hat W_i_v^T + b_i
// g = sigmoid(q W_g_q^T + v_hat W_g_v^T + b_g)
// returns g ⊙ i, with the gate and information vector for inspection.
GatedOutput aoa_gate_detailed(const AoAParams& p, const Tensor& q, const Tensor& v_hat);

inline Tensor aoa_gate(const AoAParams& p, const Tensor& q, const Tensor& v_hat) {
  return aoa_gate_detailed(p, q, v_hat).value;
}

struct AoAResult {
  Tensor value;
  Tensor gate;
  AttentionTrace trace;
};

// AoA(f_att, Q, K, V): evaluates f_att once and gates its result.
AoAResult aoa(const AoAParams& p, const AttentionFn& att, const Tensor& q, const Tensor& k,
              const Tensor& v);

}  // namespace aoa
