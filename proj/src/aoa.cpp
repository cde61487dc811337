#include "aoa/aoa.hpp"

#include "aoa/errors.hpp"
#include "aoa/ops.hpp"

namespace aoa {

AoAParams AoAParams::init(std::size_t dim, std::mt19937_64& rng) {
  AoAParams p;
  p.W_i_q = uniform_fan_in(Shape{dim, dim}, dim, rng);
  p.W_i_v = uniform_fan_in(Shape{dim, dim}, dim, rng);
  p.W_g_q = uniform_fan_in(Shape{dim, dim}, dim, rng);
  p.W_g_v = uniform_fan_in(Shape{dim, dim}, dim, rng);
  p.b_i = Tensor(Shape{dim});
  p.b_g = Tensor(Shape{dim});
  return p;
}

AoAParams AoAParams::zeros(std::size_t dim) {
  AoAParams p;
  p.W_i_q = Tensor(Shape{dim, dim});
  p.W_i_v = Tensor(Shape{dim, dim});
  p.W_g_q = Tensor(Shape{dim, dim});
  p.W_g_v = Tensor(Shape{dim, dim});
  p.b_i = Tensor(Shape{dim});
  p.b_g = Tensor(Shape{dim});
  return p;
}

void AoAParams::collect(const std::string& prefix, ParameterSet& out) const {
  out.add(prefix + "W_i_q", W_i_q);
  out.add(prefix + "W_i_v", W_i_v);
  out.add(prefix + "b_i", b_i);
  out.add(prefix + "W_g_q", W_g_q);
  out.add(prefix + "W_g_v", W_g_v);
  out.add(prefix + "b_g", b_g);
}

void AoAParams::validate() const {
  const std::size_t d = dim();
  for (const Tensor* w : {&W_i_q, &W_i_v, &W_g_q, &W_g_v}) {
    if (w->shape() != Shape{d, d}) {
      throw DimensionError("AoA weight " + w->shape().str() + " is not " + Shape{d, d}.str());
    }
  }
  for (const Tensor* b : {&b_i, &b_g}) {
    if (b->numel() != d) throw DimensionError("AoA bias " + b->shape().str() + " is not [" + std::to_string(d) + "]");
  }
}

GatedOutput aoa_gate_detailed(const AoAParams& p, const Tensor& q, const Tensor& v_hat) {
  if (q.shape() != v_hat.shape()) {
    throw DimensionError("aoa_gate: query " + q.shape().str() + " and attended " +
                         v_hat.shape().str() + " differ");
  }
  if (q.cols() != p.dim()) {
    throw DimensionError("aoa_gate: width " + std::to_string(q.cols()) + " vs parameters " +
                         std::to_string(p.dim()));
  }
  Tensor info = add(linear(q, p.W_i_q, p.b_i), linear(v_hat, p.W_i_v));
  Tensor gate = sigmoid(add(linear(q, p.W_g_q, p.b_g), linear(v_hat, p.W_g_v)));
  return {elem_mul(gate, info), gate, info};
}

AoAResult aoa(const AoAParams& p, const AttentionFn& att, const Tensor& q, const Tensor& k,
              const Tensor& v) {
  AttentionResult attended = att(q, k, v);
  GatedOutput g = aoa_gate_detailed(p, q, attended.output);
  return {g.value, g.gate, std::move(attended.trace)};
}

}  // namespace aoa
