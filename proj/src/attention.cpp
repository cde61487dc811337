#include "aoa/attention.hpp"

#include <cmath>

#include "aoa/errors.hpp"
#include "aoa/ops.hpp"

namespace aoa {

namespace {

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query " + q.shape().str() + " and key " + k.shape().str() +
                         " widths differ");
  }
  if (k.rows() != v.rows()) {
    throw DimensionError("attention: key " + k.shape().str() + " and value " + v.shape().str() +
                         " row counts differ");
  }
}

}  // namespace

AttentionResult dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv(q, k, v);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor weights = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
  Tensor out = matmul(weights, v);
  return {out, AttentionTrace{weights.detach(), {weights.detach()}}};
}

AttentionResult multi_head(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads) {
  if (heads == 0 || q.cols() % heads != 0 || k.cols() % heads != 0 || v.cols() % heads != 0) {
    throw ConfigError("multi_head: width " + std::to_string(q.cols()) +
                      " not divisible by head count " + std::to_string(heads));
  }
  check_qkv(q, k, v);
  if (heads == 1) return dot_attention(q, k, v);

  auto qs = split_cols(q, heads);
  auto ks = split_cols(k, heads);
  auto vs = split_cols(v, heads);
  std::vector<Tensor> outs;
  AttentionTrace trace;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    auto r = dot_attention(qs[h], ks[h], vs[h]);
    outs.push_back(r.output);
    trace.heads.push_back(r.trace.weights);
  }
  std::vector<double> mean(trace.heads.front().numel(), 0.0);
  for (const auto& w : trace.heads) {
    auto d = w.data();
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d[i];
  }
  for (auto& m : mean) m /= static_cast<double>(heads);
  trace.weights = Tensor(trace.heads.front().shape(), std::move(mean));
  return {concat_cols(outs), std::move(trace)};
}

AttentionFn multi_head_fn(std::size_t heads) {
  return [heads](const Tensor& q, const Tensor& k, const Tensor& v) {
    return multi_head(q, k, v, heads);
  };
}

}  // namespace aoa
