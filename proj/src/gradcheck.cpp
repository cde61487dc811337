#include "aoa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "aoa/aoa.hpp"
#include "aoa/attention.hpp"
#include "aoa/errors.hpp"
#include "aoa/model.hpp"
#include "aoa/ops.hpp"
#include "aoa/training.hpp"

namespace aoa {

double gradcheck_relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
  return std::abs(analytic - numeric) / denom;
}

GradcheckResult check_gradient(const std::string& name, const std::function<Tensor()>& f,
                               const std::vector<Tensor>& inputs, const GradcheckOptions& options) {
  for (const auto& t : inputs)
    if (!t.is_leaf() || !t.requires_grad()) throw ContractError(name + ": gradcheck inputs must be grad leaves");

  std::vector<std::vector<double>> analytic;
  {
    for (auto t : inputs) t.zero_grad();
    Tape tape;
    Tensor loss = f();
    tape.backward(loss);
    for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  GradcheckResult r;
  r.name = name;
  NoGradScope no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i];
    auto x = t.mutable_data();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double saved = x[j];
      x[j] = saved + options.step;
      const double up = f().item();
      x[j] = saved - options.step;
      const double down = f().item();
      x[j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      r.max_rel_error = std::max(r.max_rel_error, gradcheck_relative_error(analytic[i][j], numeric));
      ++r.checked;
    }
  }
  r.passed = r.max_rel_error < options.tolerance;
  return r;
}

namespace {

constexpr std::size_t kDim = 8;
constexpr std::size_t kObjects = 3;
constexpr std::size_t kHeads = 2;
constexpr std::size_t kLayers = 2;
constexpr std::size_t kVocab = 12;
constexpr std::size_t kSteps = 4;

class Suite {
 public:
  Suite(const GradcheckOptions& o) : opt_(o), rng_(o.seed) {}

  Tensor leaf(const Shape& s, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(s.numel());
    for (auto& x : v) x = d(rng_);
    Tensor t(s, std::move(v));
    t.set_requires_grad(true);
    return t;
  }

  // Away from zero so relu and friends stay differentiable at +-h.
  Tensor leaf_off_zero(const Shape& s) {
    Tensor t = leaf(s, 0.1, 1.0);
    std::bernoulli_distribution flip(0.5);
    for (auto& x : t.mutable_data())
      if (flip(rng_)) x = -x;
    return t;
  }

  // Fixed random weighting so the scalar depends on every output element.
  std::function<Tensor(const Tensor&)> reducer() {
    auto weights = std::make_shared<std::vector<double>>();
    auto gen = std::make_shared<std::mt19937_64>(rng_());
    return [weights, gen](const Tensor& y) {
      while (weights->size() < y.numel())
        weights->push_back(std::uniform_real_distribution<double>(-1.0, 1.0)(*gen));
      Tensor w(y.shape(), std::vector<double>(weights->begin(), weights->begin() + static_cast<std::ptrdiff_t>(y.numel())));
      return sum(elem_mul(y, w));
    };
  }

  void check(const std::string& name, const std::function<Tensor()>& out, const std::vector<Tensor>& inputs) {
    auto reduce = reducer();
    results_.push_back(check_gradient(name, [&] { return reduce(out()); }, inputs, opt_));
  }

  void check_scalar(const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& inputs) {
    results_.push_back(check_gradient(name, f, inputs, opt_));
  }

  std::mt19937_64& rng() { return rng_; }
  std::vector<GradcheckResult> take() { return std::move(results_); }

 private:
  GradcheckOptions opt_;
  std::mt19937_64 rng_;
  std::vector<GradcheckResult> results_;
};

void check_ops(Suite& s) {
  const std::size_t k = kObjects, d = kDim;
  {
    Tensor a = s.leaf({k, d}), b = s.leaf({d, 5});
    s.check("matmul", [=] { return matmul(a, b); }, {a, b});
  }
  {
    Tensor a = s.leaf({d}), b = s.leaf({d, 5});
    s.check("matmul.row", [=] { return matmul(a, b); }, {a, b});
  }
  {
    Tensor a = s.leaf({k, d}), b = s.leaf({5, d});
    s.check("matmul_nt", [=] { return matmul_nt(a, b); }, {a, b});
  }
  {
    Tensor a = s.leaf({k, d});
    s.check("transpose", [=] { return transpose(a); }, {a});
  }
  {
    Tensor x = s.leaf({k, d}), w = s.leaf({5, d}), b = s.leaf({5});
    s.check("linear", [=] { return linear(x, w, b); }, {x, w, b});
  }
  {
    Tensor a = s.leaf({k, d}), b = s.leaf({k, d}), c = s.leaf({1});
    s.check("add", [=] { return add(a, b); }, {a, b});
    s.check("sub", [=] { return sub(a, b); }, {a, b});
    s.check("elem_mul", [=] { return elem_mul(a, b); }, {a, b});
    s.check("elem_mul.broadcast", [=] { return elem_mul(a, c); }, {a, c});
    s.check("add.broadcast", [=] { return add(a, c); }, {a, c});
    s.check("scale", [=] { return scale(a, -1.7); }, {a});
  }
  {
    Tensor x = s.leaf({k, d}), r = s.leaf({d});
    s.check("add_row", [=] { return add_row(x, r); }, {x, r});
  }
  {
    Tensor x = s.leaf({k, d}, -2.0, 2.0);
    s.check("sigmoid", [=] { return sigmoid(x); }, {x});
    s.check("tanh", [=] { return tanh(x); }, {x});
    s.check("softmax_rows", [=] { return softmax_rows(x); }, {x});
    s.check("log_softmax_rows", [=] { return log_softmax_rows(x); }, {x});
  }
  {
    Tensor x = s.leaf_off_zero({k, d});
    s.check("relu", [=] { return relu(x); }, {x});
  }
  {
    Tensor x = s.leaf({k, d}), g = s.leaf({d}, 0.5, 1.5), b = s.leaf({d});
    s.check("layer_norm", [=] { return layer_norm(x, g, b, 1e-5); }, {x, g, b});
  }
  {
    Tensor a = s.leaf({k, 3}), b = s.leaf({k, 5});
    s.check("concat_cols", [=] { return concat_cols({a, b}); }, {a, b});
    Tensor u = s.leaf({3}), v = s.leaf({5});
    s.check("concat_cols.vector", [=] { return concat_cols({u, v}); }, {u, v});
  }
  {
    Tensor x = s.leaf({k, d});
    s.check("slice_cols", [=] { return slice_cols(x, 2, 6); }, {x});
    s.check("split_cols", [=] {
      auto parts = split_cols(x, 4);
      return concat_cols({parts[3], parts[1]});
    }, {x});
    s.check("mean_rows", [=] { return mean_rows(x); }, {x});
    s.check("sum", [=] { return sum(x); }, {x});
    s.check("pick", [=] { return pick(x, 5); }, {x});
    s.check("column", [=] { return column(x, 3); }, {x});
    s.check("reshape", [=] { return reshape(x, Shape{d, k}); }, {x});
  }
}

void check_attention(Suite& s) {
  const std::size_t k = kObjects, d = kDim;
  Tensor q = s.leaf({2, d}), kk = s.leaf({k, d}), v = s.leaf({k, d});
  s.check("dot_attention", [=] { return dot_attention(q, kk, v).output; }, {q, kk, v});
  s.check("multi_head", [=] { return multi_head(q, kk, v, kHeads).output; }, {q, kk, v});

  AoAParams p = AoAParams::init(d, s.rng());
  for (auto* t : {&p.b_i, &p.b_g}) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& x : t->mutable_data()) x = u(s.rng());
  }
  std::vector<Tensor> params = {p.W_i_q, p.W_i_v, p.b_i, p.W_g_q, p.W_g_v, p.b_g};
  for (auto& t : params) t.set_requires_grad(true);
  std::vector<Tensor> all = params;
  all.insert(all.end(), {q, kk, v});
  Tensor v_hat = s.leaf({2, d});
  std::vector<Tensor> gate_inputs = params;
  gate_inputs.insert(gate_inputs.end(), {q, v_hat});
  s.check("aoa_gate", [=] { return aoa_gate(p, q, v_hat); }, gate_inputs);
  s.check("aoa.multi_head", [=] { return aoa(p, multi_head_fn(kHeads), q, kk, v).value; }, all);
}

ModelConfig tiny_config(EncoderVariant enc, DecoderScheme dec) {
  ModelConfig c;
  c.feature_dim = kDim;
  c.model_dim = kDim;
  c.embed_dim = kDim;
  c.vocab_size = kVocab;
  c.encoder_heads = kHeads;
  c.decoder_heads = kHeads;
  c.refine_layers = kLayers;
  c.encoder = enc;
  c.decoder = dec;
  c.experimental = true;
  return c;
}

// Non-zero biases and layer-norm parameters so their gradients are exercised
// away from the initial values.
void perturb(const CaptionModel& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  for (const auto& e : model.parameters().entries()) {
    Tensor t = e.tensor;
    for (auto& x : t.mutable_data()) x += u(rng);
  }
}

void check_model(Suite& s) {
  std::vector<int> target;
  std::uniform_int_distribution<int> word(token::kReserved, static_cast<int>(kVocab) - 1);
  for (std::size_t t = 0; t + 1 < kSteps; ++t) target.push_back(word(s.rng()));
  target.push_back(token::kEos);

  {
    ModelConfig c = tiny_config(EncoderVariant::RefineAoA, DecoderScheme::AoA);
    CaptionModel m = CaptionModel::init(c, s.rng()());
    perturb(m, s.rng());
    Tensor x = s.leaf({kObjects, kDim});
    const auto& L = m.encoder().layers[0];
    const auto& lp = m.decoder().lstm;
    Tensor in = s.leaf({lp.W_x.cols()}), h = s.leaf({kDim}), cell = s.leaf({kDim});
    s.check("lstm_cell", [&] {
      auto o = lstm_cell(lp, in, h, cell);
      return concat_cols({o.h, o.m});
    }, {in, h, cell, lp.W_x, lp.W_h, lp.b});
    std::vector<Tensor> layer_inputs = {x, L.W_Q, L.W_K, L.W_V, L.ln_gain, L.ln_bias};
    s.check("refine_layer.aoa", [&] { return refine_layer(L, x, kHeads, c.ln_eps).value; }, layer_inputs);
  }
  {
    ModelConfig c = tiny_config(EncoderVariant::RefineNoAoA, DecoderScheme::Base);
    CaptionModel m = CaptionModel::init(c, s.rng()());
    perturb(m, s.rng());
    Tensor x = s.leaf({kObjects, kDim});
    const auto& L = m.encoder().layers[0];
    std::vector<Tensor> inputs = {x, L.W_Q, L.W_K, L.W_V, L.ln_gain, L.ln_bias,
                                  L.ff->W1, L.ff->b1, L.ff->W2, L.ff->b2, L.ff_ln_gain, L.ff_ln_bias};
    s.check("refine_layer.feed_forward", [&] { return refine_layer(L, x, kHeads, c.ln_eps).value; }, inputs);
  }

  for (auto enc : {EncoderVariant::Base, EncoderVariant::RefineNoAoA, EncoderVariant::RefineAoA}) {
    for (auto dec : {DecoderScheme::Base, DecoderScheme::Lstm, DecoderScheme::AoA, DecoderScheme::LstmAoA}) {
      ModelConfig c = tiny_config(enc, dec);
      auto model = std::make_shared<CaptionModel>(CaptionModel::init(c, s.rng()()));
      perturb(*model, s.rng());
      Tensor features = s.leaf({kObjects, kDim});
      std::vector<Tensor> inputs = {features};
      for (const auto& e : model->parameters().entries()) inputs.push_back(e.tensor);
      s.check_scalar("xe_loss." + to_string(enc) + "." + to_string(dec),
                     [=] { return xe_loss(*model, features, target); }, inputs);
    }
  }

  {
    Tensor logits = s.leaf({kSteps, kVocab}, -2.0, 2.0);
    s.check_scalar("scst_pseudo_loss.logits", [=] {
      Tensor lp = log_softmax_rows(logits);
      Tensor total;
      for (std::size_t t = 0; t < target.size(); ++t) {
        Tensor term = pick(lp, t * kVocab + static_cast<std::size_t>(target[t]));
        total = total.defined() ? add(total, term) : term;
      }
      return scst_pseudo_loss(total, 1.0, 0.5);
    }, {logits});
  }
}

}  // namespace

std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions& options) {
  Suite s(options);
  check_ops(s);
  check_attention(s);
  check_model(s);
  return s.take();
}

}  // namespace aoa
