#include "aoa/model.hpp"

#include "json.hpp"

#include "aoa/errors.hpp"
#include "aoa/ops.hpp"

namespace aoa {

std::string to_string(EncoderVariant v) {
  switch (v) {
    case EncoderVariant::Base: return "base";
    case EncoderVariant::RefineNoAoA: return "refine-no-aoa";
    case EncoderVariant::RefineAoA: return "refine-aoa";
  }
  return "?";
}

std::string to_string(DecoderScheme s) {
  switch (s) {
    case DecoderScheme::Base: return "dec-base";
    case DecoderScheme::Lstm: return "dec-lstm";
    case DecoderScheme::AoA: return "dec-aoa";
    case DecoderScheme::LstmAoA: return "dec-lstm-aoa";
  }
  return "?";
}

EncoderVariant parse_encoder_variant(const std::string& s) {
  if (s == "base") return EncoderVariant::Base;
  if (s == "refine-no-aoa") return EncoderVariant::RefineNoAoA;
  if (s == "refine-aoa") return EncoderVariant::RefineAoA;
  throw ConfigError("unknown encoder variant '" + s + "' (base | refine-no-aoa | refine-aoa)");
}

DecoderScheme parse_decoder_scheme(const std::string& raw) {
  const std::string s = raw.rfind("dec-", 0) == 0 ? raw.substr(4) : raw;
  if (s == "base") return DecoderScheme::Base;
  if (s == "lstm") return DecoderScheme::Lstm;
  if (s == "aoa") return DecoderScheme::AoA;
  if (s == "lstm-aoa") return DecoderScheme::LstmAoA;
  throw ConfigError("unknown decoder scheme '" + raw +
                    "' (dec-base | dec-lstm | dec-aoa | dec-lstm-aoa)");
}

void ModelConfig::validate() const {
  if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (model_dim < 2) throw ConfigError("model_dim must be >= 2");
  if (vocab_size <= static_cast<std::size_t>(token::kEos)) {
    throw ConfigError("vocab_size must exceed the reserved tokens, got " + std::to_string(vocab_size));
  }
  if (encoder_heads == 0 || model_dim % encoder_heads != 0) {
    throw ConfigError("encoder_heads " + std::to_string(encoder_heads) + " must divide model_dim " +
                      std::to_string(model_dim));
  }
  if (decoder_heads == 0 || model_dim % decoder_heads != 0) {
    throw ConfigError("decoder_heads " + std::to_string(decoder_heads) + " must divide model_dim " +
                      std::to_string(model_dim));
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (!(ln_eps > 0.0)) throw ConfigError("ln_eps must be positive");
  if (decoder == DecoderScheme::LstmAoA && !experimental) {
    throw ConfigError(
        "decoder scheme dec-lstm-aoa (AoA stacked on an LSTM context head) is refused without "
        "--experimental: this stacking is reported to give an unstable training process");
  }
}

// ---------------------------------------------------------------------------

LstmParams LstmParams::init(std::size_t in, std::size_t hidden, std::mt19937_64& rng) {
  LstmParams p;
  p.W_x = uniform_fan_in(Shape{4 * hidden, in}, in, rng);
  p.W_h = uniform_fan_in(Shape{4 * hidden, hidden}, hidden, rng);
  p.b = Tensor(Shape{4 * hidden});
  auto b = p.b.mutable_data();
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
  return p;
}

void LstmParams::collect(const std::string& prefix, ParameterSet& out) const {
  out.add(prefix + "W_x", W_x);
  out.add(prefix + "W_h", W_h);
  out.add(prefix + "b", b);
}

LstmOutput lstm_cell(const LstmParams& p, const Tensor& x, const Tensor& h, const Tensor& m) {
  const std::size_t hd = p.hidden();
  Tensor gates = add(linear(x, p.W_x, p.b), linear(h, p.W_h));
  Tensor in = sigmoid(slice_cols(gates, 0, hd));
  Tensor forget = sigmoid(slice_cols(gates, hd, 2 * hd));
  Tensor out = sigmoid(slice_cols(gates, 2 * hd, 3 * hd));
  Tensor cand = tanh(slice_cols(gates, 3 * hd, 4 * hd));
  Tensor m_next = add(elem_mul(forget, m), elem_mul(in, cand));
  Tensor h_next = elem_mul(out, tanh(m_next));
  return {h_next, m_next};
}

// ---------------------------------------------------------------------------

CaptionModel CaptionModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  CaptionModel model;
  model.config_ = config;
  std::mt19937_64 rng(seed);
  const std::size_t d = config.model_dim;
  const std::size_t e = config.embed();
  const std::size_t v = config.vocab_size;

  auto& enc = model.encoder_;
  enc.W_proj = uniform_fan_in(Shape{d, config.feature_dim}, config.feature_dim, rng);
  enc.b_proj = Tensor(Shape{d});
  for (std::size_t l = 0; l < config.layers(); ++l) {
    RefinerLayerParams layer;
    layer.W_Q = uniform_fan_in(Shape{d, d}, d, rng);
    layer.W_K = uniform_fan_in(Shape{d, d}, d, rng);
    layer.W_V = uniform_fan_in(Shape{d, d}, d, rng);
    layer.ln_gain = Tensor(Shape{d}, 1.0);
    layer.ln_bias = Tensor(Shape{d});
    if (config.encoder == EncoderVariant::RefineAoA) {
      layer.aoa = AoAParams::init(d, rng);
    } else {
      const std::size_t f = config.ff();
      layer.ff = FeedForwardParams{uniform_fan_in(Shape{f, d}, d, rng), Tensor(Shape{f}),
                                   uniform_fan_in(Shape{d, f}, f, rng), Tensor(Shape{d})};
      layer.ff_ln_gain = Tensor(Shape{d}, 1.0);
      layer.ff_ln_bias = Tensor(Shape{d});
    }
    enc.layers.push_back(std::move(layer));
  }

  auto& dec = model.decoder_;
  dec.W_e = uniform_fan_in(Shape{e, v}, e, rng);
  dec.lstm = LstmParams::init(e + d, d, rng);
  dec.W_Q = uniform_fan_in(Shape{d, d}, d, rng);
  dec.W_K = uniform_fan_in(Shape{d, d}, d, rng);
  dec.W_V = uniform_fan_in(Shape{d, d}, d, rng);
  switch (config.decoder) {
    case DecoderScheme::Base:
      dec.W_c = uniform_fan_in(Shape{d, 2 * d}, 2 * d, rng);
      dec.b_c = Tensor(Shape{d});
      break;
    case DecoderScheme::Lstm:
      dec.ctx_lstm = LstmParams::init(2 * d, d, rng);
      break;
    case DecoderScheme::AoA:
      dec.aoa = AoAParams::init(d, rng);
      break;
    case DecoderScheme::LstmAoA:
      dec.ctx_lstm = LstmParams::init(2 * d, d, rng);
      dec.aoa = AoAParams::init(d, rng);
      break;
  }
  dec.W_p = uniform_fan_in(Shape{d, v}, d, rng);
  model.register_parameters();
  return model;
}

void CaptionModel::register_parameters() {
  params_ = ParameterSet{};
  params_.add("encoder.proj.W", encoder_.W_proj);
  params_.add("encoder.proj.b", encoder_.b_proj);
  for (std::size_t l = 0; l < encoder_.layers.size(); ++l) {
    const auto& layer = encoder_.layers[l];
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    params_.add(p + "W_Q", layer.W_Q);
    params_.add(p + "W_K", layer.W_K);
    params_.add(p + "W_V", layer.W_V);
    if (layer.aoa) layer.aoa->collect(p + "aoa.", params_);
    params_.add(p + "ln.gain", layer.ln_gain);
    params_.add(p + "ln.bias", layer.ln_bias);
    if (layer.ff) {
      params_.add(p + "ff.W1", layer.ff->W1);
      params_.add(p + "ff.b1", layer.ff->b1);
      params_.add(p + "ff.W2", layer.ff->W2);
      params_.add(p + "ff.b2", layer.ff->b2);
      params_.add(p + "ff_ln.gain", layer.ff_ln_gain);
      params_.add(p + "ff_ln.bias", layer.ff_ln_bias);
    }
  }
  params_.add("decoder.W_e", decoder_.W_e);
  decoder_.lstm.collect("decoder.lstm.", params_);
  params_.add("decoder.att.W_Q", decoder_.W_Q);
  params_.add("decoder.att.W_K", decoder_.W_K);
  params_.add("decoder.att.W_V", decoder_.W_V);
  if (decoder_.W_c.defined()) {
    params_.add("decoder.ctx.W", decoder_.W_c);
    params_.add("decoder.ctx.b", decoder_.b_c);
  }
  if (decoder_.ctx_lstm) decoder_.ctx_lstm->collect("decoder.ctx_lstm.", params_);
  if (decoder_.aoa) decoder_.aoa->collect("decoder.aoa.", params_);
  params_.add("decoder.W_p", decoder_.W_p);
}

void CaptionModel::zero_parameters() {
  for (const auto& e : params_.entries()) {
    Tensor t = e.tensor;
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), 0.0);
  }
}

// ---------------------------------------------------------------------------

Tensor project_features(const Tensor& raw, const Tensor& W_proj, const Tensor& b_proj) {
  return linear(raw, W_proj, b_proj);
}

RefineOutput refine_layer(const RefinerLayerParams& p, const Tensor& a, std::size_t heads,
                          double eps) {
  Tensor q = linear(a, p.W_Q);
  Tensor k = linear(a, p.W_K);
  Tensor v = linear(a, p.W_V);
  if (p.aoa) {
    AoAResult r = aoa(*p.aoa, multi_head_fn(heads), q, k, v);
    return {layer_norm(add(a, r.value), p.ln_gain, p.ln_bias, eps), std::move(r.trace), r.gate};
  }
  if (!p.ff) throw ConfigError("refining layer has neither AoA nor feed-forward parameters");
  AttentionResult att = multi_head(q, k, v, heads);
  Tensor mid = layer_norm(add(a, att.output), p.ln_gain, p.ln_bias, eps);
  Tensor hidden = relu(linear(mid, p.ff->W1, p.ff->b1));
  Tensor ff = linear(hidden, p.ff->W2, p.ff->b2);
  return {layer_norm(add(mid, ff), p.ff_ln_gain, p.ff_ln_bias, eps), std::move(att.trace), {}};
}

Tensor encode(const CaptionModel& model, const Tensor& raw) {
  const auto& cfg = model.config();
  if (raw.rank() != 2 || raw.rows() == 0) {
    throw DimensionError("features must be a non-empty k x D_in matrix, got " + raw.shape().str());
  }
  if (raw.cols() != cfg.feature_dim) {
    throw DimensionError("feature width " + std::to_string(raw.cols()) + " but model expects " +
                         std::to_string(cfg.feature_dim));
  }
  const auto& enc = model.encoder();
  Tensor a = project_features(raw, enc.W_proj, enc.b_proj);
  for (const auto& layer : enc.layers) a = refine_layer(layer, a, cfg.encoder_heads, cfg.ln_eps).value;
  return a;
}

// ---------------------------------------------------------------------------

DecoderState DecoderState::initial(const ModelConfig& config) {
  const std::size_t d = config.model_dim;
  DecoderState s;
  s.h = Tensor(Shape{d});
  s.m = Tensor(Shape{d});
  s.c_prev = Tensor(Shape{d});
  if (config.decoder == DecoderScheme::Lstm || config.decoder == DecoderScheme::LstmAoA) {
    s.ctx_h = Tensor(Shape{d});
    s.ctx_m = Tensor(Shape{d});
  }
  return s;
}

std::string DecoderState::to_json() const {
  nlohmann::ordered_json j;
  j["t"] = t;
  j["h"] = h.to_vector();
  j["m"] = m.to_vector();
  j["c_prev"] = c_prev.to_vector();
  if (ctx_h.defined()) {
    j["ctx_h"] = ctx_h.to_vector();
    j["ctx_m"] = ctx_m.to_vector();
  }
  return j.dump();
}

DecoderState DecoderState::from_json(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  DecoderState s;
  s.t = j.at("t").get<std::size_t>();
  s.h = Tensor::vector(j.at("h").get<std::vector<double>>());
  s.m = Tensor::vector(j.at("m").get<std::vector<double>>());
  s.c_prev = Tensor::vector(j.at("c_prev").get<std::vector<double>>());
  if (j.contains("ctx_h")) {
    s.ctx_h = Tensor::vector(j.at("ctx_h").get<std::vector<double>>());
    s.ctx_m = Tensor::vector(j.at("ctx_m").get<std::vector<double>>());
  }
  return s;
}

DecoderMemory prepare_memory(const CaptionModel& model, const Tensor& encoded) {
  const auto& dec = model.decoder();
  if (encoded.rows() == 0) throw ContractError("decoder memory needs at least one feature");
  return {mean_rows(encoded), linear(encoded, dec.W_K), linear(encoded, dec.W_V)};
}

StepOutput decoder_step(const CaptionModel& model, const DecoderState& state, int word,
                        const DecoderMemory& memory, std::mt19937_64* dropout_rng) {
  const auto& cfg = model.config();
  const auto& dec = model.decoder();
  if (word < 0 || static_cast<std::size_t>(word) >= cfg.vocab_size) {
    throw ContractError("token " + std::to_string(word) + " outside vocabulary of size " +
                        std::to_string(cfg.vocab_size));
  }
  Tensor x = concat_cols({column(dec.W_e, static_cast<std::size_t>(word)), add(memory.mean, state.c_prev)});
  LstmOutput lstm = lstm_cell(dec.lstm, x, state.h, state.m);
  Tensor query = linear(lstm.h, dec.W_Q);
  AttentionResult att = multi_head(query, memory.keys, memory.values, cfg.decoder_heads);

  StepOutput out;
  out.state.h = lstm.h;
  out.state.m = lstm.m;
  out.state.t = state.t + 1;
  Tensor context;
  switch (cfg.decoder) {
    case DecoderScheme::Base:
      context = linear(concat_cols({lstm.h, att.output}), dec.W_c, dec.b_c);
      break;
    case DecoderScheme::Lstm: {
      LstmOutput c = lstm_cell(*dec.ctx_lstm, concat_cols({lstm.h, att.output}), state.ctx_h, state.ctx_m);
      out.state.ctx_h = c.h;
      out.state.ctx_m = c.m;
      context = c.h;
      break;
    }
    case DecoderScheme::AoA: {
      GatedOutput g = aoa_gate_detailed(*dec.aoa, query, att.output);
      context = g.value;
      out.gate = g.gate;
      break;
    }
    case DecoderScheme::LstmAoA: {
      LstmOutput c = lstm_cell(*dec.ctx_lstm, concat_cols({lstm.h, att.output}), state.ctx_h, state.ctx_m);
      out.state.ctx_h = c.h;
      out.state.ctx_m = c.m;
      GatedOutput g = aoa_gate_detailed(*dec.aoa, c.h, att.output);
      context = g.value;
      out.gate = g.gate;
      break;
    }
  }
  out.state.c_prev = context;
  if (dropout_rng && cfg.dropout > 0.0) context = dropout(context, cfg.dropout, *dropout_rng);
  out.logits = matmul(context, dec.W_p);
  out.trace = std::move(att.trace);
  return out;
}

}  // namespace aoa
