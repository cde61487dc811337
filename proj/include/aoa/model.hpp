#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "aoa/aoa.hpp"
#include "aoa/attention.hpp"
#include "aoa/parameters.hpp"
#include "aoa/tensor.hpp"

namespace aoa {

// Reserved vocabulary indices.
namespace token {
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kReserved = 4;
}  // namespace token

enum class EncoderVariant { Base, RefineNoAoA, RefineAoA };
enum class DecoderScheme { Base, Lstm, AoA, LstmAoA };

std::string to_string(EncoderVariant v);
std::string to_string(DecoderScheme s);
EncoderVariant parse_encoder_variant(const std::string& s);
DecoderScheme parse_decoder_scheme(const std::string& s);

struct ModelConfig {
  std::size_t feature_dim = 16;  // D_in
  std::size_t model_dim = 64;    // D
  std::size_t embed_dim = 0;     // E; 0 means E = D
  std::size_t vocab_size = 0;
  std::size_t encoder_heads = 2;
  std::size_t decoder_heads = 2;
  std::size_t refine_layers = 2;  // N; ignored by EncoderVariant::Base
  std::size_t ff_dim = 0;         // refine-no-aoa feed-forward width; 0 means 2D
  EncoderVariant encoder = EncoderVariant::RefineAoA;
  DecoderScheme decoder = DecoderScheme::AoA;
  bool experimental = false;
  double dropout = 0.0;
  double ln_eps = 1e-5;

  std::size_t embed() const { return embed_dim ? embed_dim : model_dim; }
  std::size_t ff() const { return ff_dim ? ff_dim : 2 * model_dim; }
  std::size_t layers() const { return encoder == EncoderVariant::Base ? 0 : refine_layers; }
  // Throws ConfigError for impossible or refused combinations.
  void validate() const;
};

struct LstmParams {
  Tensor W_x;  // 4H x in, gate order: input, forget, output, candidate
  Tensor W_h;  // 4H x H
  Tensor b;    // 4H, forget slice initialized to 1

  std::size_t hidden() const { return W_h.cols(); }
  static LstmParams init(std::size_t in, std::size_t hidden, std::mt19937_64& rng);
  void collect(const std::string& prefix, ParameterSet& out) const;
};

struct LstmOutput {
  Tensor h, m;
};

LstmOutput lstm_cell(const LstmParams& p, const Tensor& x, const Tensor& h, const Tensor& m);

struct FeedForwardParams {
  Tensor W1, b1, W2, b2;
};

struct RefinerLayerParams {
  Tensor W_Q, W_K, W_V;
  std::optional<AoAParams> aoa;
  Tensor ln_gain, ln_bias;
  // Only for EncoderVariant::RefineNoAoA: attention sublayer, then a
  // feed-forward sublayer with its own residual and layer norm.
  std::optional<FeedForwardParams> ff;
  Tensor ff_ln_gain, ff_ln_bias;
};

struct EncoderParams {
  Tensor W_proj, b_proj;
  std::vector<RefinerLayerParams> layers;
};

struct DecoderParams {
  Tensor W_e;  // E x |vocab|
  LstmParams lstm;
  Tensor W_Q, W_K, W_V;
  Tensor W_c, b_c;                    // Base: c = [h; a] W_c^T + b_c
  std::optional<LstmParams> ctx_lstm;  // Lstm, LstmAoA
  std::optional<AoAParams> aoa;        // AoA, LstmAoA
  Tensor W_p;                          // D x |vocab|
};

class CaptionModel {
 public:
  CaptionModel() = default;
  // Randomly initialized model. Throws ConfigError on invalid configs.
  static CaptionModel init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const EncoderParams& encoder() const { return encoder_; }
  const DecoderParams& decoder() const { return decoder_; }
  EncoderParams& encoder() { return encoder_; }
  DecoderParams& decoder() { return decoder_; }
  const ParameterSet& parameters() const { return params_; }

  // Sets every parameter, forget-gate biases included, to zero.
  void zero_parameters();

 private:
  void register_parameters();

  ModelConfig config_;
  EncoderParams encoder_;
  DecoderParams decoder_;
  ParameterSet params_;
};

// ---- encoder --------------------------------------------------------------

Tensor project_features(const Tensor& raw, const Tensor& W_proj, const Tensor& b_proj);

struct RefineOutput {
  Tensor value;
  AttentionTrace trace;
  Tensor gate;  // undefined for the feed-forward variant
};

RefineOutput refine_layer(const RefinerLayerParams& p, const Tensor& a, std::size_t heads,
                          double eps);

// Projection followed by the configured number of refining layers.
Tensor encode(const CaptionModel& model, const Tensor& raw);

// ---- decoder --------------------------------------------------------------

struct DecoderState {
  Tensor h, m;          // LSTM hidden and cell
  Tensor c_prev;        // previous context vector
  Tensor ctx_h, ctx_m;  // context LSTM state (Lstm / LstmAoA schemes)
  std::size_t t = 0;

  static DecoderState initial(const ModelConfig& config);
  std::string to_json() const;
  static DecoderState from_json(const std::string& text);
};

// Image-dependent decoder inputs computed once per image.
struct DecoderMemory {
  Tensor mean;    // mean of encoded features
  Tensor keys;    // A W_K^T
  Tensor values;  // A W_V^T
};

DecoderMemory prepare_memory(const CaptionModel& model, const Tensor& encoded);

struct StepOutput {
  Tensor logits;
  DecoderState state;
  AttentionTrace trace;
  Tensor gate;  // AoA gate when the scheme has one
};

StepOutput decoder_step(const CaptionModel& model, const DecoderState& state, int word,
                        const DecoderMemory& memory, std::mt19937_64* dropout_rng = nullptr);

// ---- decoding -------------------------------------------------------------

// Tokens exclude BOS and the terminating EOS.
std::vector<int> decode_greedy(const CaptionModel& model, const DecoderMemory& memory,
                               std::size_t max_len);
std::vector<int> decode_greedy(const CaptionModel& model, const Tensor& features,
                               std::size_t max_len);

struct SampledSequence {
  std::vector<int> tokens;
  bool ended = false;  // terminated by EOS rather than max_len
  Tensor log_prob;     // differentiable sum of per-step log-probabilities
};

SampledSequence decode_sample(const CaptionModel& model, const DecoderMemory& memory,
                              std::size_t max_len, std::mt19937_64& rng);

// Length-normalized beam search; the greedy hypothesis always competes.
std::vector<int> decode_beam(const CaptionModel& model, const DecoderMemory& memory,
                             std::size_t beam_size, std::size_t max_len);
std::vector<int> decode_beam(const CaptionModel& model, const Tensor& features,
                             std::size_t beam_size, std::size_t max_len);

// Sum of log p(target_t) under teacher forcing, starting from BOS.
Tensor score_sequence(const CaptionModel& model, const DecoderMemory& memory,
                      const std::vector<int>& targets);

// Per-step record for attention tracing.
struct TraceStep {
  int token;
  AttentionTrace trace;
  Tensor gate;
};

std::vector<TraceStep> decode_greedy_traced(const CaptionModel& model, const Tensor& features,
                                            std::size_t max_len);

}  // namespace aoa
