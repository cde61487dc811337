#include "aoa/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "json.hpp"

#include "aoa/errors.hpp"
#include "aoa/ops.hpp"

namespace aoa {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr_xe > 0) || !(lr_scst > 0)) throw ConfigError("learning rates must be positive");
  if (!(lr_xe_decay > 0) || !(lr_scst_decay > 0)) throw ConfigError("learning-rate decays must be positive");
  if (lr_xe_every < 1 || ss_every < 1) throw ConfigError("schedule periods must be >= 1");
  if (ss_increment < 0 || ss_cap < 0 || ss_cap > 1) {
    throw ConfigError("scheduled sampling increment must be >= 0 and cap in [0, 1]");
  }
  if (plateau_patience < 1) throw ConfigError("train.plateau_patience must be >= 1");
  if (grad_clip < 0) throw ConfigError("train.grad_clip must be >= 0");
  if (max_len < 1) throw ConfigError("train.max_len must be >= 1");
}

double xe_learning_rate(const TrainConfig& c, std::size_t epoch) {
  return c.lr_xe * std::pow(c.lr_xe_decay, static_cast<double>(epoch / c.lr_xe_every));
}

double scheduled_sampling_prob(const TrainConfig& c, std::size_t epoch) {
  return std::min(c.ss_cap, c.ss_increment * static_cast<double>(epoch / c.ss_every));
}

PlateauSchedule::PlateauSchedule(double lr, double factor, std::size_t patience)
    : lr_(lr), factor_(factor), patience_(patience) {}

double PlateauSchedule::observe(double score) {
  if (!seen_ || score > best_) {
    seen_ = true;
    best_ = score;
    stale_ = 0;
  } else if (++stale_ >= patience_) {
    lr_ *= factor_;
    stale_ = 0;
  }
  return lr_;
}

// ---------------------------------------------------------------------------

AdamState AdamState::init(const ParameterSet& params) {
  AdamState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.tensor.numel(), 0.0);
    s.v.emplace_back(e.tensor.numel(), 0.0);
  }
  return s;
}

void adam_update(AdamState& state, const ParameterSet& params, const GradientBuffers& grads, double lr) {
  if (state.m.size() != params.size() || grads.size() != params.size()) {
    throw DimensionError("optimizer state does not match the parameter set");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params.entries()[i].tensor;
    auto w = p.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    if (g.size() != w.size() || m.size() != w.size()) {
      throw DimensionError("gradient size mismatch for " + params.entries()[i].name);
    }
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
}

double clip_global_norm(GradientBuffers& grads, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (double g : grads[i]) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

// ---------------------------------------------------------------------------

namespace {

void check_target(const std::vector<int>& target) {
  if (target.empty()) throw ContractError("empty target sequence");
  if (target.back() != token::kEos) throw ContractError("target must end with EOS");
}

int sample_token(std::span<const double> logits, std::mt19937_64& rng) {
  double mx = logits[0];
  for (double x : logits) mx = std::max(mx, x);
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - mx);
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng) * s;
  double cum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    cum += p[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(p.size() - 1);
}

}  // namespace

Tensor xe_loss(const CaptionModel& model, const DecoderMemory& memory, const std::vector<int>& target) {
  check_target(target);
  return scale(score_sequence(model, memory, target), -1.0);
}

Tensor xe_loss(const CaptionModel& model, const Tensor& features, const std::vector<int>& target) {
  check_target(target);
  return xe_loss(model, prepare_memory(model, encode(model, features)), target);
}

Tensor scheduled_sampling_loss(const CaptionModel& model, const DecoderMemory& memory,
                               const std::vector<int>& target, double ss_prob, std::mt19937_64& rng) {
  check_target(target);
  if (ss_prob < 0.0 || ss_prob > 1.0) throw ContractError("ss_prob must be in [0, 1]");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  DecoderState state = DecoderState::initial(model.config());
  int word = token::kBos;
  Tensor total;
  for (std::size_t t = 0; t < target.size(); ++t) {
    StepOutput step = decoder_step(model, state, word, memory, &rng);
    const int y = target[t];
    if (y < 0 || static_cast<std::size_t>(y) >= step.logits.numel()) {
      throw ContractError("target token " + std::to_string(y) + " outside vocabulary");
    }
    Tensor term = pick(log_softmax_rows(step.logits), static_cast<std::size_t>(y));
    total = total.defined() ? add(total, term) : term;
    state = std::move(step.state);
    word = y;
    if (ss_prob > 0.0 && coin(rng) < ss_prob) word = sample_token(step.logits.data(), rng);
  }
  return scale(total, -1.0);
}

Tensor scheduled_sampling_loss(const CaptionModel& model, const Tensor& features,
                               const std::vector<int>& target, double ss_prob, std::mt19937_64& rng) {
  return scheduled_sampling_loss(model, prepare_memory(model, encode(model, features)), target, ss_prob,
                                 rng);
}

Tensor scst_pseudo_loss(const Tensor& sample_log_prob, double reward_sampled, double reward_greedy) {
  return scale(sample_log_prob, -(reward_sampled - reward_greedy));
}

ScstStep scst_step(const CaptionModel& model, const Tensor& features, const std::string& image_id,
                   const RewardFn& reward, std::size_t max_len, std::mt19937_64& rng) {
  DecoderMemory memory = prepare_memory(model, encode(model, features));
  ScstStep out;
  SampledSequence s = decode_sample(model, memory, max_len, rng);
  out.sampled = s.tokens;
  out.greedy = decode_greedy(model, memory, max_len);
  try {
    out.reward_sampled = reward(out.sampled);
    out.reward_greedy = reward(out.greedy);
  } catch (const std::exception& e) {
    throw DataError("reward failed for image " + image_id + ": " + e.what());
  }
  out.loss = scst_pseudo_loss(s.log_prob, out.reward_sampled, out.reward_greedy);
  return out;
}

// ---------------------------------------------------------------------------

std::string to_string(Phase p) { return p == Phase::Xe ? "xe" : "scst"; }

std::string EpochRecord::to_json() const {
  nlohmann::ordered_json j;
  j["epoch"] = epoch;
  j["phase"] = to_string(phase);
  j["lr"] = lr;
  j["ss_prob"] = ss_prob;
  j["train_loss"] = train_loss;
  if (phase == Phase::Scst) {
    j["reward_sampled"] = reward_sampled;
    j["reward_greedy"] = reward_greedy;
  }
  j["val"] = val ? nlohmann::ordered_json::parse(val->to_json()) : nlohmann::ordered_json();
  return j.dump();
}

std::mt19937_64 example_rng(std::uint64_t seed, std::size_t phase, std::size_t epoch, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(phase), static_cast<std::uint32_t>(epoch),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::vector<Tokens> reference_tokens(const CaptionedImage& image) {
  std::vector<Tokens> refs;
  refs.reserve(image.captions.size());
  for (const auto& c : image.captions) refs.push_back(tokenize(c));
  return refs;
}

CorpusReport evaluate(const CaptionModel& model, const Vocabulary& vocab,
                      const std::vector<CaptionedImage>& images, std::size_t beam_size,
                      std::size_t max_len) {
  std::vector<EvalItem> items(images.size());
  std::vector<std::exception_ptr> errors(images.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      NoGradScope no_grad;
      const auto ids = beam_size <= 1 ? decode_greedy(model, images[i].features, max_len)
                                      : decode_beam(model, images[i].features, beam_size, max_len);
      items[i] = EvalItem{images[i].image_id, vocab.decode(ids), reference_tokens(images[i])};
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return corpus_scores(items);
}

namespace {

constexpr std::size_t kShuffleStream = static_cast<std::size_t>(-1);

struct XeExample {
  std::size_t image;
  std::vector<int> target;
};

// Runs `body(i, buffers[i])` for every example of a batch on worker threads,
// then sums the buffers in example order into `total`.
template <typename Body>
void fan_out(const ParameterSet& params, std::vector<GradientBuffers>& buffers, std::size_t count,
             GradientBuffers& total, Body body) {
  std::vector<std::exception_ptr> errors(count);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < count; ++i) {
    try {
      buffers[i].zero();
      Tape tape;
      GradientSink sink = buffers[i].sink(params);
      tape.set_sink(&sink);
      Tensor loss = body(i);
      tape.backward(loss);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  total.zero();
  for (std::size_t i = 0; i < count; ++i) total.add(buffers[i]);
}

void check_finite(const ParameterSet& params, const GradientBuffers& grads) {
  for (std::size_t i = 0; i < params.size(); ++i)
    for (double g : grads[i])
      if (!std::isfinite(g)) throw NumericError(params.entries()[i].name, "non-finite gradient in parameter");
}

}  // namespace

std::vector<EpochRecord> run_training(const TrainConfig& config, CaptionModel& model,
                                      const TrainingData& data, Phase phase,
                                      const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.empty()) throw DataError("training split is empty");
  if (data.vocab.size() != model.config().vocab_size) {
    throw ConfigError("vocabulary has " + std::to_string(data.vocab.size()) + " words, model expects " +
                      std::to_string(model.config().vocab_size));
  }
  const ParameterSet& params = model.parameters();
  const std::size_t phase_id = phase == Phase::Xe ? 0 : 1;
  const std::size_t epochs = phase == Phase::Xe ? config.xe_epochs : config.scst_epochs;

  std::vector<XeExample> xe_examples;
  std::vector<std::vector<Tokens>> train_refs;
  CiderCorpusStats cider_stats;
  if (phase == Phase::Xe) {
    for (std::size_t i = 0; i < data.train.size(); ++i) {
      const auto& caps = data.train[i].captions;
      const std::size_t n = config.captions_per_image ? std::min(config.captions_per_image, caps.size())
                                                      : caps.size();
      for (std::size_t c = 0; c < n; ++c) xe_examples.push_back({i, data.vocab.encode(tokenize(caps[c]))});
    }
  } else {
    for (const auto& img : data.train) train_refs.push_back(reference_tokens(img));
    cider_stats = CiderCorpusStats::build(train_refs);
  }
  const std::size_t n_examples = phase == Phase::Xe ? xe_examples.size() : data.train.size();
  if (n_examples == 0) throw DataError("training split has no captions");

  AdamState adam = AdamState::init(params);
  PlateauSchedule plateau(config.lr_scst, config.lr_scst_decay, config.plateau_patience);
  std::vector<GradientBuffers> buffers(std::min(config.batch_size, n_examples), GradientBuffers(params));
  GradientBuffers total(params);
  std::vector<double> losses(buffers.size()), rs(buffers.size()), rg(buffers.size());
  std::vector<std::size_t> tokens(buffers.size());

  std::vector<EpochRecord> log;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.phase = phase;
    rec.lr = phase == Phase::Xe ? xe_learning_rate(config, epoch) : plateau.lr();
    rec.ss_prob = phase == Phase::Xe ? scheduled_sampling_prob(config, epoch) : 0.0;

    std::vector<std::size_t> order(n_examples);
    std::iota(order.begin(), order.end(), 0);
    auto shuffle_rng = example_rng(config.seed, phase_id, epoch, kShuffleStream);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0, rs_sum = 0.0, rg_sum = 0.0;
    std::size_t token_sum = 0;
    for (std::size_t start = 0; start < n_examples; start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, n_examples - start);
      fan_out(params, buffers, count, total, [&](std::size_t i) -> Tensor {
        const std::size_t ex = order[start + i];
        auto rng = example_rng(config.seed, phase_id, epoch, ex);
        if (phase == Phase::Xe) {
          const auto& e = xe_examples[ex];
          const Tensor& features = data.train[e.image].features;
          Tensor loss = rec.ss_prob > 0.0 || model.config().dropout > 0.0
                            ? scheduled_sampling_loss(model, features, e.target, rec.ss_prob, rng)
                            : xe_loss(model, features, e.target);
          losses[i] = loss.item();
          tokens[i] = e.target.size();
          return scale(loss, 1.0 / static_cast<double>(count));
        }
        const auto& img = data.train[ex];
        const auto& refs = train_refs[ex];
        RewardFn reward = [&](const std::vector<int>& ids) {
          return cider_d(data.vocab.decode(ids), refs, cider_stats);
        };
        ScstStep s = scst_step(model, img.features, img.image_id, reward, config.max_len, rng);
        losses[i] = s.loss.item();
        rs[i] = s.reward_sampled;
        rg[i] = s.reward_greedy;
        return scale(s.loss, 1.0 / static_cast<double>(count));
      });
      for (std::size_t i = 0; i < count; ++i) {
        loss_sum += losses[i];
        if (phase == Phase::Xe) {
          token_sum += tokens[i];
        } else {
          rs_sum += rs[i];
          rg_sum += rg[i];
        }
      }
      check_finite(params, total);
      if (config.grad_clip > 0) clip_global_norm(total, config.grad_clip);
      adam_update(adam, params, total, rec.lr);
    }

    if (phase == Phase::Xe) {
      rec.train_loss = loss_sum / static_cast<double>(token_sum);
    } else {
      rec.train_loss = loss_sum / static_cast<double>(n_examples);
      rec.reward_sampled = rs_sum / static_cast<double>(n_examples);
      rec.reward_greedy = rg_sum / static_cast<double>(n_examples);
    }
    if (!data.val.empty()) rec.val = evaluate(model, data.vocab, data.val, 1, config.max_len);
    if (phase == Phase::Scst && rec.val) plateau.observe(rec.val->cider_d);
    log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return log;
}

}  // namespace aoa
