#include <algorithm>
#include <cmath>
#include <limits>

#include "aoa/errors.hpp"
#include "aoa/model.hpp"
#include "aoa/ops.hpp"

namespace aoa {

namespace {

int argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return static_cast<int>(best);
}

std::vector<double> log_softmax_values(const Tensor& logits) {
  std::vector<double> out(logits.numel());
  const auto v = logits.data();
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  const double lse = mx + std::log(s);
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] - lse;
  return out;
}

struct ScoredSequence {
  std::vector<int> tokens;
  bool ended = false;
  double log_prob = 0.0;

  double normalized() const {
    const std::size_t len = tokens.size() + (ended ? 1 : 0);
    return log_prob / static_cast<double>(std::max<std::size_t>(len, 1));
  }
};

ScoredSequence greedy_scored(const CaptionModel& model, const DecoderMemory& memory,
                             std::size_t max_len) {
  NoGradScope no_grad;
  ScoredSequence seq;
  DecoderState state = DecoderState::initial(model.config());
  int word = token::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    StepOutput step = decoder_step(model, state, word, memory);
    const int next = argmax(step.logits.data());
    seq.log_prob += log_softmax_values(step.logits)[static_cast<std::size_t>(next)];
    if (next == token::kEos) {
      seq.ended = true;
      break;
    }
    seq.tokens.push_back(next);
    state = std::move(step.state);
    word = next;
  }
  return seq;
}

}  // namespace

std::vector<int> decode_greedy(const CaptionModel& model, const DecoderMemory& memory,
                               std::size_t max_len) {
  if (max_len < 1) throw ContractError("max_len must be >= 1");
  return greedy_scored(model, memory, max_len).tokens;
}

std::vector<int> decode_greedy(const CaptionModel& model, const Tensor& features,
                               std::size_t max_len) {
  NoGradScope no_grad;
  return decode_greedy(model, prepare_memory(model, encode(model, features)), max_len);
}

std::vector<TraceStep> decode_greedy_traced(const CaptionModel& model, const Tensor& features,
                                            std::size_t max_len) {
  NoGradScope no_grad;
  DecoderMemory memory = prepare_memory(model, encode(model, features));
  std::vector<TraceStep> steps;
  DecoderState state = DecoderState::initial(model.config());
  int word = token::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    StepOutput step = decoder_step(model, state, word, memory);
    const int next = argmax(step.logits.data());
    steps.push_back(TraceStep{next, step.trace, step.gate});
    if (next == token::kEos) break;
    state = std::move(step.state);
    word = next;
  }
  return steps;
}

SampledSequence decode_sample(const CaptionModel& model, const DecoderMemory& memory,
                              std::size_t max_len, std::mt19937_64& rng) {
  if (max_len < 1) throw ContractError("max_len must be >= 1");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SampledSequence out;
  DecoderState state = DecoderState::initial(model.config());
  int word = token::kBos;
  for (std::size_t t = 0; t < max_len; ++t) {
    StepOutput step = decoder_step(model, state, word, memory);
    Tensor logp = log_softmax_rows(step.logits);
    const auto lp = logp.data();
    const double u = unit(rng);
    double cum = 0.0;
    int next = -1;
    for (std::size_t v = 0; v < lp.size(); ++v) {
      cum += std::exp(lp[v]);
      if (u < cum) {
        next = static_cast<int>(v);
        break;
      }
    }
    // Rounding can leave the cumulative sum just below u.
    if (next < 0) {
      for (std::size_t v = lp.size(); v-- > 0;) {
        if (std::isfinite(lp[v]) && std::exp(lp[v]) > 0.0) {
          next = static_cast<int>(v);
          break;
        }
      }
    }
    Tensor term = pick(logp, static_cast<std::size_t>(next));
    out.log_prob = out.log_prob.defined() ? add(out.log_prob, term) : term;
    if (next == token::kEos) {
      out.ended = true;
      break;
    }
    out.tokens.push_back(next);
    state = std::move(step.state);
    word = next;
  }
  return out;
}

Tensor score_sequence(const CaptionModel& model, const DecoderMemory& memory,
                      const std::vector<int>& targets) {
  if (targets.empty()) throw ContractError("cannot score an empty target sequence");
  DecoderState state = DecoderState::initial(model.config());
  int word = token::kBos;
  Tensor total;
  for (int target : targets) {
    StepOutput step = decoder_step(model, state, word, memory);
    if (target < 0 || static_cast<std::size_t>(target) >= step.logits.numel()) {
      throw ContractError("target token " + std::to_string(target) + " outside vocabulary");
    }
    Tensor term = pick(log_softmax_rows(step.logits), static_cast<std::size_t>(target));
    total = total.defined() ? add(total, term) : term;
    state = std::move(step.state);
    word = target;
  }
  return total;
}

std::vector<int> decode_beam(const CaptionModel& model, const DecoderMemory& memory,
                             std::size_t beam_size, std::size_t max_len) {
  if (beam_size < 1) throw ContractError("beam_size must be >= 1");
  if (max_len < 1) throw ContractError("max_len must be >= 1");
  NoGradScope no_grad;

  struct Hypothesis {
    ScoredSequence seq;
    DecoderState state;
    int word;
  };
  struct Candidate {
    double score;
    std::size_t beam;
    int token;
  };

  std::vector<Hypothesis> alive{{ScoredSequence{}, DecoderState::initial(model.config()), token::kBos}};
  std::vector<ScoredSequence> finished;
  for (std::size_t t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<Candidate> candidates;
    std::vector<StepOutput> steps;
    steps.reserve(alive.size());
    for (std::size_t b = 0; b < alive.size(); ++b) {
      steps.push_back(decoder_step(model, alive[b].state, alive[b].word, memory));
      const auto lp = log_softmax_values(steps.back().logits);
      for (std::size_t v = 0; v < lp.size(); ++v)
        candidates.push_back({alive[b].seq.log_prob + lp[v], b, static_cast<int>(v)});
    }
    const std::size_t keep = std::min(beam_size, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        if (a.beam != b.beam) return a.beam < b.beam;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      ScoredSequence seq = alive[c.beam].seq;
      seq.log_prob = c.score;
      if (c.token == token::kEos) {
        seq.ended = true;
        finished.push_back(std::move(seq));
      } else {
        seq.tokens.push_back(c.token);
        next.push_back({std::move(seq), steps[c.beam].state, c.token});
      }
    }
    alive = std::move(next);
  }
  for (auto& h : alive) finished.push_back(std::move(h.seq));
  finished.push_back(greedy_scored(model, memory, max_len));

  const ScoredSequence* best = &finished.front();
  for (const auto& s : finished)
    if (s.normalized() > best->normalized()) best = &s;
  return best->tokens;
}

std::vector<int> decode_beam(const CaptionModel& model, const Tensor& features,
                             std::size_t beam_size, std::size_t max_len) {
  NoGradScope no_grad;
  return decode_beam(model, prepare_memory(model, encode(model, features)), beam_size, max_len);
}

}  // namespace aoa
