#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "aoa/errors.hpp"
#include "aoa/model.hpp"
#include "aoa/ops.hpp"

using namespace aoa;

namespace {

struct Fixture {
  CaptionModel model;
  Tensor features;
  DecoderMemory memory;

  explicit Fixture(std::uint64_t seed, DecoderScheme d = DecoderScheme::AoA) {
    ModelConfig c;
    c.feature_dim = 5;
    c.model_dim = 8;
    c.vocab_size = 9;
    c.decoder = d;
    model = CaptionModel::init(c, seed);
    // Larger output weights give peaked, varied distributions.
    Tensor wp = model.decoder().W_p;
    for (auto& x : wp.mutable_data()) x *= 6.0;
    std::mt19937_64 rng(seed + 100);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> v(4 * 5);
    for (auto& x : v) x = u(rng);
    features = Tensor::matrix(4, 5, v);
    NoGradScope ng;
    memory = prepare_memory(model, encode(model, features));
  }

  double normalized(const std::vector<int>& tokens, std::size_t max_len) const {
    NoGradScope ng;
    std::vector<int> t = tokens;
    const bool ended = tokens.size() < max_len;
    if (ended) t.push_back(token::kEos);
    return score_sequence(model, memory, t).item() / static_cast<double>(t.size());
  }
};

int argmax(const Tensor& t) {
  auto d = t.data();
  return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
}

}  // namespace

TEST_SUITE("decoding") {
  TEST_CASE("greedy follows the argmax chain and drops EOS") {
    Fixture f(1);
    const std::size_t max_len = 12;
    auto tokens = decode_greedy(f.model, f.memory, max_len);
    NoGradScope ng;
    DecoderState s = DecoderState::initial(f.model.config());
    int w = token::kBos;
    std::vector<int> manual;
    for (std::size_t t = 0; t < max_len; ++t) {
      auto out = decoder_step(f.model, s, w, f.memory);
      w = argmax(out.logits);
      if (w == token::kEos) break;
      manual.push_back(w);
      s = out.state;
    }
    CHECK(tokens == manual);
    CHECK(std::find(tokens.begin(), tokens.end(), token::kEos) == tokens.end());
    CHECK(decode_greedy(f.model, f.features, max_len) == tokens);
  }

  TEST_CASE("beam of one equals greedy and wider beams never score worse") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      Fixture f(seed, seed % 2 ? DecoderScheme::AoA : DecoderScheme::Base);
      const std::size_t max_len = 10;
      auto g = decode_greedy(f.model, f.memory, max_len);
      CHECK(decode_beam(f.model, f.memory, 1, max_len) == g);
      const double gs = f.normalized(g, max_len);
      for (std::size_t b : {2, 3, 5}) {
        auto beam = decode_beam(f.model, f.memory, b, max_len);
        CHECK(f.normalized(beam, max_len) >= gs - 1e-12);
      }
    }
  }

  TEST_CASE("sampling is reproducible and its log-probability matches scoring") {
    Fixture f(2);
    std::mt19937_64 r1(7), r2(7);
    Tape tape;
    auto a = decode_sample(f.model, f.memory, 10, r1);
    auto b = decode_sample(f.model, f.memory, 10, r2);
    CHECK(a.tokens == b.tokens);
    CHECK(a.log_prob.item() == b.log_prob.item());
    std::vector<int> t = a.tokens;
    if (a.ended) t.push_back(token::kEos);
    CHECK(score_sequence(f.model, f.memory, t).item() == doctest::Approx(a.log_prob.item()).epsilon(1e-12));
    CHECK(a.log_prob.requires_grad() == false);
    CHECK(tape.tracks(*a.log_prob.storage()));
  }

  TEST_CASE("sample frequencies follow the model distribution") {
    Fixture f(3);
    NoGradScope ng;
    auto out = decoder_step(f.model, DecoderState::initial(f.model.config()), token::kBos, f.memory);
    auto p = softmax_rows(out.logits).to_vector();
    std::vector<double> counts(p.size(), 0.0);
    std::mt19937_64 rng(11);
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
      auto s = decode_sample(f.model, f.memory, 1, rng);
      counts[s.ended ? token::kEos : static_cast<std::size_t>(s.tokens[0])] += 1;
    }
    for (std::size_t v = 0; v < p.size(); ++v) CHECK(std::abs(counts[v] / n - p[v]) < 0.02);
  }

  TEST_CASE("invalid arguments") {
    Fixture f(4);
    CHECK_THROWS_AS(decode_beam(f.model, f.memory, 0, 5), ContractError);
    CHECK_THROWS_AS(decode_greedy(f.model, f.memory, 0), ContractError);
    CHECK_THROWS_AS(score_sequence(f.model, f.memory, {}), ContractError);
  }

  TEST_CASE("traced decode records attention per step") {
    Fixture f(5);
    auto steps = decode_greedy_traced(f.model, f.features, 8);
    REQUIRE_FALSE(steps.empty());
    for (const auto& s : steps) {
      CHECK(s.trace.weights.rows() == 1);
      CHECK(s.trace.weights.cols() == 4);
      CHECK(s.trace.heads.size() == 2);
      CHECK(s.gate.defined());
    }
  }
}
