#include "doctest.h"

#include <cmath>
#include <random>

#include "aoa/errors.hpp"
#include "aoa/metrics.hpp"
#include "oracles.hpp"

using namespace aoa;

TEST_SUITE("metrics") {
  TEST_CASE("tokenizer") {
    CHECK(tokenize("  A Red, circle.  ") == Tokens{"a", "red", "circle"});
    CHECK(tokenize("... !") == Tokens{});
    CHECK(tokenize("left-of") == Tokens{"left-of"});
    CHECK(detokenize({"a", "b"}) == "a b");
  }

  TEST_CASE("ngram counts") {
    auto c = ngram_counts({"a", "b", "a", "b"}, 2);
    CHECK(c.at("a b") == 2);
    CHECK(c.at("b a") == 1);
    CHECK(ngram_counts({"a"}, 2).empty());
  }

  TEST_CASE("identical sentences reach the maxima") {
    const Tokens s = {"two", "red", "circles", "and", "a", "blue", "square"};
    CHECK(bleu(s, {s}, 4) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(bleu(s, {s}, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rouge_l(s, {s}) == doctest::Approx(1.0).epsilon(1e-15));
    // Nonzero IDF: the sentence's n-grams must be absent from some image.
    auto stats = CiderCorpusStats::build({{s}, {{"a", "green", "star"}}, {{"three", "yellow", "stars"}}});
    CHECK(cider_d(s, {s}, stats) == doctest::Approx(10.0).epsilon(1e-12));
  }

  TEST_CASE("hand-computed cases") {
    // BLEU-1 with clipping: "the the the" vs "the cat": p1 = 1/3, BP = 1.
    CHECK(bleu({"the", "the", "the"}, {{"the", "cat"}}, 1) == doctest::Approx(1.0 / 3.0));
    // Brevity penalty exp(1 - 4/2).
    CHECK(bleu({"a", "b"}, {{"a", "b", "c", "d"}}, 1) == doctest::Approx(std::exp(-1.0)));
    CHECK(bleu({"x", "y"}, {{"a", "b"}}, 4) == 0.0);
    CHECK(lcs_length({"a", "b", "c", "d"}, {"a", "c", "d", "b"}) == 3);
    CHECK(rouge_l({}, {{"a"}}) == 0.0);
  }

  TEST_CASE("unseen-only corpus and empty candidates") {
    CiderCorpusStats empty;
    CHECK_THROWS_AS(cider_d({"a"}, {{"a"}}, empty), ConfigError);
    auto stats = CiderCorpusStats::build({{{"a", "b"}}});
    CHECK(cider_d({}, {{"a", "b"}}, stats) == 0.0);
    // Single-image corpus: every seen n-gram has zero IDF.
    CHECK(cider_d({"a", "b"}, {{"a", "b"}}, stats) == 0.0);
    CHECK(stats.document_frequency("a b") == 1);
    CHECK(stats.document_frequency("zz") == 0);
  }

  TEST_CASE("agrees with straight-line oracles on random cases") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<std::vector<Tokens>> corpus(6);
      for (auto& refs : corpus)
        for (int r = 0; r < 3; ++r) refs.push_back(oracle::random_sentence(rng, 3, 9));
      auto stats = CiderCorpusStats::build(corpus);
      const auto cand = oracle::random_sentence(rng, 1, 10);
      const auto& refs = corpus[static_cast<std::size_t>(trial % 6)];
      for (int n = 1; n <= 4; ++n) CHECK(std::abs(bleu(cand, refs, n) - oracle::bleu(cand, refs, n)) < 1e-12);
      CHECK(std::abs(rouge_l(cand, refs) - oracle::rouge_l(cand, refs)) < 1e-12);
      CHECK(std::abs(cider_d(cand, refs, stats) - oracle::cider_d(cand, refs, corpus)) < 1e-12);
    }
  }

  TEST_CASE("corpus scores") {
    std::vector<EvalItem> items = {{"a", {"a", "red", "circle"}, {{"a", "red", "circle"}}},
                                   {"b", {"a", "blue", "star"}, {{"two", "blue", "stars"}}}};
    auto r = corpus_scores(items);
    CHECK(r.images == 2);
    CHECK(r.bleu1 == doctest::Approx(4.0 / 6.0));
    CHECK(r.rouge_l > 0.0);
    CHECK(r.to_json().find("\"B1\"") != std::string::npos);
    items.push_back({"c", {"x"}, {}});
    items.push_back({"d", {"x"}, {}});
    try {
      corpus_scores(items);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("c, d") != std::string::npos);
    }
  }
}
