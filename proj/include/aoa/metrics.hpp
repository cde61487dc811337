#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace aoa {

using Tokens = std::vector<std::string>;

// Lowercases, splits on whitespace and strips leading/trailing punctuation
// from each token; empty tokens are dropped.
Tokens tokenize(std::string_view sentence);
std::string detokenize(const Tokens& tokens);

// Multiset of n-grams of one order, keyed by space-joined tokens.
using NgramCounts = std::map<std::string, int>;
NgramCounts ngram_counts(const Tokens& tokens, std::size_t n);

// ---- BLEU -----------------------------------------------------------------

// Clipped n-gram matches and totals for one candidate, summable over a corpus.
struct BleuStats {
  std::array<double, 4> matches{};
  std::array<double, 4> totals{};
  double candidate_length = 0.0;
  double reference_length = 0.0;  // closest reference length

  BleuStats& operator+=(const BleuStats& o);
  // exp(mean_n ln p_n) * BP over the first max_n orders; 0 if any p_n is 0.
  double score(std::size_t max_n) const;
};

BleuStats bleu_stats(const Tokens& candidate, const std::vector<Tokens>& references);
double bleu(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t max_n = 4);

// ---- ROUGE-L --------------------------------------------------------------

std::size_t lcs_length(const Tokens& a, const Tokens& b);
// LCS F-measure with recall weight beta, maximized over references.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta = 1.2);

// ---- CIDEr-D --------------------------------------------------------------

// Document frequencies of 1..4-grams over a corpus of reference sets, one
// set per image.
class CiderCorpusStats {
 public:
  CiderCorpusStats() = default;
  static CiderCorpusStats build(const std::vector<std::vector<Tokens>>& references_per_image);

  std::size_t corpus_size() const { return corpus_size_; }
  bool empty() const { return corpus_size_ == 0; }
  // Number of images whose references contain the n-gram (0 if unseen).
  int document_frequency(const std::string& ngram) const;
  // ln(corpus_size / max(1, df)).
  double log_idf(const std::string& ngram) const;

 private:
  std::size_t corpus_size_ = 0;
  std::map<std::string, int> df_;
};

double cider_d(const Tokens& candidate, const std::vector<Tokens>& references,
               const CiderCorpusStats& stats, double sigma = 6.0);

// ---- corpus evaluation ----------------------------------------------------

struct EvalItem {
  std::string image_id;
  Tokens candidate;
  std::vector<Tokens> references;
};

struct CorpusReport {
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider_d = 0.0;
  std::size_t images = 0;

  // {"B1":..,"B4":..,"R":..,"C":..}
  std::string to_json() const;
};

// BLEU from corpus-level counts; ROUGE-L and CIDEr-D averaged over images.
// IDF statistics come from `stats` when given, otherwise from the items'
// references. Throws DataError listing every image without references.
CorpusReport corpus_scores(const std::vector<EvalItem>& items,
                           const CiderCorpusStats* stats = nullptr);

}  // namespace aoa
