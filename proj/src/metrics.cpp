#include "aoa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"

#include "aoa/errors.hpp"

namespace aoa {

Tokens tokenize(std::string_view sentence) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    std::size_t b = 0, e = cur.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(cur[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1]))) --e;
    if (e > b) out.push_back(cur.substr(b, e - b));
    cur.clear();
  };
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(const Tokens& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

NgramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < n; ++j) {
      key += ' ';
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

// ---- BLEU -----------------------------------------------------------------

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (std::size_t n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  candidate_length += o.candidate_length;
  reference_length += o.reference_length;
  return *this;
}

double BleuStats::score(std::size_t max_n) const {
  if (max_n < 1 || max_n > 4) throw ContractError("BLEU order must be 1..4");
  if (candidate_length <= 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (matches[n] <= 0.0 || totals[n] <= 0.0) return 0.0;
    log_sum += std::log(matches[n] / totals[n]);
  }
  const double bp = candidate_length >= reference_length
                        ? 1.0
                        : std::exp(1.0 - reference_length / candidate_length);
  return std::exp(log_sum / static_cast<double>(max_n)) * bp;
}

BleuStats bleu_stats(const Tokens& candidate, const std::vector<Tokens>& references) {
  if (references.empty()) throw ContractError("BLEU needs at least one reference");
  BleuStats s;
  s.candidate_length = static_cast<double>(candidate.size());
  // Closest reference length, ties resolved to the shorter one.
  std::size_t best = references.front().size();
  for (const auto& r : references) {
    const auto diff = [&](std::size_t len) {
      return len > candidate.size() ? len - candidate.size() : candidate.size() - len;
    };
    if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
  }
  s.reference_length = static_cast<double>(best);
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts cand = ngram_counts(candidate, n);
    NgramCounts max_ref;
    for (const auto& r : references)
      for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    double matched = 0.0, total = 0.0;
    for (const auto& [g, c] : cand) {
      total += c;
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matched += std::min(c, it->second);
    }
    s.matches[n - 1] = matched;
    s.totals[n - 1] = total;
  }
  return s;
}

double bleu(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t max_n) {
  return bleu_stats(candidate, references).score(max_n);
}

// ---- ROUGE-L --------------------------------------------------------------

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references, double beta) {
  if (references.empty()) throw ContractError("ROUGE-L needs at least one reference");
  double best = 0.0;
  if (candidate.empty()) return 0.0;
  const double b2 = beta * beta;
  for (const auto& r : references) {
    if (r.empty()) continue;
    const double lcs = static_cast<double>(lcs_length(candidate, r));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double rec = lcs / static_cast<double>(r.size());
    best = std::max(best, (1.0 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

// ---- CIDEr-D --------------------------------------------------------------

CiderCorpusStats CiderCorpusStats::build(const std::vector<std::vector<Tokens>>& references_per_image) {
  CiderCorpusStats s;
  s.corpus_size_ = references_per_image.size();
  for (const auto& refs : references_per_image) {
    std::set<std::string> seen;
    for (const auto& r : refs)
      for (std::size_t n = 1; n <= 4; ++n)
        for (const auto& kv : ngram_counts(r, n)) seen.insert(kv.first);
    for (const auto& g : seen) ++s.df_[g];
  }
  return s;
}

int CiderCorpusStats::document_frequency(const std::string& ngram) const {
  auto it = df_.find(ngram);
  return it == df_.end() ? 0 : it->second;
}

double CiderCorpusStats::log_idf(const std::string& ngram) const {
  const double df = std::max(1.0, static_cast<double>(document_frequency(ngram)));
  return std::log(static_cast<double>(corpus_size_)) - std::log(df);
}

namespace {

struct TfIdfVector {
  std::array<std::map<std::string, double>, 4> weights;
  std::array<double, 4> norms{};
  double length = 0.0;
};

TfIdfVector tfidf(const Tokens& tokens, const CiderCorpusStats& stats) {
  TfIdfVector v;
  v.length = static_cast<double>(tokens.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    double sq = 0.0;
    for (const auto& [g, c] : ngram_counts(tokens, n)) {
      const double w = static_cast<double>(c) * stats.log_idf(g);
      v.weights[n - 1][g] = w;
      sq += w * w;
    }
    v.norms[n - 1] = std::sqrt(sq);
  }
  return v;
}

}  // namespace

double cider_d(const Tokens& candidate, const std::vector<Tokens>& references,
               const CiderCorpusStats& stats, double sigma) {
  if (stats.empty()) throw ConfigError("CIDEr-D corpus statistics are empty");
  if (references.empty()) throw ContractError("CIDEr-D needs at least one reference");
  if (candidate.empty()) return 0.0;
  const TfIdfVector cv = tfidf(candidate, stats);
  double total = 0.0;
  for (const auto& ref : references) {
    const TfIdfVector rv = tfidf(ref, stats);
    const double delta = cv.length - rv.length;
    const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
    double per_ref = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
      if (cv.norms[n] == 0.0 || rv.norms[n] == 0.0) continue;
      double dot = 0.0;
      for (const auto& [g, w] : cv.weights[n]) {
        auto it = rv.weights[n].find(g);
        if (it != rv.weights[n].end()) dot += std::min(w, it->second) * it->second;
      }
      per_ref += penalty * dot / (cv.norms[n] * rv.norms[n]);
    }
    total += per_ref / 4.0;
  }
  return 10.0 * total / static_cast<double>(references.size());
}

// ---- corpus evaluation ----------------------------------------------------

std::string CorpusReport::to_json() const {
  nlohmann::ordered_json j;
  j["B1"] = bleu1;
  j["B4"] = bleu4;
  j["R"] = rouge_l;
  j["C"] = cider_d;
  return j.dump();
}

CorpusReport corpus_scores(const std::vector<EvalItem>& items, const CiderCorpusStats* stats) {
  std::vector<std::string> missing;
  for (const auto& it : items) {
    bool ok = !it.references.empty();
    for (const auto& r : it.references) ok = ok && !r.empty();
    if (!ok) missing.push_back(it.image_id);
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& m : missing) ids += (ids.empty() ? "" : ", ") + m;
    throw DataError("missing references for images: " + ids);
  }
  CiderCorpusStats local;
  if (!stats) {
    std::vector<std::vector<Tokens>> refs;
    refs.reserve(items.size());
    for (const auto& it : items) refs.push_back(it.references);
    local = CiderCorpusStats::build(refs);
    stats = &local;
  }
  CorpusReport report;
  report.images = items.size();
  if (items.empty()) return report;
  BleuStats acc;
  double r = 0.0, c = 0.0;
  for (const auto& it : items) {
    acc += bleu_stats(it.candidate, it.references);
    r += rouge_l(it.candidate, it.references);
    c += cider_d(it.candidate, it.references, *stats);
  }
  const double n = static_cast<double>(items.size());
  report.bleu1 = acc.score(1);
  report.bleu4 = acc.score(4);
  report.rouge_l = r / n;
  report.cider_d = c / n;
  return report;
}

}  // namespace aoa
