#include <algorithm>
#include <map>

#include "aoa/data.hpp"
#include "aoa/errors.hpp"

namespace aoa {

namespace {
const std::vector<std::string> kReservedNames = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() : words_(kReservedNames) {
  for (std::size_t i = 0; i < words_.size(); ++i) lookup_[words_[i]] = static_cast<int>(i);
}

Vocabulary Vocabulary::build(const std::vector<Tokens>& captions, std::size_t min_count) {
  if (captions.empty()) throw ContractError("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions)
    for (const auto& w : c) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, n] : counts) {
    if (n >= min_count && std::find(kReservedNames.begin(), kReservedNames.end(), w) == kReservedNames.end()) {
      kept.emplace_back(w, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [w, n] : kept) {
    v.lookup_[w] = static_cast<int>(v.words_.size());
    v.words_.push_back(w);
  }
  return v;
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
  if (words.size() < kReservedNames.size() ||
      !std::equal(kReservedNames.begin(), kReservedNames.end(), words.begin())) {
    throw DataError("vocabulary does not start with the reserved tokens");
  }
  Vocabulary v;
  for (std::size_t i = kReservedNames.size(); i < words.size(); ++i) {
    if (v.lookup_.count(words[i])) throw DataError("duplicate vocabulary word '" + words[i] + "'");
    v.lookup_[words[i]] = static_cast<int>(v.words_.size());
    v.words_.push_back(words[i]);
  }
  return v;
}

int Vocabulary::index(const std::string& word) const {
  auto it = lookup_.find(word);
  return it == lookup_.end() ? token::kUnk : it->second;
}

const std::string& Vocabulary::word(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= words_.size()) {
    throw ContractError("token " + std::to_string(index) + " outside vocabulary");
  }
  return words_[static_cast<std::size_t>(index)];
}

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 1);
  for (const auto& t : tokens) ids.push_back(index(t));
  ids.push_back(token::kEos);
  return ids;
}

Tokens Vocabulary::decode(const std::vector<int>& ids) const {
  Tokens out;
  for (int id : ids) {
    if (id == token::kEos) break;
    if (id == token::kPad || id == token::kBos) continue;
    out.push_back(word(id));
  }
  return out;
}

}  // namespace aoa
