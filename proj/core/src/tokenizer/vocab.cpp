#include "dprompt/tokenizer/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dprompt::tok {

namespace {
const char* const kReservedNames[kReserved] = {"<pad>", "<unk>", "<bos>"};
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

std::vector<std::pair<std::string, std::size_t>> ranked_counts(std::span<const std::string> corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& line : corpus) {
    for (auto& w : split_words(line)) ++counts[w];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

Vocab::Vocab() {
  for (const char* name : kReservedNames) add(name);
}

void Vocab::add(std::string word) {
  const auto id = static_cast<TokenId>(tokens_.size());
  index_.emplace(word, id);
  tokens_.push_back(std::move(word));
}

Vocab Vocab::build(std::span<const std::string> corpus, std::size_t max_size) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  auto ranked = ranked_counts(corpus);
  if (ranked.empty()) throw std::invalid_argument("build_vocab: corpus has no words");
  Vocab v;
  for (auto& [word, count] : ranked) {
    if (v.size() >= max_size) break;
    if (v.index_.count(word)) continue;  // literal "<unk>" etc. in the corpus
    v.add(word);
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  for (auto& t : tokens) {
    if (t.empty()) throw std::invalid_argument("vocab: empty token");
    if (v.index_.count(t)) throw std::invalid_argument("vocab: duplicate token '" + t + "'");
    v.add(std::move(t));
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const auto& w : words()) out << w << '\n';
}

TokenId Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view word) const { return index_.count(std::string(word)) > 0; }

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("decode: token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(id)];
}

TokenSequence Vocab::encode(std::string_view text) const {
  TokenSequence seq;
  for (const auto& w : split_words(text)) seq.ids.push_back(id(w));
  return seq;
}

std::string Vocab::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += token(ids[i]);
  }
  return out;
}

std::vector<std::string> top_k_frequent(std::span<const std::string> corpus, std::size_t k) {
  if (k == 0) throw std::invalid_argument("top_k_frequent: k must be at least 1");
  auto ranked = ranked_counts(corpus);
  if (ranked.empty()) throw std::invalid_argument("top_k_frequent: empty corpus");
  std::vector<std::string> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back(ranked[i % ranked.size()].first);
  return out;
}

}  // namespace dprompt::tok
