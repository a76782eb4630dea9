#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dprompt::tok {

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr std::size_t kReserved = 3;

/// Lowercases ASCII letters and splits on whitespace. Punctuation stays attached.
std::vector<std::string> split_words(std::string_view text);

struct TokenSequence {
  std::optional<std::string> utterance_id;
  std::vector<TokenId> ids;

  std::size_t length() const noexcept { return ids.size(); }
};

/// Word-level vocabulary with three reserved entries (PAD=0, UNK=1, BOS=2). Immutable once built.
class Vocab {
 public:
  /// Ranks words by frequency (lexicographic tie-break) and keeps at most max_size entries in
  /// total, reserved ids included.
  static Vocab build(std::span<const std::string> corpus, std::size_t max_size);
  /// Non-reserved tokens in id order (id = index + 3).
  static Vocab from_tokens(std::vector<std::string> tokens);

  /// One token per line, line i holds id i + 3.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  TokenId id(std::string_view word) const;
  bool contains(std::string_view word) const;
  const std::string& token(TokenId id) const;

  TokenSequence encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  /// Non-reserved entries in id order.
  std::span<const std::string> words() const noexcept {
    return std::span<const std::string>(tokens_).subspan(kReserved);
  }

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  Vocab();
  void add(std::string word);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// The k most frequent words (lexicographic tie-break). Cycles from the top when the corpus has
/// fewer than k distinct words.
std::vector<std::string> top_k_frequent(std::span<const std::string> corpus, std::size_t k);

/// (word, count) sorted by descending count, then lexicographically.
std::vector<std::pair<std::string, std::size_t>> ranked_counts(std::span<const std::string> corpus);

}  // namespace dprompt::tok
