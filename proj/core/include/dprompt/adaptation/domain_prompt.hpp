#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "dprompt/numerics/matrix.hpp"

namespace dprompt::adapt {

enum class PromptInit { vocab, random };

inline const char* to_string(PromptInit m) { return m == PromptInit::vocab ? "vocab" : "random"; }

inline PromptInit parse_prompt_init(std::string_view s) {
  if (s == "vocab") return PromptInit::vocab;
  if (s == "random") return PromptInit::random;
  throw std::invalid_argument("unknown prompt init '" + std::string(s) + "' (expected vocab or random)");
}

/// k learned d-dimensional vectors prefixed to every sequence of one domain, bound to the
/// backbone they were trained against.
template <typename T>
struct DomainPrompt {
  std::string domain;
  num::Matrix<T> embeddings;  // k×d
  PromptInit init = PromptInit::vocab;
  std::uint64_t seed = 0;
  std::string base_fingerprint;
  long steps = 0;
  double dev_perplexity = 0.0;

  std::size_t length() const noexcept { return embeddings.rows(); }
  std::size_t width() const noexcept { return embeddings.cols(); }
};

}  // namespace dprompt::adapt
