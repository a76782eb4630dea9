#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dprompt/adaptation/domain_prompt.hpp"
#include "dprompt/model/adapters.hpp"
#include "dprompt/model/config.hpp"
#include "dprompt/model/parameters.hpp"
#include "dprompt/tokenizer/vocab.hpp"

namespace dprompt::lm {

/// Immutable backbone: config, weights, and the fingerprint of those weights.
template <typename T>
class Model {
 public:
  Model(ModelConfig config, Parameters<T> params);

  const ModelConfig& config() const noexcept { return config_; }
  const Parameters<T>& params() const noexcept { return params_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }

 private:
  ModelConfig config_;
  Parameters<T> params_;
  std::string fingerprint_;
};

template <typename T>
Model<T> init_model(const ModelConfig& config);

/// Per-layer keys and values of a prompt, computed once and reused for every hypothesis.
template <typename T>
struct PrefixCache {
  std::vector<Matrix<T>> keys, values;  // one k×d matrix per layer
  std::size_t length = 0;
  std::string fingerprint;
};

/// What to condition a forward pass on. At most one of prompt / cache may be set.
template <typename T>
struct Conditioning {
  const Matrix<T>* prompt = nullptr;
  const PrefixCache<T>* cache = nullptr;
  const DomainAdapters<T>* adapters = nullptr;
};

/// Next-token log-probabilities, one row per token: row t is log p(· | prefix, BOS, x_<t).
template <typename T>
Matrix<T> forward(const Model<T>& model, const tok::TokenSequence& tokens,
                  const Conditioning<T>& cond = {});

/// Same as forward() but on raw parameters; there is no fingerprint to check a cache against.
template <typename T>
Matrix<T> forward(const ModelConfig& config, const Parameters<T>& params,
                  std::span<const tok::TokenId> tokens, const Conditioning<T>& cond = {});

struct SequenceScore {
  double total_logprob = 0;  // Σ_t log p(x_t | context); the sequence loss is its negation
  double perplexity = 0;     // exp(−total / T)
  std::size_t tokens = 0;
};

/// Scores each token once; log-probabilities are floored at log(kProbabilityFloor).
template <typename T>
SequenceScore sequence_score(const Model<T>& model, const tok::TokenSequence& tokens,
                             const Conditioning<T>& cond = {});

/// exp(−Σ log p / Σ T) over a corpus.
template <typename T>
double corpus_perplexity(const Model<T>& model, std::span<const tok::TokenSequence> corpus,
                         const Conditioning<T>& cond = {});

template <typename T>
PrefixCache<T> build_prefix_cache(const Model<T>& model, const adapt::DomainPrompt<T>& prompt);
template <typename T>
PrefixCache<T> build_prefix_cache(const Model<T>& model, const Matrix<T>& embeddings);

enum class DecodeMode { greedy, top_k };

struct GenerationOptions {
  std::size_t max_new = 20;
  DecodeMode mode = DecodeMode::greedy;
  std::size_t top_k = 10;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

/// Continues seed_text. Reserved ids are never emitted. Stops after max_new tokens or when the
/// positional table is full. Returns the seed text followed by the generated words.
template <typename T>
std::string generate(const Model<T>& model, const tok::Vocab& vocab, std::string_view seed_text,
                     const GenerationOptions& options, const Conditioning<T>& cond = {});

}  // namespace dprompt::lm
